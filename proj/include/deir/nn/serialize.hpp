// Copyright 2026 The DEIR Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DEIR_NN_SERIALIZE_HPP_
#define DEIR_NN_SERIALIZE_HPP_

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "deir/nn/adam.hpp"
#include "deir/nn/layers.hpp"

namespace deir::nn {

// Blob layout, all integers u64 little-endian:
//   magic "DEIRBLB1" | tensor count | per tensor: name length, name bytes,
//   rank, dims..., element count | then every tensor's f32 LE payload in order.

class BlobError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_blob(std::ostream& out, const std::vector<NamedTensor>& tensors);
/// Parses the whole blob before returning; throws BlobError on any defect.
std::vector<NamedTensor> read_blob(std::istream& in);

std::string encode_blob(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_blob(const std::string& bytes);

/// Parameters then buffers of a registry, in registration order.
template <typename Scalar>
std::vector<NamedTensor> export_registry(const Registry<Scalar>& r, const std::string& prefix = "");

/// Inverse of export_registry; validates everything before writing any value.
template <typename Scalar>
void import_registry(Registry<Scalar>& r, const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

/// First and second moments of an optimizer, named after the parameters of
/// `r`. The step counter is not included.
template <typename Scalar>
std::vector<NamedTensor> export_adam(const AdamState<Scalar>& state, const Registry<Scalar>& r,
                                     const std::string& prefix);

template <typename Scalar>
void import_adam(AdamState<Scalar>& state, const Registry<Scalar>& r, const std::vector<NamedTensor>& tensors,
                 const std::string& prefix);

}  // namespace deir::nn

#endif  // DEIR_NN_SERIALIZE_HPP_
