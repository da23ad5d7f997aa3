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

#include "deir/nn/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace deir::nn {
namespace {

constexpr char kMagic[8] = {'D', 'E', 'I', 'R', 'B', 'L', 'B', '1'};
constexpr std::uint64_t kMaxName = 4096;
constexpr std::uint64_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw BlobError("truncated blob header");
  return v;
}

}  // namespace

void write_blob(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, sizeof kMagic);
  put_u64(out, tensors.size());
  for (const auto& t : tensors) {
    std::uint64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.data.size()) throw BlobError("tensor '" + t.name + "' shape does not match its data");
    put_u64(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, d);
    put_u64(out, count);
  }
  for (const auto& t : tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
  if (!out) throw BlobError("blob write failed");
}

std::vector<NamedTensor> read_blob(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw BlobError("bad blob magic");
  const std::uint64_t n = get_u64(in);
  if (n > (1u << 20)) throw BlobError("implausible tensor count");
  std::vector<NamedTensor> tensors(n);
  for (auto& t : tensors) {
    const std::uint64_t len = get_u64(in);
    if (len > kMaxName) throw BlobError("implausible tensor name length");
    t.name.resize(len);
    if (!in.read(t.name.data(), static_cast<std::streamsize>(len))) throw BlobError("truncated tensor name");
    const std::uint64_t rank = get_u64(in);
    if (rank > kMaxRank) throw BlobError("implausible tensor rank");
    std::uint64_t count = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      t.shape.push_back(get_u64(in));
      count *= t.shape.back();
    }
    if (get_u64(in) != count) throw BlobError("tensor '" + t.name + "' element count disagrees with its shape");
    if (count > (1ull << 32)) throw BlobError("implausible tensor size");
    t.data.resize(count);
  }
  for (auto& t : tensors)
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4)))
      throw BlobError("truncated payload for tensor '" + t.name + "'");
  if (in.peek() != std::char_traits<char>::eof()) throw BlobError("trailing bytes after blob");
  return tensors;
}

std::string encode_blob(const std::vector<NamedTensor>& tensors) {
  std::ostringstream out(std::ios::binary);
  write_blob(out, tensors);
  return out.str();
}

std::vector<NamedTensor> decode_blob(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_blob(in);
}

template <typename Scalar>
std::vector<NamedTensor> export_registry(const Registry<Scalar>& r, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto* p : r.parameters) out.push_back(to_named(prefix + p->name, p->value));
  for (const auto& b : r.buffers) {
    NamedTensor t{prefix + b.name, {1, static_cast<std::uint64_t>(b.size)}, {}};
    for (Index i = 0; i < b.size; ++i) t.data.push_back(static_cast<float>(b.data[i]));
    out.push_back(std::move(t));
  }
  return out;
}

template <typename Scalar>
void import_registry(Registry<Scalar>& r, const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t);
  auto find = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(prefix + name);
    if (it == by_name.end()) throw BlobError("missing tensor '" + prefix + name + "'");
    return *it->second;
  };
  for (const auto* p : r.parameters) {
    const NamedTensor& t = find(p->name);
    if (t.shape.size() != 2 || static_cast<Index>(t.shape[0]) != p->value.rows() ||
        static_cast<Index>(t.shape[1]) != p->value.cols())
      throw BlobError("tensor '" + t.name + "' has the wrong shape");
  }
  for (const auto& b : r.buffers)
    if (static_cast<Index>(find(b.name).data.size()) != b.size) throw BlobError("buffer '" + b.name + "' size mismatch");
  for (auto* p : r.parameters) from_named(find(p->name), p->value);
  for (auto& b : r.buffers) {
    const NamedTensor& t = find(b.name);
    for (Index i = 0; i < b.size; ++i) b.data[i] = static_cast<Scalar>(t.data[static_cast<std::size_t>(i)]);
  }
}

template <typename Scalar>
std::vector<NamedTensor> export_adam(const AdamState<Scalar>& state, const Registry<Scalar>& r,
                                     const std::string& prefix) {
  if (state.m.size() != r.parameters.size()) throw ShapeError("export_adam: optimizer does not match registry");
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < r.parameters.size(); ++i) {
    out.push_back(to_named(prefix + "m." + r.parameters[i]->name, state.m[i]));
    out.push_back(to_named(prefix + "v." + r.parameters[i]->name, state.v[i]));
  }
  return out;
}

template <typename Scalar>
void import_adam(AdamState<Scalar>& state, const Registry<Scalar>& r, const std::vector<NamedTensor>& tensors,
                 const std::string& prefix) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t);
  std::vector<const NamedTensor*> m(r.parameters.size());
  std::vector<const NamedTensor*> v(r.parameters.size());
  for (std::size_t i = 0; i < r.parameters.size(); ++i) {
    const auto* p = r.parameters[i];
    for (auto [slot, tag] : {std::pair{&m, "m."}, std::pair{&v, "v."}}) {
      auto it = by_name.find(prefix + tag + p->name);
      if (it == by_name.end()) throw BlobError("missing optimizer tensor '" + prefix + tag + p->name + "'");
      const NamedTensor& t = *it->second;
      if (t.shape.size() != 2 || static_cast<Index>(t.shape[0]) != p->value.rows() ||
          static_cast<Index>(t.shape[1]) != p->value.cols())
        throw BlobError("optimizer tensor '" + t.name + "' has the wrong shape");
      (*slot)[i] = &t;
    }
  }
  state.m.resize(r.parameters.size());
  state.v.resize(r.parameters.size());
  for (std::size_t i = 0; i < r.parameters.size(); ++i) {
    state.m[i].resize(r.parameters[i]->value.rows(), r.parameters[i]->value.cols());
    state.v[i].resize(r.parameters[i]->value.rows(), r.parameters[i]->value.cols());
    from_named(*m[i], state.m[i]);
    from_named(*v[i], state.v[i]);
  }
}

template std::vector<NamedTensor> export_adam<float>(const AdamState<float>&, const Registry<float>&,
                                                     const std::string&);
template void import_adam<float>(AdamState<float>&, const Registry<float>&, const std::vector<NamedTensor>&,
                                 const std::string&);
template std::vector<NamedTensor> export_registry<float>(const Registry<float>&, const std::string&);
template std::vector<NamedTensor> export_registry<double>(const Registry<double>&, const std::string&);
template void import_registry<float>(Registry<float>&, const std::vector<NamedTensor>&, const std::string&);
template void import_registry<double>(Registry<double>&, const std::vector<NamedTensor>&, const std::string&);

}  // namespace deir::nn
