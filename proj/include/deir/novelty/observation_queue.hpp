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

#ifndef DEIR_NOVELTY_OBSERVATION_QUEUE_HPP_
#define DEIR_NOVELTY_OBSERVATION_QUEUE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace deir::novelty {

/// Bounded FIFO of recent novel observations, the pool that negatives for
/// the discriminator are drawn from. Each slot keeps the network input and
/// the noiseless integer observation used for equality tests.
class ObservationQueue {
 public:
  ObservationQueue(std::size_t max_size, int obs_size, double smoothing = 0.9);

  std::size_t size() const { return size_; }
  std::size_t max_size() const { return max_size_; }
  int obs_size() const { return obs_size_; }
  bool empty() const { return size_ == 0; }
  double running_average() const { return average_; }
  double smoothing() const { return smoothing_; }

  /// Folds r into the running average, then inserts when the queue is empty
  /// or r is at least the average. Returns whether the observation went in.
  bool update(std::span<const float> input, std::span<const std::uint8_t> raw, double r);

  /// Element i counted from the oldest.
  std::span<const float> input(std::size_t i) const;
  std::span<const std::uint8_t> raw(std::size_t i) const;

  /// Up to two uniform draws; the first whose raw observation differs from
  /// `true_next` is returned as an index (oldest = 0).
  std::optional<std::size_t> sample_negative(std::span<const std::uint8_t> true_next, std::mt19937_64& rng) const;

  /// Restores the exact state captured by a checkpoint.
  void restore(double average, std::vector<float> inputs, std::vector<std::uint8_t> raws);
  /// Contents ordered oldest first.
  std::vector<float> inputs_in_order() const;
  std::vector<std::uint8_t> raws_in_order() const;

 private:
  std::size_t slot(std::size_t i) const { return (head_ + i) % max_size_; }

  std::size_t max_size_;
  int obs_size_;
  double smoothing_;
  double average_ = 0.0;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::vector<float> inputs_;
  std::vector<std::uint8_t> raws_;
};

}  // namespace deir::novelty

#endif  // DEIR_NOVELTY_OBSERVATION_QUEUE_HPP_
