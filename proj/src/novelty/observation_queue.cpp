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

#include "deir/novelty/observation_queue.hpp"

#include <algorithm>
#include <stdexcept>

namespace deir::novelty {

ObservationQueue::ObservationQueue(std::size_t max_size, int obs_size, double smoothing)
    : max_size_(max_size), obs_size_(obs_size), smoothing_(smoothing) {
  if (max_size == 0 || obs_size <= 0) throw std::invalid_argument("ObservationQueue: empty capacity");
  if (smoothing < 0.0 || smoothing > 1.0) throw std::invalid_argument("ObservationQueue: smoothing outside [0, 1]");
}

bool ObservationQueue::update(std::span<const float> input, std::span<const std::uint8_t> raw, double r) {
  if (input.size() != static_cast<std::size_t>(obs_size_) || raw.size() != static_cast<std::size_t>(obs_size_))
    throw std::invalid_argument("ObservationQueue::update: observation size mismatch");
  average_ = smoothing_ * average_ + (1.0 - smoothing_) * r;
  if (size_ != 0 && r < average_) return false;
  // Storage grows lazily up to the capacity.
  const auto width = static_cast<std::size_t>(obs_size_);
  std::size_t target;
  if (size_ < max_size_) {
    target = slot(size_);
    ++size_;
  } else {
    target = head_;
    head_ = (head_ + 1) % max_size_;
  }
  if (inputs_.size() < (target + 1) * width) {
    const std::size_t slots = std::min(max_size_, std::max<std::size_t>(target + 1, inputs_.size() / width * 2));
    inputs_.resize(slots * width);
    raws_.resize(slots * width);
  }
  std::copy(input.begin(), input.end(), inputs_.begin() + static_cast<std::ptrdiff_t>(target * width));
  std::copy(raw.begin(), raw.end(), raws_.begin() + static_cast<std::ptrdiff_t>(target * width));
  return true;
}

std::span<const float> ObservationQueue::input(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ObservationQueue::input");
  return {inputs_.data() + slot(i) * static_cast<std::size_t>(obs_size_), static_cast<std::size_t>(obs_size_)};
}

std::span<const std::uint8_t> ObservationQueue::raw(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ObservationQueue::raw");
  return {raws_.data() + slot(i) * static_cast<std::size_t>(obs_size_), static_cast<std::size_t>(obs_size_)};
}

std::optional<std::size_t> ObservationQueue::sample_negative(std::span<const std::uint8_t> true_next,
                                                             std::mt19937_64& rng) const {
  if (size_ == 0) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::size_t i = pick(rng);
    const auto candidate = raw(i);
    if (!std::equal(candidate.begin(), candidate.end(), true_next.begin(), true_next.end())) return i;
  }
  return std::nullopt;
}

void ObservationQueue::restore(double average, std::vector<float> inputs, std::vector<std::uint8_t> raws) {
  const auto width = static_cast<std::size_t>(obs_size_);
  if (inputs.size() % width != 0 || raws.size() != inputs.size() || inputs.size() / width > max_size_)
    throw std::invalid_argument("ObservationQueue::restore: inconsistent contents");
  average_ = average;
  size_ = inputs.size() / width;
  head_ = 0;
  inputs_ = std::move(inputs);
  raws_ = std::move(raws);
}

std::vector<float> ObservationQueue::inputs_in_order() const {
  std::vector<float> out;
  out.reserve(size_ * static_cast<std::size_t>(obs_size_));
  for (std::size_t i = 0; i < size_; ++i) {
    const auto row = input(i);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

std::vector<std::uint8_t> ObservationQueue::raws_in_order() const {
  std::vector<std::uint8_t> out;
  out.reserve(size_ * static_cast<std::size_t>(obs_size_));
  for (std::size_t i = 0; i < size_; ++i) {
    const auto row = raw(i);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace deir::novelty
