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

#include "deir/novelty/episodic_memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace deir::novelty {

EpisodicMemory::EpisodicMemory(int obs_dim, int traj_dim) : obs_dim_(obs_dim), traj_dim_(traj_dim) {
  if (obs_dim <= 0 || traj_dim <= 0) throw std::invalid_argument("EpisodicMemory: dimensions must be positive");
}

void EpisodicMemory::append(std::span<const float> e_obs, std::span<const float> e_traj) {
  if (e_obs.size() != static_cast<std::size_t>(obs_dim_) || e_traj.size() != static_cast<std::size_t>(traj_dim_))
    throw std::invalid_argument("EpisodicMemory::append: embedding size mismatch");
  const std::size_t need_obs = (count_ + 1) * static_cast<std::size_t>(obs_dim_);
  if (obs_.size() < need_obs) {
    obs_.resize(std::max(need_obs, obs_.size() * 2));
    traj_.resize(obs_.size() / static_cast<std::size_t>(obs_dim_) * static_cast<std::size_t>(traj_dim_));
  }
  std::copy(e_obs.begin(), e_obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(count_ * obs_dim_));
  std::copy(e_traj.begin(), e_traj.end(), traj_.begin() + static_cast<std::ptrdiff_t>(count_ * traj_dim_));
  ++count_;
}

std::span<const float> EpisodicMemory::obs(std::size_t i) const {
  return {obs_.data() + i * static_cast<std::size_t>(obs_dim_), static_cast<std::size_t>(obs_dim_)};
}

std::span<const float> EpisodicMemory::traj(std::size_t i) const {
  return {traj_.data() + i * static_cast<std::size_t>(traj_dim_), static_cast<std::size_t>(traj_dim_)};
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    d += diff * diff;
  }
  return d;
}

double EpisodicMemory::scaled_novelty(std::span<const float> e_obs_next, std::span<const float> e_traj_t,
                                      double epsilon) const {
  if (e_obs_next.size() != static_cast<std::size_t>(obs_dim_) ||
      e_traj_t.size() != static_cast<std::size_t>(traj_dim_))
    throw std::invalid_argument("EpisodicMemory: query size mismatch");
  if (count_ == 0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count_; ++i) {
    const double num = squared_distance(obs(i), e_obs_next);
    const double den = std::sqrt(squared_distance(traj(i), e_traj_t)) + epsilon;
    best = std::min(best, num / den);
  }
  return best;
}

double EpisodicMemory::plain_novelty(std::span<const float> e_obs_next) const {
  if (e_obs_next.size() != static_cast<std::size_t>(obs_dim_))
    throw std::invalid_argument("EpisodicMemory: query size mismatch");
  if (count_ == 0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count_; ++i) best = std::min(best, squared_distance(obs(i), e_obs_next));
  return best;
}

double intrinsic_reward(std::span<const float> e_obs_next, std::span<const float> e_traj_t, EpisodicMemory& memory,
                        bool terminal, double epsilon) {
  const double r = memory.scaled_novelty(e_obs_next, e_traj_t, epsilon);
  if (terminal)
    memory.clear();
  else
    memory.append(e_obs_next, e_traj_t);
  return r;
}

double plain_novelty_reward(std::span<const float> e_obs_next, std::span<const float> e_traj_t,
                            EpisodicMemory& memory, bool terminal) {
  const double r = memory.plain_novelty(e_obs_next);
  if (terminal)
    memory.clear();
  else
    memory.append(e_obs_next, e_traj_t);
  return r;
}

}  // namespace deir::novelty
