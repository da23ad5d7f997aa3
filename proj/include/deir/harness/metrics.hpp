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

#ifndef DEIR_HARNESS_METRICS_HPP_
#define DEIR_HARNESS_METRICS_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "deir/env/grid_world.hpp"

namespace deir::harness {

struct Efficiency {
  double episodic = 0.0;
  double lifelong = 0.0;
  std::int64_t steps = 0;
};

/// Counts steps that land in a full state not seen earlier in the episode
/// and not seen ever. One episodic set per stream, one shared lifetime set.
class ExplorationTracker {
 public:
  explicit ExplorationTracker(int streams = 1);

  /// `episode_start` resets the stream's episodic set before counting.
  void observe(int stream, env::StateId id, bool episode_start);
  /// Totals since the last take(); resets the counters but not the sets.
  Efficiency take();

  struct Counts {
    std::int64_t steps = 0;
    std::int64_t episodic_new = 0;
    std::int64_t lifelong_new = 0;
  };
  /// Counts for every episode completed or in progress, in start order.
  const std::vector<Counts>& episodes() const { return episodes_; }

  const std::unordered_set<env::StateId>& lifetime() const { return lifetime_; }
  const std::unordered_set<env::StateId>& episodic(int stream) const { return episodic_.at(static_cast<std::size_t>(stream)); }
  /// Replaces the sets; every stream continues its current episode.
  void restore(std::unordered_set<env::StateId> lifetime, std::vector<std::unordered_set<env::StateId>> episodic);

 private:
  std::unordered_set<env::StateId> lifetime_;
  std::vector<std::unordered_set<env::StateId>> episodic_;
  std::vector<int> open_episode_;
  std::vector<Counts> episodes_;
  Counts window_;
};

/// Single-stream helper: `starts[i]` marks ids[i] as the first state of an
/// episode; `lifetime` carries over between calls.
Efficiency exploration_metrics(std::span<const env::StateId> ids, std::span<const std::uint8_t> starts,
                               std::unordered_set<env::StateId>& lifetime);

struct MetricRow {
  int iteration = 0;
  std::int64_t frames = 0;
  int episodes = 0;
  double mean_return = 0.0;  // windowed over the most recent episodes
  double success_rate = 0.0;
  double episodic_eff = 0.0;
  double lifelong_eff = 0.0;
  double ir_raw_mean = 0.0;
  double ir_norm_mean = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double model_loss = 0.0;
  double model_accuracy = 0.0;
  double wall_seconds = 0.0;  // kept out of the metric CSV
};

/// Six significant digits.
std::string format_metric(double v);

std::string metric_csv_header();
std::string metric_csv_line(const MetricRow& row);
std::string metric_csv(const std::vector<MetricRow>& rows);

struct AggregateRow {
  std::int64_t frames = 0;
  int seeds = 0;
  double return_mean = 0.0;
  double return_stderr = 0.0;
  double episodic_mean = 0.0;
  double episodic_stderr = 0.0;
  double lifelong_mean = 0.0;
  double lifelong_stderr = 0.0;
};

/// Mean and standard error (sample std / sqrt(n)) across seeds per frame count.
std::vector<AggregateRow> aggregate(const std::map<std::uint64_t, std::vector<MetricRow>>& runs);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

/// Writes seed_<s>.csv, timing_<s>.csv, aggregate.csv and curve.dat under
/// `dir`. Throws std::runtime_error on an empty log or a failed write.
void emit_outputs(const std::string& dir, const std::map<std::uint64_t, std::vector<MetricRow>>& runs);

/// Writes text to path through a temporary file and a rename.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace deir::harness

#endif  // DEIR_HARNESS_METRICS_HPP_
