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

#include "deir/harness/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace deir::harness {

ExplorationTracker::ExplorationTracker(int streams)
    : episodic_(static_cast<std::size_t>(streams)), open_episode_(static_cast<std::size_t>(streams), -1) {
  if (streams <= 0) throw std::invalid_argument("ExplorationTracker: no streams");
}

void ExplorationTracker::observe(int stream, env::StateId id, bool episode_start) {
  const auto s = static_cast<std::size_t>(stream);
  if (episode_start || open_episode_[s] < 0) {
    episodic_[s].clear();
    open_episode_[s] = static_cast<int>(episodes_.size());
    episodes_.emplace_back();
  }
  const bool fresh_episode = episodic_[s].insert(id).second;
  const bool fresh_life = lifetime_.insert(id).second;
  Counts& e = episodes_[static_cast<std::size_t>(open_episode_[s])];
  ++e.steps;
  ++window_.steps;
  if (fresh_episode) {
    ++e.episodic_new;
    ++window_.episodic_new;
  }
  if (fresh_life) {
    ++e.lifelong_new;
    ++window_.lifelong_new;
  }
}

Efficiency ExplorationTracker::take() {
  Efficiency out;
  out.steps = window_.steps;
  if (window_.steps > 0) {
    out.episodic = static_cast<double>(window_.episodic_new) / static_cast<double>(window_.steps);
    out.lifelong = static_cast<double>(window_.lifelong_new) / static_cast<double>(window_.steps);
  }
  window_ = Counts{};
  // Only open episodes can still change; older counts are dropped.
  std::vector<Counts> kept;
  for (int& index : open_episode_) {
    if (index < 0) continue;
    kept.push_back(episodes_[static_cast<std::size_t>(index)]);
    index = static_cast<int>(kept.size()) - 1;
  }
  episodes_ = std::move(kept);
  return out;
}

void ExplorationTracker::restore(std::unordered_set<env::StateId> lifetime,
                                 std::vector<std::unordered_set<env::StateId>> episodic) {
  if (episodic.size() != episodic_.size()) throw std::invalid_argument("ExplorationTracker::restore: stream count");
  lifetime_ = std::move(lifetime);
  episodic_ = std::move(episodic);
  // Episodes in progress continue; their counts restart from the restore.
  episodes_.assign(episodic_.size(), Counts{});
  for (std::size_t s = 0; s < episodic_.size(); ++s) open_episode_[s] = static_cast<int>(s);
  window_ = Counts{};
}

Efficiency exploration_metrics(std::span<const env::StateId> ids, std::span<const std::uint8_t> starts,
                               std::unordered_set<env::StateId>& lifetime) {
  if (ids.size() != starts.size()) throw std::invalid_argument("exploration_metrics: stream and boundaries differ");
  ExplorationTracker tracker(1);
  tracker.restore(std::move(lifetime), {{}});
  for (std::size_t i = 0; i < ids.size(); ++i) tracker.observe(0, ids[i], starts[i] != 0);
  const Efficiency e = tracker.take();
  lifetime = tracker.lifetime();
  return e;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string metric_csv_header() {
  return "iteration,frames,episodes,mean_return,success_rate,episodic_eff,lifelong_eff,ir_raw_mean,ir_norm_mean,"
         "policy_loss,value_loss,entropy,clip_fraction,approx_kl,model_loss,model_accuracy";
}

std::string metric_csv_line(const MetricRow& r) {
  std::string out = std::to_string(r.iteration) + "," + std::to_string(r.frames) + "," + std::to_string(r.episodes);
  for (double v : {r.mean_return, r.success_rate, r.episodic_eff, r.lifelong_eff, r.ir_raw_mean, r.ir_norm_mean,
                   r.policy_loss, r.value_loss, r.entropy, r.clip_fraction, r.approx_kl, r.model_loss,
                   r.model_accuracy})
    out += "," + format_metric(v);
  return out;
}

std::string metric_csv(const std::vector<MetricRow>& rows) {
  std::string out = metric_csv_header() + "\n";
  for (const auto& r : rows) out += metric_csv_line(r) + "\n";
  return out;
}

namespace {

void mean_stderr(const std::vector<double>& xs, double& mean, double& stderr_out) {
  const auto n = static_cast<double>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  stderr_out = 0.0;
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  stderr_out = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::map<std::uint64_t, std::vector<MetricRow>>& runs) {
  std::map<std::int64_t, std::vector<const MetricRow*>> buckets;
  for (const auto& [seed, rows] : runs)
    for (const auto& r : rows) buckets[r.frames].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [frames, rows] : buckets) {
    AggregateRow a;
    a.frames = frames;
    a.seeds = static_cast<int>(rows.size());
    std::vector<double> ret, epi, life;
    for (const MetricRow* r : rows) {
      ret.push_back(r->mean_return);
      epi.push_back(r->episodic_eff);
      life.push_back(r->lifelong_eff);
    }
    mean_stderr(ret, a.return_mean, a.return_stderr);
    mean_stderr(epi, a.episodic_mean, a.episodic_stderr);
    mean_stderr(life, a.lifelong_mean, a.lifelong_stderr);
    out.push_back(a);
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "frames,seeds,return_mean,return_stderr,episodic_eff_mean,episodic_eff_stderr,lifelong_eff_mean,"
      "lifelong_eff_stderr\n";
  for (const auto& a : rows) {
    out += std::to_string(a.frames) + "," + std::to_string(a.seeds);
    for (double v : {a.return_mean, a.return_stderr, a.episodic_mean, a.episodic_stderr, a.lifelong_mean,
                     a.lifelong_stderr})
      out += "," + format_metric(v);
    out += "\n";
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

void emit_outputs(const std::string& dir, const std::map<std::uint64_t, std::vector<MetricRow>>& runs) {
  bool any = false;
  for (const auto& [seed, rows] : runs) any = any || !rows.empty();
  if (!any) throw std::runtime_error("emit_outputs: metric log is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir + "': " + ec.message());
  for (const auto& [seed, rows] : runs) {
    write_text_file(dir + "/seed_" + std::to_string(seed) + ".csv", metric_csv(rows));
    std::string timing = "iteration,frames,wall_seconds\n";
    for (const auto& r : rows)
      timing += std::to_string(r.iteration) + "," + std::to_string(r.frames) + "," + format_metric(r.wall_seconds) + "\n";
    write_text_file(dir + "/timing_" + std::to_string(seed) + ".csv", timing);
  }
  const auto agg = aggregate(runs);
  write_text_file(dir + "/aggregate.csv", aggregate_csv(agg));
  std::string curve = "# frames return_mean return_stderr\n";
  for (const auto& a : agg)
    curve += std::to_string(a.frames) + " " + format_metric(a.return_mean) + " " + format_metric(a.return_stderr) + "\n";
  write_text_file(dir + "/curve.dat", curve);
}

}  // namespace deir::harness
