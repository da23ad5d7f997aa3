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

#include <CLI11.hpp>
#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deir/env/grid_world.hpp"
#include "deir/harness/config.hpp"
#include "deir/harness/experiment.hpp"
#include "deir/harness/metrics.hpp"
#include "deir/harness/probe.hpp"

namespace {

using deir::harness::ExperimentConfig;
using deir::harness::MetricRow;

void print_row(std::uint64_t seed, const MetricRow& r) {
  std::fprintf(stderr, "seed %llu it %d frames %lld return %.3f success %.2f eff %.3f/%.3f ir %.4g model %.4g/%.3f %.0fs\n",
               static_cast<unsigned long long>(seed), r.iteration, static_cast<long long>(r.frames), r.mean_return,
               r.success_rate, r.episodic_eff, r.lifelong_eff, r.ir_raw_mean, r.model_loss, r.model_accuracy,
               r.wall_seconds);
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw deir::harness::ConfigError("--set expects key=value, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

std::vector<MetricRow> read_metric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != deir::harness::metric_csv_header()) throw std::runtime_error("'" + path + "' is not a metric CSV");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() < 16) throw std::runtime_error("short row in '" + path + "'");
    MetricRow r;
    r.iteration = static_cast<int>(v[0]);
    r.frames = static_cast<std::int64_t>(v[1]);
    r.episodes = static_cast<int>(v[2]);
    r.mean_return = v[3];
    r.success_rate = v[4];
    r.episodic_eff = v[5];
    r.lifelong_eff = v[6];
    rows.push_back(r);
  }
  return rows;
}

int run_train(const std::string& config_path, const std::vector<std::string>& sets, const std::string& seeds,
              long long frames, const std::string& out, const std::string& resume) {
  if (!resume.empty()) {
    auto exp = deir::harness::Experiment::load(resume);
    if (frames > 0) std::fprintf(stderr, "note: --frames is ignored when resuming; the stored budget applies\n");
    while (!exp->finished()) print_row(exp->seed(), exp->iterate());
    const std::string dir = out.empty() ? exp->config().out_dir : out;
    deir::harness::emit_outputs(dir, {{exp->seed(), exp->rows()}});
    exp->save(dir + "/seed_" + std::to_string(exp->seed()) + "/checkpoint");
    return 0;
  }
  ExperimentConfig cfg = deir::harness::default_config();
  if (!config_path.empty()) cfg = deir::harness::load_config_file(config_path);
  auto overrides = parse_overrides(sets);
  if (!seeds.empty()) overrides["run.seeds"] = seeds;
  if (frames > 0) overrides["run.frames"] = std::to_string(frames);
  if (!out.empty()) overrides["run.out"] = out;
  cfg = deir::harness::apply_settings(cfg, overrides);
  std::filesystem::create_directories(cfg.out_dir);
  deir::harness::write_text_file(cfg.out_dir + "/config.txt", deir::harness::to_text(cfg));
  deir::harness::run_experiment(cfg, print_row);
  return 0;
}

int run_render(const std::string& task, std::uint64_t seed, int view) {
  deir::env::EnvSpec spec;
  spec.task = deir::env::parse_task(task);
  spec.view_size = view;
  deir::env::Environment e(spec, seed);
  e.reset();
  std::cout << deir::env::render_ascii(e.world());
  const auto& obs = e.raw();
  std::cout << "\nobservation (object index per cell):\n";
  for (int y = 0; y < obs.view; ++y) {
    for (int x = 0; x < obs.view; ++x) std::cout << ' ' << static_cast<int>(obs.cell(x, y).object);
    std::cout << '\n';
  }
  return 0;
}

int run_aggregate(const std::string& dir) {
  std::map<std::uint64_t, std::vector<MetricRow>> runs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0 || entry.path().extension() != ".csv") continue;
    runs[std::stoull(name.substr(5))] = read_metric_csv(entry.path().string());
  }
  if (runs.empty()) throw std::runtime_error("no seed_<n>.csv files in '" + dir + "'");
  const auto agg = deir::harness::aggregate(runs);
  deir::harness::write_text_file(dir + "/aggregate.csv", deir::harness::aggregate_csv(agg));
  std::cout << deir::harness::aggregate_csv(agg);
  return 0;
}

int run_probe(const std::vector<std::string>& sets, std::uint64_t seed, long long frames, int episodes) {
  auto overrides = parse_overrides(sets);
  if (frames > 0) overrides["run.frames"] = std::to_string(frames);
  const ExperimentConfig cfg = deir::harness::apply_settings(deir::harness::default_config(), overrides);
  const auto c = deir::harness::compare_probes(cfg, seed, episodes, deir::harness::ProbeConfig{});
  std::printf("task,trained,random\n");
  for (std::size_t k = 0; k < deir::harness::kProbeTasks.size(); ++k)
    std::printf("%s,%.6f,%.6f\n", std::string(deir::harness::probe_task_name(deir::harness::kProbeTasks[k])).c_str(),
                c.trained.validation_loss[k], c.random.validation_loss[k]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensors on the heap between minibatches.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"Episodic intrinsic-reward exploration lab"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train agents and write metric CSVs");
  std::string config_path, seeds, out, resume;
  std::vector<std::string> sets;
  long long frames = 0;
  train->add_option("-c,--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  train->add_option("-s,--set", sets, "Override as key=value (repeatable)");
  train->add_option("--seed", seeds, "Seed or comma-separated seeds");
  train->add_option("--frames", frames, "Frame budget per seed");
  train->add_option("--out", out, "Output directory");
  train->add_option("--resume", resume, "Continue from a checkpoint directory")->check(CLI::ExistingDirectory);

  auto* render = app.add_subcommand("render", "Print a generated layout and the first observation");
  std::string task = "MultiRoomN2S4";
  std::uint64_t render_seed = 0;
  int view = 7;
  render->add_option("--task", task, "Task name");
  render->add_option("--seed", render_seed, "Layout seed");
  render->add_option("--view", view, "View size (3 or 7)");

  auto* agg = app.add_subcommand("aggregate", "Recompute aggregate.csv from per-seed CSVs");
  std::string agg_dir;
  agg->add_option("dir", agg_dir, "Directory holding seed_<n>.csv")->required()->check(CLI::ExistingDirectory);

  auto* probe = app.add_subcommand("probe", "Train an encoder, then compare state probes against a random encoder");
  std::vector<std::string> probe_sets;
  std::uint64_t probe_seed = 0;
  long long probe_frames = 0;
  int probe_episodes = 200;
  probe->add_option("-s,--set", probe_sets, "Override as key=value (repeatable)");
  probe->add_option("--seed", probe_seed, "Seed");
  probe->add_option("--frames", probe_frames, "Encoder training frames");
  probe->add_option("--episodes", probe_episodes, "Scripted probe episodes");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return run_train(config_path, sets, seeds, frames, out, resume);
    if (*render) return run_render(task, render_seed, view);
    if (*agg) return run_aggregate(agg_dir);
    if (*probe) return run_probe(probe_sets, probe_seed, probe_frames, probe_episodes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
