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

#include "deir/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "deir/nn/serialize.hpp"

namespace deir::harness {

namespace {

using json = nlohmann::json;

constexpr int kCheckpointVersion = 1;
constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kActStream = 3;
constexpr std::uint64_t kTrainStream = 4;

ExperimentConfig prepared(ExperimentConfig cfg) {
  validate(cfg);
  cfg.policy.encoder.view = cfg.env.view_size;
  cfg.novelty.model.encoder.view = cfg.env.view_size;
  if (cfg.novelty.method == novelty::Method::NoIntrinsic) cfg.ppo.beta = 0.0;
  cfg.novelty.trace = cfg.trace_ir;
  return cfg;
}

std::vector<env::Environment> make_envs(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<env::Environment> envs;
  envs.reserve(static_cast<std::size_t>(cfg.n_workers));
  for (int w = 0; w < cfg.n_workers; ++w)
    envs.emplace_back(cfg.env, derive_seed(seed, kEnvStream, static_cast<std::uint64_t>(w)));
  return envs;
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void rng_restore(std::mt19937_64& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (!in) throw CheckpointError("checkpoint: malformed RNG state");
}

json row_json(const MetricRow& r) {
  return json{{"iteration", r.iteration},       {"frames", r.frames},
              {"episodes", r.episodes},         {"mean_return", r.mean_return},
              {"success_rate", r.success_rate}, {"episodic_eff", r.episodic_eff},
              {"lifelong_eff", r.lifelong_eff}, {"ir_raw_mean", r.ir_raw_mean},
              {"ir_norm_mean", r.ir_norm_mean}, {"policy_loss", r.policy_loss},
              {"value_loss", r.value_loss},     {"entropy", r.entropy},
              {"clip_fraction", r.clip_fraction}, {"approx_kl", r.approx_kl},
              {"model_loss", r.model_loss},     {"model_accuracy", r.model_accuracy},
              {"wall_seconds", r.wall_seconds}};
}

MetricRow row_from(const json& j) {
  MetricRow r;
  r.iteration = j.at("iteration").get<int>();
  r.frames = j.at("frames").get<std::int64_t>();
  r.episodes = j.at("episodes").get<int>();
  r.mean_return = j.at("mean_return").get<double>();
  r.success_rate = j.at("success_rate").get<double>();
  r.episodic_eff = j.at("episodic_eff").get<double>();
  r.lifelong_eff = j.at("lifelong_eff").get<double>();
  r.ir_raw_mean = j.at("ir_raw_mean").get<double>();
  r.ir_norm_mean = j.at("ir_norm_mean").get<double>();
  r.policy_loss = j.at("policy_loss").get<double>();
  r.value_loss = j.at("value_loss").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.clip_fraction = j.at("clip_fraction").get<double>();
  r.approx_kl = j.at("approx_kl").get<double>();
  r.model_loss = j.at("model_loss").get<double>();
  r.model_accuracy = j.at("model_accuracy").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

double mean_of(const std::vector<float>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (float x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Experiment::Experiment(const ExperimentConfig& cfg, std::uint64_t seed)
    : cfg_(prepared(cfg)),
      seed_(seed),
      envs_(make_envs(cfg_, seed)),
      init_rng_(derive_seed(seed, kInitStream)),
      policy_(cfg_.policy, init_rng_),
      novelty_(cfg_.novelty, envs_.front().input_size(), cfg_.n_workers, init_rng_),
      buffer_(cfg_.n_workers, cfg_.n_steps, envs_.front().input_size(), policy_.hidden_size(), novelty_.hidden_size()),
      act_rng_(derive_seed(seed, kActStream)),
      train_rng_(derive_seed(seed, kTrainStream)),
      tracker_(cfg_.n_workers) {
  nn::Registry<float> params;
  policy_.collect(params);
  policy_opt_ = nn::AdamState<float>(cfg_.ppo.adam, params);
  adv_norm_.momentum = cfg_.ppo.adv_momentum;
}

bool Experiment::finished() const {
  if (state_.frames >= cfg_.total_frames) return true;
  if (cfg_.stop_return <= 0.0 || recent_returns_.size() < static_cast<std::size_t>(cfg_.return_window)) return false;
  return !rows_.empty() && rows_.back().mean_return >= cfg_.stop_return;
}

const MetricRow& Experiment::iterate() {
  const auto t0 = std::chrono::steady_clock::now();
  if (!state_.started) ppo::start_rollouts(envs_, state_, policy_.hidden_size(), &novelty_);
  novelty_.clear_trace();
  ppo::collect_rollouts(policy_, envs_, state_, buffer_, &novelty_, act_rng_);
  novelty_.normalize(buffer_);
  ppo::prepare_update(buffer_, cfg_.ppo, adv_norm_);
  const ppo::LossStats loss = ppo::ppo_update(policy_, policy_opt_, buffer_, cfg_.ppo, train_rng_);
  const novelty::ModelStats model = novelty_.train(buffer_, train_rng_);

  for (int k = 0; k < buffer_.n_steps; ++k)
    for (int w = 0; w < buffer_.n_workers; ++w) {
      const auto i = static_cast<std::size_t>(buffer_.index(w, k));
      tracker_.observe(w, state_.state_ids[i], buffer_.episode_starts[i] != 0);
    }
  const Efficiency eff = tracker_.take();
  for (const auto& ep : state_.finished) {
    recent_returns_.push_back(ep.episode_return);
    recent_success_.push_back(ep.reached_goal ? 1 : 0);
    while (recent_returns_.size() > static_cast<std::size_t>(cfg_.return_window)) {
      recent_returns_.pop_front();
      recent_success_.pop_front();
    }
  }

  MetricRow row;
  row.iteration = static_cast<int>(rows_.size()) + 1;
  row.frames = state_.frames;
  row.episodes = static_cast<int>(state_.finished.size());
  if (!recent_returns_.empty()) {
    double sum = 0.0;
    double wins = 0.0;
    for (std::size_t i = 0; i < recent_returns_.size(); ++i) {
      sum += recent_returns_[i];
      wins += recent_success_[i];
    }
    row.mean_return = sum / static_cast<double>(recent_returns_.size());
    row.success_rate = wins / static_cast<double>(recent_returns_.size());
  }
  row.episodic_eff = eff.episodic;
  row.lifelong_eff = eff.lifelong;
  row.ir_raw_mean = mean_of(buffer_.ir_raw);
  row.ir_norm_mean = mean_of(buffer_.ir_normalized);
  row.policy_loss = loss.policy_loss;
  row.value_loss = loss.value_loss;
  row.entropy = loss.entropy;
  row.clip_fraction = loss.clip_fraction;
  row.approx_kl = loss.approx_kl;
  row.model_loss = model.loss;
  row.model_accuracy = model.accuracy;
  wall_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  row.wall_seconds = wall_seconds_;
  rows_.push_back(row);

  if (cfg_.trace_ir) {
    std::string text;
    for (const auto& t : novelty_.trace())
      text += std::to_string(t.worker) + "," + std::to_string(t.step) + "," + format_metric(t.raw) + "," +
              format_metric(t.normalized) + "," + std::to_string(t.memory_size) + "," + std::to_string(t.queue_size) +
              "\n";
    last_trace_ = std::move(text);
  }
  return rows_.back();
}

std::string Experiment::trace_csv() const { return last_trace_; }

void Experiment::save(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw CheckpointError("checkpoint: cannot create '" + dir + "': " + ec.message());

  nn::Registry<float> params;
  policy_.collect(params);
  std::vector<nn::NamedTensor> tensors = nn::export_registry(params, "policy.");
  const auto moments = nn::export_adam(policy_opt_, params, "policy.adam.");
  tensors.insert(tensors.end(), moments.begin(), moments.end());
  const auto module = novelty_.export_tensors();
  tensors.insert(tensors.end(), module.begin(), module.end());
  if (state_.started) {
    tensors.push_back(nn::to_named("rollout.obs", state_.obs));
    tensors.push_back(nn::to_named("rollout.hidden", state_.hidden));
  }

  const novelty::ModuleScalars scalars = novelty_.export_scalars();
  json meta;
  meta["format"] = "deir-checkpoint";
  meta["version"] = kCheckpointVersion;
  meta["config"] = to_text(cfg_);
  meta["seed"] = seed_;
  meta["frames"] = state_.frames;
  meta["rng"] = {{"init", rng_text(init_rng_)}, {"act", rng_text(act_rng_)}, {"train", rng_text(train_rng_)}};
  meta["policy_adam_step"] = policy_opt_.step;
  meta["adv_norm"] = {{"mean", adv_norm_.mean}, {"std", adv_norm_.std}};
  meta["novelty"] = {{"queue_average", scalars.queue_average}, {"ir_mean", scalars.ir_mean},
                     {"ir_std", scalars.ir_std},               {"adam_step", scalars.adam_step},
                     {"steps", scalars.steps}};
  json envs = json::array();
  for (const auto& e : envs_) envs.push_back(e.serialize());
  meta["envs"] = envs;
  meta["rollout"] = {{"started", state_.started},
                     {"episode_start", state_.episode_start},
                     {"running_return", state_.running_return},
                     {"running_length", state_.running_length}};
  meta["recent_returns"] = recent_returns_;
  meta["recent_success"] = recent_success_;
  auto sorted = [](const std::unordered_set<env::StateId>& set) {
    std::vector<env::StateId> ids(set.begin(), set.end());
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  json episodic = json::array();
  for (int w = 0; w < cfg_.n_workers; ++w) episodic.push_back(sorted(tracker_.episodic(w)));
  meta["tracker"] = {{"lifetime", sorted(tracker_.lifetime())}, {"episodic", episodic}};
  json rows = json::array();
  for (const auto& r : rows_) rows.push_back(row_json(r));
  meta["rows"] = rows;
  meta["wall_seconds"] = wall_seconds_;

  write_text_file(dir + "/state.blob", nn::encode_blob(tensors));
  write_text_file(dir + "/meta.json", meta.dump(1));
}

std::unique_ptr<Experiment> Experiment::load(const std::string& dir) {
  try {
    const json meta = json::parse(read_file(dir + "/meta.json"));
    if (meta.at("format").get<std::string>() != "deir-checkpoint")
      throw CheckpointError("checkpoint: unrecognized format");
    if (meta.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("checkpoint: unsupported version " + std::to_string(meta.at("version").get<int>()));
    const ExperimentConfig cfg =
        apply_settings(default_config(), parse_config_text(meta.at("config").get<std::string>()));
    auto exp = std::make_unique<Experiment>(cfg, meta.at("seed").get<std::uint64_t>());
    exp->restore(dir);
    return exp;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void Experiment::restore(const std::string& dir) {
  const json meta = json::parse(read_file(dir + "/meta.json"));
  const std::vector<nn::NamedTensor> tensors = nn::decode_blob(read_file(dir + "/state.blob"));

  nn::Registry<float> params;
  policy_.collect(params);
  nn::import_registry(params, tensors, "policy.");
  nn::import_adam(policy_opt_, params, tensors, "policy.adam.");
  policy_opt_.step = meta.at("policy_adam_step").get<std::int64_t>();

  const json& nv = meta.at("novelty");
  novelty_.import_state(tensors, {nv.at("queue_average").get<double>(), nv.at("ir_mean").get<double>(),
                                  nv.at("ir_std").get<double>(), nv.at("adam_step").get<std::int64_t>(),
                                  nv.at("steps").get<std::int64_t>()});

  const json& envs = meta.at("envs");
  if (envs.size() != envs_.size()) throw CheckpointError("checkpoint: worker count differs");
  for (std::size_t w = 0; w < envs_.size(); ++w) envs_[w].deserialize(envs[w].get<std::string>());

  const json& rollout = meta.at("rollout");
  state_.started = rollout.at("started").get<bool>();
  state_.frames = meta.at("frames").get<std::int64_t>();
  if (state_.started) {
    state_.obs = ppo::MatrixF(cfg_.n_workers, envs_.front().input_size());
    state_.hidden = ppo::MatrixF(cfg_.n_workers, policy_.hidden_size());
    auto find = [&](const std::string& name) -> const nn::NamedTensor& {
      for (const auto& t : tensors)
        if (t.name == name) return t;
      throw CheckpointError("checkpoint: missing tensor '" + name + "'");
    };
    nn::from_named(find("rollout.obs"), state_.obs);
    nn::from_named(find("rollout.hidden"), state_.hidden);
    state_.episode_start = rollout.at("episode_start").get<std::vector<std::uint8_t>>();
    state_.running_return = rollout.at("running_return").get<std::vector<double>>();
    state_.running_length = rollout.at("running_length").get<std::vector<int>>();
    const auto n = static_cast<std::size_t>(cfg_.n_workers);
    if (state_.episode_start.size() != n || state_.running_return.size() != n || state_.running_length.size() != n)
      throw CheckpointError("checkpoint: rollout state has the wrong worker count");
  }

  rng_restore(init_rng_, meta.at("rng").at("init").get<std::string>());
  rng_restore(act_rng_, meta.at("rng").at("act").get<std::string>());
  rng_restore(train_rng_, meta.at("rng").at("train").get<std::string>());
  adv_norm_.mean = meta.at("adv_norm").at("mean").get<double>();
  adv_norm_.std = meta.at("adv_norm").at("std").get<double>();

  const auto returns = meta.at("recent_returns").get<std::vector<double>>();
  const auto success = meta.at("recent_success").get<std::vector<std::uint8_t>>();
  recent_returns_.assign(returns.begin(), returns.end());
  recent_success_.assign(success.begin(), success.end());

  const json& tracker = meta.at("tracker");
  const auto lifetime = tracker.at("lifetime").get<std::vector<env::StateId>>();
  std::vector<std::unordered_set<env::StateId>> episodic;
  for (const auto& ids : tracker.at("episodic")) {
    const auto v = ids.get<std::vector<env::StateId>>();
    episodic.emplace_back(v.begin(), v.end());
  }
  tracker_.restore({lifetime.begin(), lifetime.end()}, std::move(episodic));

  rows_.clear();
  for (const auto& r : meta.at("rows")) rows_.push_back(row_from(r));
  wall_seconds_ = meta.at("wall_seconds").get<double>();
}

std::map<std::uint64_t, std::vector<MetricRow>> run_experiment(const ExperimentConfig& cfg,
                                                               const ProgressFn& progress) {
  validate(cfg);
  std::map<std::uint64_t, std::vector<MetricRow>> runs;
  for (std::uint64_t seed : cfg.seeds) {
    Experiment exp(cfg, seed);
    const std::string seed_dir = cfg.out_dir + "/seed_" + std::to_string(seed);
    std::string trace;
    if (cfg.trace_ir) trace = "worker,step,raw_ir,normalized_ir,memory_size,queue_size\n";
    while (!exp.finished()) {
      const MetricRow& row = exp.iterate();
      if (progress) progress(seed, row);
      if (cfg.trace_ir) trace += exp.trace_csv();
      if (cfg.checkpoint_every > 0 && row.iteration % cfg.checkpoint_every == 0) exp.save(seed_dir + "/checkpoint");
    }
    if (cfg.trace_ir) {
      std::filesystem::create_directories(cfg.out_dir);
      write_text_file(cfg.out_dir + "/trace_seed_" + std::to_string(seed) + ".csv", trace);
    }
    runs[seed] = exp.rows();
  }
  emit_outputs(cfg.out_dir, runs);
  return runs;
}

}  // namespace deir::harness
