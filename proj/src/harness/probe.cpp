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

#include "deir/harness/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "deir/harness/experiment.hpp"
#include "deir/nn/adam.hpp"

namespace deir::harness {

namespace {

constexpr std::uint64_t kProbeStream = 5;

std::optional<env::Position> find_object(const env::GridWorld& world, env::Object object) {
  for (int y = 0; y < world.height; ++y)
    for (int x = 0; x < world.width; ++x)
      if (world.at(x, y).object == object) return env::Position{x, y};
  return std::nullopt;
}

double scaled_distance(const env::GridWorld& world, std::optional<env::Position> target) {
  if (!target) return 0.0;
  const double span = std::max(1, world.width + world.height - 4);
  const int d = std::abs(world.agent_pos.x - target->x) + std::abs(world.agent_pos.y - target->y);
  return std::min(1.0, d / span);
}

}  // namespace

std::string_view probe_task_name(ProbeTask task) {
  switch (task) {
    case ProbeTask::KeyPicked: return "key_picked";
    case ProbeTask::DoorOpened: return "door_opened";
    case ProbeTask::DistKey: return "dist_key";
    case ProbeTask::DistDoor: return "dist_door";
    case ProbeTask::DistGoal: return "dist_goal";
  }
  return "unknown";
}

double ProbeLabels::get(ProbeTask task) const {
  switch (task) {
    case ProbeTask::KeyPicked: return key_picked ? 1.0 : 0.0;
    case ProbeTask::DoorOpened: return door_opened ? 1.0 : 0.0;
    case ProbeTask::DistKey: return dist_key;
    case ProbeTask::DistDoor: return dist_door;
    case ProbeTask::DistGoal: return dist_goal;
  }
  return 0.0;
}

ProbeLabels probe_labels(const env::GridWorld& world, bool key_seen_carried) {
  ProbeLabels l;
  const bool carrying = world.carried && world.carried->object == env::Object::Key;
  l.key_picked = key_seen_carried || carrying;
  const auto door = find_object(world, env::Object::Door);
  l.door_opened = door && world.at(*door).is_open_door();
  l.dist_key = carrying ? 0.0 : scaled_distance(world, find_object(world, env::Object::Key));
  l.dist_door = scaled_distance(world, door);
  l.dist_goal = scaled_distance(world, find_object(world, env::Object::Goal));
  return l;
}

ProbeDataset collect_probe_data(const env::EnvSpec& spec, int episodes, double random_action, std::uint64_t seed) {
  if (episodes <= 0) throw ProbeError("collect_probe_data: episodes must be positive");
  constexpr std::array<env::Action, 5> kActions{env::Action::TurnLeft, env::Action::TurnRight, env::Action::Forward,
                                                env::Action::Pickup, env::Action::Toggle};
  env::Environment environment(spec, derive_seed(seed, kProbeStream, 0));
  std::mt19937_64 rng(derive_seed(seed, kProbeStream, 1));
  std::bernoulli_distribution explore(random_action);
  std::uniform_int_distribution<std::size_t> pick(0, kActions.size() - 1);

  std::vector<float> obs;
  std::vector<float> labels;
  ProbeDataset data;
  for (int e = 0; e < episodes; ++e) {
    const std::vector<float>* input = &environment.reset();
    bool key_latched = false;
    bool start = true;
    for (;;) {
      const ProbeLabels l = probe_labels(environment.world(), key_latched);
      key_latched = l.key_picked;
      obs.insert(obs.end(), input->begin(), input->end());
      for (const ProbeTask t : kProbeTasks) labels.push_back(static_cast<float>(l.get(t)));
      data.starts.push_back(start ? 1 : 0);
      data.episode.push_back(e);
      start = false;

      env::Action action = kActions[pick(rng)];
      if (!explore(rng)) {
        const auto plan = env::solve(environment.world());
        if (plan && !plan->empty()) action = plan->front();
      }
      if (environment.step(action).done) break;
      input = &environment.input();
    }
  }
  const auto rows = static_cast<Index>(data.starts.size());
  const auto width = static_cast<Index>(environment.input_size());
  data.obs = Eigen::Map<const MatrixF>(obs.data(), rows, width);
  data.labels = Eigen::Map<const MatrixF>(labels.data(), rows, static_cast<Index>(kProbeTasks.size()));
  data.episodes = episodes;
  return data;
}

MatrixF trajectory_embeddings(novelty::TrajectoryEncoder<float>& encoder, const ProbeDataset& data) {
  const Index f = encoder.embed_size();
  MatrixF out(data.obs.rows(), f);
  MatrixF h = MatrixF::Zero(1, f);
  for (Index i = 0; i < data.obs.rows(); ++i) {
    if (data.starts[static_cast<std::size_t>(i)]) h.setZero();
    const MatrixF row = data.obs.row(i);
    h = novelty::embed(encoder, row, h).e_traj;
    out.row(i) = h;
  }
  return out;
}

ProbeResult probe_embeddings(const MatrixF& features, const MatrixF& labels, std::span<const int> episode,
                             const ProbeConfig& cfg, std::mt19937_64& rng) {
  const Index n = features.rows();
  if (labels.rows() != n || static_cast<Index>(episode.size()) != n ||
      labels.cols() != static_cast<Index>(kProbeTasks.size()))
    throw nn::ShapeError("probe_embeddings: features, labels and episodes disagree");
  if (n < cfg.min_rows)
    throw ProbeError("probe dataset has " + std::to_string(n) + " rows, at least " + std::to_string(cfg.min_rows) +
                     " required");
  const int episodes = *std::max_element(episode.begin(), episode.end()) + 1;
  if (episodes < 2) throw ProbeError("probe dataset needs at least two episodes");

  std::vector<int> order(static_cast<std::size_t>(episodes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int held_out = std::clamp(static_cast<int>(std::lround(cfg.validation_fraction * episodes)), 1, episodes - 1);
  std::vector<std::uint8_t> validation(static_cast<std::size_t>(episodes), 0);
  for (int k = 0; k < held_out; ++k) validation[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;

  std::vector<int> train_rows;
  std::vector<int> val_rows;
  for (Index i = 0; i < n; ++i)
    (validation[static_cast<std::size_t>(episode[static_cast<std::size_t>(i)])] ? val_rows : train_rows)
        .push_back(static_cast<int>(i));
  if (train_rows.empty() || val_rows.empty()) throw ProbeError("probe split left an empty side");

  auto gather = [](const MatrixF& m, const std::vector<int>& rows) {
    MatrixF out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
    return out;
  };
  MatrixF x_train = gather(features, train_rows);
  MatrixF x_val = gather(features, val_rows);
  const nn::RowVector<float> mean = x_train.colwise().mean();
  nn::RowVector<float> scale = ((x_train.rowwise() - mean).array().square().colwise().mean()).sqrt();
  scale = scale.cwiseMax(1e-6f);
  x_train = ((x_train.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  x_val = ((x_val.rowwise() - mean).array().rowwise() / scale.array()).matrix();

  ProbeResult result;
  result.train_rows = static_cast<int>(train_rows.size());
  result.validation_rows = static_cast<int>(val_rows.size());
  const std::array<Index, 1> hidden{cfg.hidden};
  for (std::size_t k = 0; k < kProbeTasks.size(); ++k) {
    const ProbeTask task = kProbeTasks[k];
    const MatrixF y_train = gather(labels.col(static_cast<Index>(k)), train_rows);
    const MatrixF y_val = gather(labels.col(static_cast<Index>(k)), val_rows);
    nn::Mlp<float> head("probe." + std::string(probe_task_name(task)), features.cols(), hidden, 1, nn::NormKind::None,
                        1.0, rng);
    nn::Registry<float> params;
    head.collect(params);
    nn::AdamConfig adam;
    adam.lr = cfg.lr;
    nn::AdamState<float> opt(adam, params);
    auto loss_of = [&](nn::Tape<float>& t, const MatrixF& x, const MatrixF& y) {
      nn::Var<float> out = head(t, t.constant(x), false);
      return is_binary(task) ? nn::binary_cross_entropy(nn::sigmoid(out), y) : nn::mse(out, y);
    };

    std::vector<int> batch_order(train_rows.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(batch_order.begin(), batch_order.end(), rng);
      for (std::size_t first = 0; first < batch_order.size(); first += static_cast<std::size_t>(cfg.minibatch)) {
        const std::size_t count = std::min(static_cast<std::size_t>(cfg.minibatch), batch_order.size() - first);
        const std::vector<int> rows(batch_order.begin() + static_cast<std::ptrdiff_t>(first),
                                    batch_order.begin() + static_cast<std::ptrdiff_t>(first + count));
        params.zero_grad();
        nn::Tape<float> tape;
        tape.backward(loss_of(tape, gather(x_train, rows), gather(y_train, rows)));
        nn::adam_step(opt, params);
      }
      nn::Tape<float> eval(false);
      best = std::min(best, static_cast<double>(loss_of(eval, x_val, y_val).value()(0, 0)));
    }
    result.validation_loss[k] = best;
  }
  return result;
}

ProbeComparison compare_probes(const ExperimentConfig& cfg, std::uint64_t seed, int episodes,
                               const ProbeConfig& probe) {
  Experiment experiment(cfg, seed);
  while (!experiment.finished()) experiment.iterate();
  novelty::TrajectoryEncoder<float>* trained = experiment.novelty().encoder();
  if (trained == nullptr) throw ProbeError("probe comparison needs a method with a trajectory encoder");

  std::mt19937_64 init(derive_seed(seed, kProbeStream, 2));
  novelty::TrajectoryEncoder<float> random("random", experiment.config().novelty.model.encoder, init);
  const ProbeDataset data = collect_probe_data(experiment.config().env, episodes, 0.25, seed);

  ProbeComparison out;
  out.frames = experiment.frames();
  std::mt19937_64 rng_trained(derive_seed(seed, kProbeStream, 3));
  std::mt19937_64 rng_random(derive_seed(seed, kProbeStream, 3));
  out.trained = probe_embeddings(trajectory_embeddings(*trained, data), data.labels, data.episode, probe, rng_trained);
  out.random = probe_embeddings(trajectory_embeddings(random, data), data.labels, data.episode, probe, rng_random);
  return out;
}

}  // namespace deir::harness
