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

#include "deir/novelty/module.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "deir/nn/serialize.hpp"

namespace deir::novelty {

namespace {

constexpr int kNegativeRedraws = 16;
constexpr const char* kPrefix = "novelty.";

std::span<const float> row_of(const MatrixF& m, Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

MatrixF gather(const MatrixF& src, std::span<const int> rows) {
  MatrixF out(static_cast<Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = src.row(rows[i]);
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, std::span<const int> rows) {
  std::vector<T> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = src[static_cast<std::size_t>(rows[i])];
  return out;
}

double train_step(nn::Tape<float>& tape, Var<float> loss, nn::Registry<float>& params, nn::AdamState<float>& opt,
                  double max_grad_norm) {
  tape.backward(loss);
  nn::clip_grad_norm(params, max_grad_norm);
  nn::adam_step(opt, params);
  return loss.value()(0, 0);
}

const nn::NamedTensor& find_tensor(const std::vector<nn::NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw nn::BlobError("missing tensor '" + name + "'");
}

MatrixF matrix_from(const nn::NamedTensor& t, Index cols) {
  if (t.shape.size() != 2 || static_cast<Index>(t.shape[1]) != cols)
    throw nn::BlobError("tensor '" + t.name + "' has the wrong width");
  MatrixF m(static_cast<Index>(t.shape[0]), cols);
  nn::from_named(t, m);
  return m;
}

}  // namespace

DiscBatch build_disc_batch(const ppo::RolloutBuffer& buffer, const ObservationQueue& queue, std::size_t size,
                           std::mt19937_64& rng, std::span<const int> candidates) {
  if (!buffer.full) throw ppo::ContractError("build_disc_batch: rollout buffer is not full");
  const std::size_t half = size / 2;
  if (half == 0) throw std::invalid_argument("build_disc_batch: size must be at least 2");
  std::uniform_int_distribution<int> pick(0, buffer.size() - 1);
  auto candidate = [&](std::size_t j) { return j < candidates.size() ? candidates[j] : pick(rng); };

  DiscBatch b;
  if (queue.empty()) {
    for (std::size_t j = 0; j < half; ++j) b.anchors.push_back(candidate(j));
    b.shrunk = true;
    b.warning = "observation queue is empty; discriminator batch holds positives only";
  } else {
    for (std::size_t j = 0; j < half; ++j) {
      int anchor = candidate(j);
      std::optional<std::size_t> negative = queue.sample_negative(buffer.raw_next_row(anchor), rng);
      for (int retry = 0; !negative && retry < kNegativeRedraws; ++retry) {
        anchor = pick(rng);
        negative = queue.sample_negative(buffer.raw_next_row(anchor), rng);
      }
      if (!negative) {
        b.shrunk = true;
        continue;
      }
      b.anchors.push_back(anchor);
      b.negative_slots.push_back(*negative);
    }
    if (b.shrunk)
      b.warning = "no distinct negative found for some anchors; discriminator batch shrunk to " +
                  std::to_string(2 * b.anchors.size());
  }

  const auto n = static_cast<Index>(b.anchors.size());
  const auto m = static_cast<Index>(b.negative_slots.size());
  b.obs_t = gather(buffer.obs, b.anchors);
  b.h_prev = gather(buffer.model_hidden, b.anchors);
  b.actions = gather(buffer.actions, b.anchors);
  b.obs_x.resize(n + m, buffer.obs_size);
  b.obs_x.topRows(n) = gather(buffer.next_obs, b.anchors);
  b.labels = MatrixF::Zero(n + m, 1);
  b.labels.topRows(n).setOnes();
  b.source.resize(static_cast<std::size_t>(n + m));
  for (Index j = 0; j < n; ++j) b.source[static_cast<std::size_t>(j)] = j;
  for (Index j = 0; j < m; ++j) {
    const auto input = queue.input(b.negative_slots[static_cast<std::size_t>(j)]);
    b.obs_x.row(n + j) = Eigen::Map<const nn::RowVector<float>>(input.data(), static_cast<Index>(input.size()));
    b.source[static_cast<std::size_t>(n + j)] = j;
  }
  return b;
}

template <typename Scalar>
Var<Scalar> disc_loss(nn::Tape<Scalar>& t, DiscModel<Scalar>& model, const DiscBatch& batch, bool training) {
  if (batch.obs_x.rows() == 0) throw std::invalid_argument("disc_loss: empty batch");
  const Matrix<Scalar> labels = batch.labels.template cast<Scalar>();
  Var<Scalar> probs = model.likelihood(t, batch.obs_t.template cast<Scalar>(), batch.obs_x.template cast<Scalar>(),
                                       batch.source, batch.actions, batch.h_prev.template cast<Scalar>(), training);
  return nn::binary_cross_entropy(probs, labels);
}

template Var<float> disc_loss<float>(nn::Tape<float>&, DiscModel<float>&, const DiscBatch&, bool);
template Var<double> disc_loss<double>(nn::Tape<double>&, DiscModel<double>&, const DiscBatch&, bool);

NoveltyModule::NoveltyModule(const NoveltyConfig& cfg, int obs_size, int n_workers, std::mt19937_64& init_rng)
    : cfg_(cfg), obs_size_(obs_size), n_workers_(n_workers), queue_(cfg.queue_size, obs_size, cfg.queue_smoothing) {
  if (n_workers <= 0) throw std::invalid_argument("NoveltyModule: no workers");
  ir_norm_.momentum = cfg.ir_momentum;
  switch (cfg.method) {
    case Method::DEIR:
    case Method::PlainNovelty:
      disc_ = std::make_unique<DiscModel<float>>(cfg.model, init_rng);
      break;
    case Method::ForwardError:
      forward_ = std::make_unique<ForwardModel<float>>(cfg.model, init_rng);
      break;
    case Method::InverseDriven:
      inverse_ = std::make_unique<InverseModel<float>>(cfg.model, init_rng);
      break;
    case Method::RND:
      rnd_ = std::make_unique<RndModel<float>>(cfg.model, init_rng);
      break;
    case Method::NoIntrinsic:
      break;
  }
  const int h = hidden_size();
  if (TrajectoryEncoder<float>* enc = encoder(); enc != nullptr && enc->input_size() != obs_size)
    throw nn::ShapeError("NoveltyModule: encoder input does not match the observation size");
  if (cfg.method == Method::DEIR || cfg.method == Method::PlainNovelty || cfg.method == Method::InverseDriven)
    memories_.assign(static_cast<std::size_t>(n_workers), EpisodicMemory(h, h));
  h_prev_ = MatrixF::Zero(n_workers, h);
  traj_ = MatrixF::Zero(n_workers, h);
  optimizer_ = nn::AdamState<float>(cfg.adam, trainable());
}

TrajectoryEncoder<float>* NoveltyModule::encoder() {
  if (disc_) return &disc_->encoder;
  if (forward_) return &forward_->encoder;
  if (inverse_) return &inverse_->encoder;
  return nullptr;
}

int NoveltyModule::hidden_size() const {
  return (disc_ || forward_ || inverse_) ? cfg_.model.encoder.features : 0;
}

nn::Registry<float> NoveltyModule::trainable() {
  nn::Registry<float> r;
  if (disc_) disc_->collect(r);
  if (forward_) forward_->collect(r);
  if (inverse_) inverse_->collect(r);
  if (rnd_) rnd_->collect(r);
  return r;
}

nn::Registry<float> NoveltyModule::persistent() {
  nn::Registry<float> r = trainable();
  if (rnd_) rnd_->collect_target(r);
  return r;
}

void NoveltyModule::begin(const MatrixF& obs) {
  if (obs.rows() != n_workers_ || obs.cols() != obs_size_) throw nn::ShapeError("NoveltyModule::begin: shape mismatch");
  for (auto& m : memories_) m.clear();
  h_prev_.setZero();
  if (TrajectoryEncoder<float>* enc = encoder()) traj_ = embed(*enc, obs, h_prev_).e_traj;
}

void NoveltyModule::finish_step(const MatrixF& next_traj, std::span<const std::uint8_t> dones,
                                const MatrixF& reset_obs) {
  h_prev_ = traj_;
  traj_ = next_traj;
  std::vector<int> finished;
  for (int w = 0; w < n_workers_; ++w)
    if (dones[static_cast<std::size_t>(w)]) finished.push_back(w);
  if (finished.empty()) return;
  const MatrixF starts = gather(reset_obs, finished);
  const MatrixF zeros = MatrixF::Zero(starts.rows(), h_prev_.cols());
  const Embedding<float> e = embed(*encoder(), starts, zeros);
  for (std::size_t i = 0; i < finished.size(); ++i) {
    h_prev_.row(finished[i]).setZero();
    traj_.row(finished[i]) = e.e_traj.row(static_cast<Index>(i));
  }
}

void NoveltyModule::step(const MatrixF& next_obs, std::span<const std::uint8_t> raw_next,
                         std::span<const int> actions, std::span<const std::uint8_t> dones, const MatrixF& reset_obs,
                         std::span<float> rewards) {
  const auto n = static_cast<std::size_t>(n_workers_);
  if (next_obs.rows() != n_workers_ || next_obs.cols() != obs_size_ || actions.size() != n || dones.size() != n ||
      rewards.size() != n || raw_next.size() != n * static_cast<std::size_t>(obs_size_) ||
      reset_obs.rows() != n_workers_)
    throw nn::ShapeError("NoveltyModule::step: shape mismatch");
  std::vector<double> r(n, 0.0);
  switch (cfg_.method) {
    case Method::NoIntrinsic:
      break;
    case Method::RND:
      r = rnd_->error(next_obs);
      break;
    case Method::ForwardError: {
      const Embedding<float> next = embed(forward_->encoder, next_obs, traj_);
      const MatrixF predicted = forward_->predict(traj_, actions);
      for (std::size_t w = 0; w < n; ++w)
        r[w] = squared_distance(row_of(predicted, static_cast<Index>(w)), row_of(next.e_obs, static_cast<Index>(w)));
      finish_step(next.e_traj, dones, reset_obs);
      break;
    }
    case Method::DEIR:
    case Method::PlainNovelty:
    case Method::InverseDriven: {
      const Embedding<float> next = embed(*encoder(), next_obs, traj_);
      for (std::size_t w = 0; w < n; ++w) {
        const auto row = static_cast<Index>(w);
        const bool terminal = dones[w] != 0;
        if (cfg_.method == Method::PlainNovelty)
          r[w] = plain_novelty_reward(row_of(next.e_obs, row), row_of(traj_, row), memories_[w], terminal);
        else
          r[w] = intrinsic_reward(row_of(next.e_obs, row), row_of(traj_, row), memories_[w], terminal, cfg_.epsilon);
        if (disc_)
          queue_.update(row_of(next_obs, row),
                        raw_next.subspan(w * static_cast<std::size_t>(obs_size_), static_cast<std::size_t>(obs_size_)),
                        r[w]);
      }
      finish_step(next.e_traj, dones, reset_obs);
      break;
    }
  }
  for (std::size_t w = 0; w < n; ++w) {
    rewards[w] = static_cast<float>(r[w]);
    if (cfg_.trace)
      trace_.push_back({static_cast<int>(w), steps_, r[w], 0.0, memories_.empty() ? 0 : memories_[w].size(),
                        queue_.size()});
  }
  ++steps_;
}

void NoveltyModule::normalize(ppo::RolloutBuffer& buffer) {
  if (cfg_.method == Method::NoIntrinsic) {
    std::fill(buffer.ir_normalized.begin(), buffer.ir_normalized.end(), 0.0f);
    return;
  }
  buffer.ir_normalized = ppo::normalize_then_update(buffer.ir_raw, ir_norm_);
  if (!cfg_.trace) return;
  const std::size_t start = trace_.size() >= static_cast<std::size_t>(buffer.size())
                                ? trace_.size() - static_cast<std::size_t>(buffer.size())
                                : 0;
  for (std::size_t k = start; k < trace_.size(); ++k) {
    const auto local = static_cast<int>((k - start) / static_cast<std::size_t>(n_workers_));
    trace_[k].normalized = buffer.ir_normalized[static_cast<std::size_t>(buffer.index(trace_[k].worker, local))];
  }
}

void NoveltyModule::clear_trace() { trace_.clear(); }

ModelStats NoveltyModule::train(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng) {
  if (!buffer.full) throw ppo::ContractError("NoveltyModule::train: rollout buffer is not full");
  nn::Registry<float> params = trainable();
  if (disc_) return train_disc(buffer, rng, params);
  if (forward_ || inverse_) return train_transitions(buffer, rng, params);
  if (rnd_) return train_rnd(buffer, rng, params);
  return {};
}

ModelStats NoveltyModule::train_disc(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng,
                                     nn::Registry<float>& params) {
  ModelStats stats;
  const int half = std::max(1, cfg_.minibatch / 2);
  std::vector<int> order(static_cast<std::size_t>(buffer.size()));
  std::iota(order.begin(), order.end(), 0);
  double correct = 0.0;
  double seen = 0.0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(half)) {
      const auto count = std::min(static_cast<std::size_t>(half), order.size() - first);
      const DiscBatch batch =
          build_disc_batch(buffer, queue_, 2 * count, rng, std::span(order).subspan(first, count));
      if (batch.shrunk) {
        ++stats.shrunk_batches;
        if (std::find(stats.warnings.begin(), stats.warnings.end(), batch.warning) == stats.warnings.end())
          stats.warnings.push_back(batch.warning);
      }
      if (batch.obs_x.rows() < 2) continue;
      params.zero_grad();
      nn::Tape<float> tape;
      Var<float> probs = disc_->likelihood(tape, batch.obs_t, batch.obs_x, batch.source, batch.actions, batch.h_prev,
                                           true);
      const MatrixF p = probs.value();
      stats.loss += train_step(tape, nn::binary_cross_entropy(probs, batch.labels), params, optimizer_,
                               cfg_.max_grad_norm);
      for (Index i = 0; i < p.rows(); ++i) correct += ((p(i, 0) >= 0.5f) == (batch.labels(i, 0) > 0.5f)) ? 1.0 : 0.0;
      seen += static_cast<double>(p.rows());
      ++stats.batches;
    }
  }
  if (stats.batches > 0) stats.loss /= stats.batches;
  if (seen > 0) stats.accuracy = correct / seen;
  return stats;
}

ModelStats NoveltyModule::train_transitions(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng,
                                            nn::Registry<float>& params) {
  ModelStats stats;
  const auto batch = static_cast<std::size_t>(std::max(2, cfg_.minibatch));
  std::vector<int> order(static_cast<std::size_t>(buffer.size()));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += batch) {
      const auto rows = std::span(order).subspan(first, std::min(batch, order.size() - first));
      if (rows.size() < 2) continue;
      const MatrixF obs_t = gather(buffer.obs, rows);
      const MatrixF obs_next = gather(buffer.next_obs, rows);
      const MatrixF h_prev = gather(buffer.model_hidden, rows);
      const std::vector<int> actions = gather(buffer.actions, rows);
      params.zero_grad();
      nn::Tape<float> tape;
      Var<float> loss = forward_ ? forward_->loss(tape, obs_t, obs_next, actions, h_prev, true)
                                 : inverse_->loss(tape, obs_t, obs_next, actions, h_prev, true);
      stats.loss += train_step(tape, loss, params, optimizer_, cfg_.max_grad_norm);
      ++stats.batches;
    }
  }
  if (stats.batches > 0) stats.loss /= stats.batches;
  return stats;
}

ModelStats NoveltyModule::train_rnd(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng,
                                    nn::Registry<float>& params) {
  ModelStats stats;
  const auto batch = static_cast<std::size_t>(std::max(2, cfg_.minibatch));
  std::vector<int> order(static_cast<std::size_t>(buffer.size()));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += batch) {
      const auto rows = std::span(order).subspan(first, std::min(batch, order.size() - first));
      if (rows.size() < 2) continue;
      params.zero_grad();
      nn::Tape<float> tape;
      stats.loss += train_step(tape, rnd_->loss(tape, gather(buffer.next_obs, rows), true), params, optimizer_,
                               cfg_.max_grad_norm);
      ++stats.batches;
    }
  }
  if (stats.batches > 0) stats.loss /= stats.batches;
  return stats;
}

std::vector<nn::NamedTensor> NoveltyModule::export_tensors() {
  const std::string prefix = kPrefix;
  std::vector<nn::NamedTensor> out = nn::export_registry(persistent(), prefix);
  const auto moments = nn::export_adam(optimizer_, trainable(), prefix + "adam.");
  out.insert(out.end(), moments.begin(), moments.end());
  const auto d = static_cast<std::uint64_t>(obs_size_);
  const auto q = static_cast<std::uint64_t>(queue_.size());
  out.push_back({prefix + "queue.inputs", {q, d}, queue_.inputs_in_order()});
  const std::vector<std::uint8_t> raws = queue_.raws_in_order();
  out.push_back({prefix + "queue.raws", {q, d}, std::vector<float>(raws.begin(), raws.end())});
  for (std::size_t w = 0; w < memories_.size(); ++w) {
    const EpisodicMemory& m = memories_[w];
    const auto rows = static_cast<std::uint64_t>(m.size());
    nn::NamedTensor obs{prefix + "memory." + std::to_string(w) + ".obs", {rows, static_cast<std::uint64_t>(m.obs_dim())}, {}};
    nn::NamedTensor traj{prefix + "memory." + std::to_string(w) + ".traj", {rows, static_cast<std::uint64_t>(m.traj_dim())}, {}};
    for (std::size_t i = 0; i < m.size(); ++i) {
      obs.data.insert(obs.data.end(), m.obs(i).begin(), m.obs(i).end());
      traj.data.insert(traj.data.end(), m.traj(i).begin(), m.traj(i).end());
    }
    out.push_back(std::move(obs));
    out.push_back(std::move(traj));
  }
  out.push_back(nn::to_named(prefix + "h_prev", h_prev_));
  out.push_back(nn::to_named(prefix + "traj", traj_));
  return out;
}

ModuleScalars NoveltyModule::export_scalars() const {
  return {queue_.running_average(), ir_norm_.mean, ir_norm_.std, optimizer_.step, steps_};
}

void NoveltyModule::import_state(const std::vector<nn::NamedTensor>& tensors, const ModuleScalars& scalars) {
  const std::string prefix = kPrefix;
  nn::Registry<float> state = persistent();
  nn::import_registry(state, tensors, prefix);
  nn::import_adam(optimizer_, trainable(), tensors, prefix + "adam.");
  optimizer_.step = scalars.adam_step;
  const nn::NamedTensor& inputs = find_tensor(tensors, prefix + "queue.inputs");
  const nn::NamedTensor& raws = find_tensor(tensors, prefix + "queue.raws");
  if (inputs.shape.size() != 2 || raws.shape != inputs.shape || inputs.shape[1] != static_cast<std::uint64_t>(obs_size_))
    throw nn::BlobError("queue tensors have the wrong shape");
  std::vector<std::uint8_t> raw_bytes(raws.data.size());
  std::transform(raws.data.begin(), raws.data.end(), raw_bytes.begin(),
                 [](float v) { return static_cast<std::uint8_t>(v); });
  queue_.restore(scalars.queue_average, inputs.data, std::move(raw_bytes));
  for (std::size_t w = 0; w < memories_.size(); ++w) {
    EpisodicMemory& m = memories_[w];
    const MatrixF obs = matrix_from(find_tensor(tensors, prefix + "memory." + std::to_string(w) + ".obs"), m.obs_dim());
    const MatrixF traj =
        matrix_from(find_tensor(tensors, prefix + "memory." + std::to_string(w) + ".traj"), m.traj_dim());
    if (obs.rows() != traj.rows()) throw nn::BlobError("episodic memory tensors disagree in length");
    m.clear();
    for (Index i = 0; i < obs.rows(); ++i) m.append(row_of(obs, i), row_of(traj, i));
  }
  nn::from_named(find_tensor(tensors, prefix + "h_prev"), h_prev_);
  nn::from_named(find_tensor(tensors, prefix + "traj"), traj_);
  ir_norm_.mean = scalars.ir_mean;
  ir_norm_.std = scalars.ir_std;
  steps_ = scalars.steps;
}

}  // namespace deir::novelty
