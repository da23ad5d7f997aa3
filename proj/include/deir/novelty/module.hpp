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

#ifndef DEIR_NOVELTY_MODULE_HPP_
#define DEIR_NOVELTY_MODULE_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deir/nn/adam.hpp"
#include "deir/nn/tensor.hpp"
#include "deir/novelty/episodic_memory.hpp"
#include "deir/novelty/models.hpp"
#include "deir/novelty/observation_queue.hpp"
#include "deir/ppo/buffer.hpp"
#include "deir/ppo/rollout.hpp"

namespace deir::novelty {

using ppo::MatrixF;

struct NoveltyConfig {
  Method method = Method::DEIR;
  ModelConfig model;
  double epsilon = kDefaultEpsilon;
  std::size_t queue_size = 100000;
  double queue_smoothing = 0.9;
  double ir_momentum = 0.9;
  int epochs = 4;
  int minibatch = 512;
  double max_grad_norm = 0.5;
  nn::AdamConfig adam;
  bool trace = false;
};

/// Training examples for the discriminator. Candidate row j of obs_x is
/// scored against anchor source[j]; positives come first.
struct DiscBatch {
  std::vector<int> anchors;  // buffer rows supplying o_t, a_t and h_{t-1}
  MatrixF obs_t;
  MatrixF obs_x;
  MatrixF h_prev;
  std::vector<int> actions;
  std::vector<Index> source;
  MatrixF labels;
  std::vector<std::size_t> negative_slots;  // queue index of every negative
  bool shrunk = false;
  std::string warning;

  std::size_t positives() const { return anchors.size(); }
  std::size_t negatives() const { return negative_slots.size(); }
};

/// Pairs each anchor transition with its true next observation and with a
/// queue observation that differs from it. `size` counts both halves.
/// Anchors are taken from `candidates` when given, else drawn uniformly;
/// an anchor without a valid negative is replaced by a fresh uniform draw.
DiscBatch build_disc_batch(const ppo::RolloutBuffer& buffer, const ObservationQueue& queue, std::size_t size,
                           std::mt19937_64& rng, std::span<const int> candidates = {});

/// Mean binary cross-entropy of the discriminator on `batch`.
template <typename Scalar>
Var<Scalar> disc_loss(nn::Tape<Scalar>& t, DiscModel<Scalar>& model, const DiscBatch& batch, bool training);

struct ModelStats {
  double loss = 0.0;
  double accuracy = 0.0;  // discriminator only
  int batches = 0;
  int shrunk_batches = 0;
  std::vector<std::string> warnings;
};

struct TraceRow {
  int worker = 0;
  std::int64_t step = 0;
  double raw = 0.0;
  double normalized = 0.0;
  std::size_t memory_size = 0;
  std::size_t queue_size = 0;
};

/// Scalar part of the module state kept outside the tensor blob.
struct ModuleScalars {
  double queue_average = 0.0;
  double ir_mean = 0.0;
  double ir_std = 1.0;
  std::int64_t adam_step = 0;
  std::int64_t steps = 0;
};

/// Intrinsic-reward producer for every supported method: owns the model,
/// its optimizer, the per-worker episodic memories, the observation queue
/// and the reward normalizer.
class NoveltyModule : public ppo::IntrinsicSource {
 public:
  NoveltyModule(const NoveltyConfig& cfg, int obs_size, int n_workers, std::mt19937_64& init_rng);

  int hidden_size() const override;
  void begin(const MatrixF& obs) override;
  const MatrixF& hidden() const override { return h_prev_; }
  void step(const MatrixF& next_obs, std::span<const std::uint8_t> raw_next, std::span<const int> actions,
            std::span<const std::uint8_t> dones, const MatrixF& reset_obs, std::span<float> rewards) override;

  /// Writes buffer.ir_normalized from buffer.ir_raw with the current
  /// statistics, then folds the rollout into them.
  void normalize(ppo::RolloutBuffer& buffer);

  /// Model epochs over the rollout. No-op for methods without a model.
  ModelStats train(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng);

  const NoveltyConfig& config() const { return cfg_; }
  Method method() const { return cfg_.method; }
  const ObservationQueue& queue() const { return queue_; }
  const ppo::RunningNorm& ir_norm() const { return ir_norm_; }
  const EpisodicMemory& memory(int worker) const { return memories_.at(static_cast<std::size_t>(worker)); }
  DiscModel<float>* disc() { return disc_.get(); }
  /// Encoder producing trajectory embeddings, if the method has one.
  TrajectoryEncoder<float>* encoder();
  RndModel<float>* rnd() { return rnd_.get(); }

  /// Trace rows of the most recent rollout (requires cfg.trace).
  const std::vector<TraceRow>& trace() const { return trace_; }
  void clear_trace();

  std::vector<nn::NamedTensor> export_tensors();
  ModuleScalars export_scalars() const;
  /// Expects the tensors written by export_tensors of an identically
  /// configured module. Throws on any mismatch.
  void import_state(const std::vector<nn::NamedTensor>& tensors, const ModuleScalars& scalars);

 private:
  nn::Registry<float> trainable();
  nn::Registry<float> persistent();
  ModelStats train_disc(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng, nn::Registry<float>& params);
  ModelStats train_transitions(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng, nn::Registry<float>& params);
  ModelStats train_rnd(const ppo::RolloutBuffer& buffer, std::mt19937_64& rng, nn::Registry<float>& params);
  void finish_step(const MatrixF& next_traj, std::span<const std::uint8_t> dones, const MatrixF& reset_obs);

  NoveltyConfig cfg_;
  int obs_size_;
  int n_workers_;
  std::unique_ptr<DiscModel<float>> disc_;
  std::unique_ptr<ForwardModel<float>> forward_;
  std::unique_ptr<InverseModel<float>> inverse_;
  std::unique_ptr<RndModel<float>> rnd_;
  nn::AdamState<float> optimizer_;
  std::vector<EpisodicMemory> memories_;
  ObservationQueue queue_;
  ppo::RunningNorm ir_norm_;
  MatrixF h_prev_;
  MatrixF traj_;
  std::int64_t steps_ = 0;
  std::vector<TraceRow> trace_;
};

}  // namespace deir::novelty

#endif  // DEIR_NOVELTY_MODULE_HPP_
