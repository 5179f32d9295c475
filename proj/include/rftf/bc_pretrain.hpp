// Copyright 2026 The RFTF Authors
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
//
// Behavior-cloning pretraining of the base policy: uniform per-dimension
// action discretization and cross-entropy training over independent per-dim
// categorical heads. The RL stage reuses exactly this factorization, so the
// checkpoint trained here is directly fine-tunable.

#ifndef RFTF_BC_PRETRAIN_HPP_
#define RFTF_BC_PRETRAIN_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rftf/checkpoint.hpp"
#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/expert_demos.hpp"
#include "rftf/rng.hpp"
#include "rftf/tensor_core.hpp"

namespace rftf {

inline constexpr int kActionDims = 3;  // dx, dy, gripper_cmd

inline int discretize_component(double a, double low, double high, int bins) {
  if (bins < 1) throw ConfigError("bins must be >= 1");
  if (a < low || a > high)
    throw UsageError("action component " + std::to_string(a) +
                     " outside [" + std::to_string(low) + ", " +
                     std::to_string(high) + "]");
  const int idx =
      static_cast<int>(std::floor((a - low) / (high - low) * bins));
  return idx >= bins ? bins - 1 : idx;  // a == high lands in the last bin
}

inline double bin_center(int index, double low, double high, int bins) {
  if (bins < 1) throw ConfigError("bins must be >= 1");
  if (index < 0 || index >= bins)
    throw UsageError("bin index " + std::to_string(index) + " out of range");
  return low + (index + 0.5) * (high - low) / bins;
}

// Per-dimension uniform binning over (dx, dy, gripper_cmd). With an odd bin
// count the middle bin's center is exactly zero, so a still action exists.
struct ActionCodec {
  int bins = 101;
  double a_max = kActionMax;

  double low(int dim) const { return dim < 2 ? -a_max : -1.0; }
  double high(int dim) const { return dim < 2 ? a_max : 1.0; }

  std::array<int, kActionDims> encode(const Action& a) const {
    return {discretize_component(a.delta.x, low(0), high(0), bins),
            discretize_component(a.delta.y, low(1), high(1), bins),
            discretize_component(a.gripper_cmd, low(2), high(2), bins)};
  }

  Action decode(const std::array<int, kActionDims>& idx) const {
    Action a;
    a.delta.x = bin_center(idx[0], low(0), high(0), bins);
    a.delta.y = bin_center(idx[1], low(1), high(1), bins);
    a.gripper_cmd = bin_center(idx[2], low(2), high(2), bins);
    return a;
  }
};

inline MlpSpec default_policy_spec(
    int bins, const std::vector<std::size_t>& hidden = {64, 64}) {
  return MlpSpec{kObsDim + kEmbedDim, hidden,
                 static_cast<std::size_t>(kActionDims) *
                     static_cast<std::size_t>(bins),
                 Activation::kTanh};
}

struct BcSample {
  std::vector<double> features;  // observation ++ instruction embedding
  std::array<int, kActionDims> target_bins;
};

inline std::vector<BcSample> build_bc_samples(const DemoDataset& demos,
                                              const ActionCodec& codec) {
  std::vector<BcSample> samples;
  for (const Trajectory& traj : demos.trajectories) {
    if (!traj.has_actions)
      throw UsageError("behavior cloning needs action-labeled demos");
    for (std::size_t t = 0; t < traj.actions.size(); ++t)
      samples.push_back(
          {concat_features(traj.observations[t], traj.instruction),
           codec.encode(traj.actions[t])});
  }
  return samples;
}

// Mean cross-entropy over samples, summed over the three action dimensions.
// Accumulates the parameter gradient when grad is given.
inline double bc_loss(const MlpSpec& spec, const ParamVector& params,
                      int bins, std::span<const BcSample* const> batch,
                      ParamVector* grad = nullptr) {
  if (batch.empty()) throw UsageError("empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<double> upstream;
  for (const BcSample* sample : batch) {
    const ForwardTrace trace = forward_trace(spec, params, sample->features);
    const std::vector<double>& logits = trace.output();
    if (grad != nullptr) upstream.assign(logits.size(), 0.0);
    for (int d = 0; d < kActionDims; ++d) {
      const std::span<const double> slice(logits.data() + d * bins,
                                          static_cast<std::size_t>(bins));
      const std::vector<double> logp = log_softmax(slice);
      const int target = sample->target_bins[d];
      total -= logp[target] * inv;
      if (grad != nullptr) {
        // d(-logp[target])/d(logit_i) = softmax_i - [i == target]
        for (int i = 0; i < bins; ++i)
          upstream[d * bins + i] = std::exp(logp[i]) * inv;
        upstream[d * bins + target] -= inv;
      }
    }
    if (grad != nullptr)
      backward_from_trace(spec, params, trace, upstream, *grad);
  }
  return total;
}

struct BcTrainConfig {
  std::vector<std::size_t> hidden_dims = {64, 64};
  int bins = 101;
  int epochs = 20;
  double lr = 1e-3;
  std::size_t minibatch = 256;
  std::uint64_t seed = 0;
};

struct BcEpochMetrics {
  int epoch = 0;  // 0 is the pre-training evaluation
  double holdout_loss = 0.0;
  double holdout_accuracy = 0.0;  // per-dim top-1, averaged over dims
};

struct BcTrainResult {
  MlpSpec spec;
  ParamVector params;
  ActionCodec codec;
  std::vector<BcEpochMetrics> metrics;
};

inline BcEpochMetrics evaluate_bc(const MlpSpec& spec,
                                  const ParamVector& params, int bins,
                                  const std::vector<BcSample>& holdout,
                                  int epoch) {
  BcEpochMetrics m;
  m.epoch = epoch;
  if (holdout.empty()) return m;
  std::size_t hits = 0;
  double loss = 0.0;
  for (const BcSample& sample : holdout) {
    const std::vector<double> logits =
        forward_mlp(spec, params, sample.features);
    for (int d = 0; d < kActionDims; ++d) {
      const std::span<const double> slice(logits.data() + d * bins,
                                          static_cast<std::size_t>(bins));
      const std::vector<double> logp = log_softmax(slice);
      loss -= logp[sample.target_bins[d]];
      int argmax = 0;
      for (int i = 1; i < bins; ++i)
        if (slice[i] > slice[argmax]) argmax = i;
      if (argmax == sample.target_bins[d]) ++hits;
    }
  }
  const double denom = static_cast<double>(holdout.size());
  m.holdout_loss = loss / denom;
  m.holdout_accuracy =
      static_cast<double>(hits) / (denom * static_cast<double>(kActionDims));
  return m;
}

inline BcTrainResult train_bc(const DemoDataset& train_demos,
                              const DemoDataset& holdout_demos,
                              const BcTrainConfig& config) {
  const ActionCodec codec{config.bins, kActionMax};
  const std::vector<BcSample> train = build_bc_samples(train_demos, codec);
  const std::vector<BcSample> holdout =
      holdout_demos.trajectories.empty()
          ? std::vector<BcSample>{}
          : build_bc_samples(holdout_demos, codec);
  if (train.empty()) throw UsageError("no training samples");

  BcTrainResult result;
  result.spec = default_policy_spec(config.bins, config.hidden_dims);
  result.params = xavier_init(result.spec, mix_seed({config.seed, 0xbc1}));
  result.codec = codec;

  result.metrics.push_back(
      evaluate_bc(result.spec, result.params, config.bins, holdout, 0));

  AdamState adam;
  Rng rng(mix_seed({config.seed, 0xbc2}));
  std::vector<const BcSample*> order(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) order[i] = &train[i];

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t at = 0; at < order.size(); at += config.minibatch) {
      const std::size_t n = std::min(config.minibatch, order.size() - at);
      const std::span<const BcSample* const> batch(order.data() + at, n);
      ParamVector grad = result.params.zeros_like();
      const double loss =
          bc_loss(result.spec, result.params, config.bins, batch, &grad);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite bc loss at epoch " +
                             std::to_string(epoch));
      adam_step(result.params, grad, adam, config.lr);
    }
    result.metrics.push_back(
        evaluate_bc(result.spec, result.params, config.bins, holdout, epoch));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing shared by the pipeline stages.

struct PolicyCheckpoint {
  MlpSpec spec;
  ParamVector params;
  ActionCodec codec;
  nlohmann::json meta;
};

inline nlohmann::json policy_meta(const MlpSpec& spec, const ActionCodec& codec,
                                  const std::string& kind, std::uint64_t seed) {
  return {{"kind", kind},
          {"spec", mlp_spec_to_json(spec)},
          {"bins", codec.bins},
          {"a_max", codec.a_max},
          {"seed", seed}};
}

inline PolicyCheckpoint load_policy(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  PolicyCheckpoint out;
  out.spec = mlp_spec_from_json(ckpt.meta.at("spec"));
  out.params = std::move(ckpt.params);
  out.codec.bins = ckpt.meta.at("bins").get<int>();
  out.codec.a_max = ckpt.meta.at("a_max").get<double>();
  out.meta = std::move(ckpt.meta);
  check_params_match(out.spec, out.params);
  if (out.spec.output_dim != static_cast<std::size_t>(kActionDims) *
                                 static_cast<std::size_t>(out.codec.bins))
    throw ConfigError("policy head size does not match bin count: " + path);
  return out;
}

}  // namespace rftf

#endif  // RFTF_BC_PRETRAIN_HPP_
