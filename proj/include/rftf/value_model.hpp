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
// Stage-1 value model V(s, l): a scalar head on the shared trunk, trained
// only from the temporal order of demonstration states. Later states of a
// successful demo are pushed above earlier ones with a pairwise logistic
// loss; no action labels and no reward signal are involved.

#ifndef RFTF_VALUE_MODEL_HPP_
#define RFTF_VALUE_MODEL_HPP_

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "rftf/checkpoint.hpp"
#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/expert_demos.hpp"
#include "rftf/rng.hpp"
#include "rftf/tensor_core.hpp"

namespace rftf {

inline MlpSpec default_value_spec(
    const std::vector<std::size_t>& hidden = {64, 64}) {
  return MlpSpec{kObsDim + kEmbedDim, hidden, 1, Activation::kTanh};
}

struct ValueModel {
  MlpSpec spec;
  ParamVector params;
  int epoch = 0;
};

inline ValueModel load_value_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  ValueModel model;
  model.spec = mlp_spec_from_json(ckpt.meta.at("spec"));
  model.params = std::move(ckpt.params);
  model.epoch = ckpt.meta.value("epoch", 0);
  check_params_match(model.spec, model.params);
  if (model.spec.output_dim != 1)
    throw ConfigError("value model must have a scalar head: " + path);
  return model;
}

inline double predict_value_features(const ValueModel& m,
                                     std::span<const double> features) {
  return forward_mlp(m.spec, m.params, features)[0];
}

inline double predict_value(const ValueModel& m, const Observation& obs,
                            const Instruction& ins) {
  return predict_value_features(m, concat_features(obs, ins));
}

inline std::vector<double> score_episode(const ValueModel& m,
                                         const Trajectory& traj) {
  if (traj.observations.empty()) throw UsageError("empty trajectory");
  std::vector<double> values;
  values.reserve(traj.observations.size());
  for (const Observation& obs : traj.observations)
    values.push_back(predict_value(m, obs, traj.instruction));
  return values;
}

// Mean over all C(n,2) ordered pairs (i < j) of -log sigmoid(v_j - v_i),
// computed as log(1 + exp(-(v_j - v_i))). Only differences enter, so the
// loss is invariant to shifting every value by a constant.
inline double contrastive_loss(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw UsageError("contrastive loss needs at least 2 values");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      total += log1pexp(-(values[j] - values[i]));
  return total / (static_cast<double>(n) * (n - 1) / 2.0);
}

// Index pair into one trajectory's state sequence; early < late always.
struct StatePair {
  std::size_t early = 0;
  std::size_t late = 0;
};

// Loss over an explicit pair subset, plus d(loss)/d(value_k) if grad given.
// d/dD of log(1+exp(-D)) = -sigmoid(-D); each pair pulls its later value up
// and its earlier value down by the same amount.
inline double contrastive_loss_pairs(std::span<const double> values,
                                     const std::vector<StatePair>& pairs,
                                     std::vector<double>* grad = nullptr) {
  if (pairs.empty()) throw UsageError("contrastive loss needs pairs");
  if (grad != nullptr) grad->assign(values.size(), 0.0);
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (const StatePair& p : pairs) {
    if (p.early >= p.late || p.late >= values.size())
      throw UsageError("bad state pair indices");
    const double delta = values[p.late] - values[p.early];
    total += log1pexp(-delta);
    if (grad != nullptr) {
      const double s = sigmoid(-delta) * inv;
      (*grad)[p.late] -= s;
      (*grad)[p.early] += s;
    }
  }
  return total * inv;
}

// Uniform sample of min(C(n,2), cap) distinct pairs. Enumerating the pair
// set is quadratic in episode length but episodes are at most horizon long.
inline std::vector<StatePair> sample_state_pairs(std::size_t n_states,
                                                 std::size_t cap, Rng& rng) {
  if (n_states < 2) throw UsageError("need at least 2 states to pair");
  std::vector<StatePair> all;
  all.reserve(n_states * (n_states - 1) / 2);
  for (std::size_t i = 0; i + 1 < n_states; ++i)
    for (std::size_t j = i + 1; j < n_states; ++j) all.push_back({i, j});
  if (all.size() <= cap) return all;
  // Partial Fisher-Yates: the first `cap` slots become the sample.
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  rng.integer(all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(cap);
  return all;
}

// Fraction of sampled (earlier, later) frame pairs with V(later) strictly
// greater than V(earlier). Ties count as incorrect, so a constant model
// scores 0, not 0.5.
inline double pairwise_accuracy(const ValueModel& model,
                                const DemoDataset& demos, std::size_t n_pairs,
                                std::uint64_t seed) {
  if (n_pairs < 1) throw UsageError("n_pairs must be >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < demos.trajectories.size(); ++i)
    if (demos.trajectories[i].observations.size() >= 2) eligible.push_back(i);
  if (eligible.empty()) throw UsageError("no trajectory with 2+ states");
  Rng rng(seed);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const Trajectory& traj =
        demos.trajectories[eligible[rng.integer(eligible.size())]];
    const std::size_t n = traj.observations.size();
    std::size_t a = static_cast<std::size_t>(rng.integer(n));
    std::size_t b = static_cast<std::size_t>(rng.integer(n - 1));
    if (b >= a) ++b;  // distinct uniform pair
    const std::size_t early = std::min(a, b), late = std::max(a, b);
    const double v_early =
        predict_value(model, traj.observations[early], traj.instruction);
    const double v_late =
        predict_value(model, traj.observations[late], traj.instruction);
    if (v_late > v_early) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_pairs);
}

// Centered moving average, window width 5 by default, truncated at episode
// edges. Used to read trend out of noisy per-state value curves.
inline std::vector<double> smooth_values(const std::vector<double>& values,
                                         int window = 5) {
  if (window < 1 || window % 2 == 0)
    throw UsageError("smoothing window must be odd and positive");
  const int r = window / 2;
  const int n = static_cast<int>(values.size());
  std::vector<double> out(values.size());
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - r);
    const int hi = std::min(n - 1, t + r);
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) acc += values[k];
    out[t] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

struct ValueTrainConfig {
  std::vector<std::size_t> hidden_dims = {64, 64};
  int epochs = 5;
  double lr = 1e-3;
  std::size_t pairs_per_trajectory = 64;
  std::size_t holdout_pairs = 2000;
  std::uint64_t seed = 0;
};

struct ValueEpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double holdout_pairwise_accuracy = 0.0;
};

struct ValueTrainResult {
  ValueModel model;                      // the epoch-1 selection
  std::vector<ValueModel> epoch_models;  // every epoch, for on-disk retention
  std::vector<ValueEpochMetrics> metrics;
  std::vector<double> epoch1_batch_losses;
};

// One optimizer step per trajectory over its sampled pairs. The returned
// model is always the epoch-1 checkpoint: prolonged training overfits the
// ordering objective, and held-out accuracy is already near its peak after
// one pass. Later epochs are returned too so callers can keep them on disk.
inline ValueTrainResult train_value_model(
    const DemoDataset& train_demos, const DemoDataset& holdout_demos,
    const ValueTrainConfig& config, const MlpSpec* init_spec = nullptr,
    const ParamVector* init_params = nullptr) {
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (train_demos.trajectories.empty())
    throw UsageError("no training trajectories");
  bool any_pairable = false;
  for (const Trajectory& t : train_demos.trajectories)
    if (t.observations.size() >= 2) any_pairable = true;
  if (!any_pairable)
    throw UsageError("no trajectory with 2+ states to pair");

  MlpSpec spec = default_value_spec(config.hidden_dims);
  ParamVector params = xavier_init(spec, mix_seed({config.seed, 0x7a1}));
  if (init_params != nullptr) {
    if (init_spec == nullptr)
      throw ConfigError("init params given without their spec");
    copy_trunk(*init_spec, *init_params, spec, params);
  }

  AdamState adam;
  Rng rng(mix_seed({config.seed, 0x7a2}));
  const std::uint64_t holdout_seed = mix_seed({config.seed, 0x7a3});

  ValueTrainResult result;
  std::vector<std::size_t> order(train_demos.trajectories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t idx : order) {
      const Trajectory& traj = train_demos.trajectories[idx];
      const std::size_t n = traj.observations.size();
      if (n < 2) continue;
      const std::vector<StatePair> pairs =
          sample_state_pairs(n, config.pairs_per_trajectory, rng);

      std::vector<ForwardTrace> traces;
      traces.reserve(n);
      std::vector<double> values(n);
      for (std::size_t t = 0; t < n; ++t) {
        traces.push_back(forward_trace(
            spec, params,
            concat_features(traj.observations[t], traj.instruction)));
        values[t] = traces.back().output()[0];
      }

      std::vector<double> value_grad;
      const double loss = contrastive_loss_pairs(values, pairs, &value_grad);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite contrastive loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      ParamVector grad = params.zeros_like();
      for (std::size_t t = 0; t < n; ++t) {
        if (value_grad[t] == 0.0) continue;
        const std::vector<double> upstream = {value_grad[t]};
        backward_from_trace(spec, params, traces[t], upstream, grad);
      }
      adam_step(params, grad, adam, config.lr);
      loss_sum += loss;
      ++batches;
      if (epoch == 1) result.epoch1_batch_losses.push_back(loss);
    }

    ValueModel snapshot{spec, params, epoch};
    const double acc =
        holdout_demos.trajectories.empty()
            ? 0.0
            : pairwise_accuracy(snapshot, holdout_demos, config.holdout_pairs,
                                holdout_seed);
    result.metrics.push_back(
        {epoch, loss_sum / static_cast<double>(batches), acc});
    result.epoch_models.push_back(std::move(snapshot));
  }
  result.model = result.epoch_models.front();
  return result;
}

}  // namespace rftf

#endif  // RFTF_VALUE_MODEL_HPP_
