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
// Stage-2 RL fine-tuning. Episodes are collected with the current policy,
// scored state-by-state with the frozen Stage-1 value model, min-max
// normalized per episode, turned into dense shaped rewards, and folded into
// outcome-balanced advantages. Updates use a clipped probability-ratio
// surrogate plus an adaptive KL penalty against the fixed pre-fine-tuning
// reference policy, and only the action head receives gradient.
//
// Episode seeds derive from (run seed, global episode index), never from
// worker identity, so any parallel collection schedule reproduces the
// single-worker stream.

#ifndef RFTF_RFTF_FINETUNE_HPP_
#define RFTF_RFTF_FINETUNE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rftf/bc_pretrain.hpp"
#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/expert_demos.hpp"
#include "rftf/rng.hpp"
#include "rftf/tensor_core.hpp"
#include "rftf/value_model.hpp"

namespace rftf {

struct DiscretePolicy {
  MlpSpec spec;
  ParamVector params;
  ActionCodec codec;
};

inline DiscretePolicy policy_from_checkpoint(const PolicyCheckpoint& ckpt) {
  return {ckpt.spec, ckpt.params, ckpt.codec};
}

struct ActionSample {
  Action action;
  double log_prob = 0.0;
  std::array<int, kActionDims> bins{};
};

// Per-dim categorical sample from the softmax logits; the joint log-prob is
// the sum over dimensions because the dims are independent.
inline ActionSample sample_action(const DiscretePolicy& policy,
                                  std::span<const double> features, Rng& rng) {
  const std::vector<double> logits =
      forward_mlp(policy.spec, policy.params, features);
  const int bins = policy.codec.bins;
  ActionSample out;
  for (int d = 0; d < kActionDims; ++d) {
    const std::span<const double> slice(logits.data() + d * bins,
                                        static_cast<std::size_t>(bins));
    const std::vector<double> logp = log_softmax(slice);
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = bins - 1;  // fallback for u landing on accumulated round-off
    for (int i = 0; i < bins; ++i) {
      cum += std::exp(logp[i]);
      if (u < cum) {
        pick = i;
        break;
      }
    }
    out.bins[d] = pick;
    out.log_prob += logp[pick];
  }
  out.action = policy.codec.decode(out.bins);
  return out;
}

inline Action greedy_action(const DiscretePolicy& policy,
                            std::span<const double> features) {
  const std::vector<double> logits =
      forward_mlp(policy.spec, policy.params, features);
  const int bins = policy.codec.bins;
  std::array<int, kActionDims> picks{};
  for (int d = 0; d < kActionDims; ++d) {
    int argmax = 0;
    for (int i = 1; i < bins; ++i)
      if (logits[d * bins + i] > logits[d * bins + argmax]) argmax = i;
    picks[d] = argmax;
  }
  return policy.codec.decode(picks);
}

inline double log_prob_of(const DiscretePolicy& policy,
                          std::span<const double> features,
                          const std::array<int, kActionDims>& bins_idx) {
  const std::vector<double> logits =
      forward_mlp(policy.spec, policy.params, features);
  const int bins = policy.codec.bins;
  double lp = 0.0;
  for (int d = 0; d < kActionDims; ++d) {
    const std::span<const double> slice(logits.data() + d * bins,
                                        static_cast<std::size_t>(bins));
    lp += log_softmax(slice)[bins_idx[d]];
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Reward shaping and advantages.

// Min-max to [0, 1] within the episode; a constant sequence maps to zeros so
// its shaped rewards vanish instead of dividing by zero.
inline std::vector<double> normalize_values(std::span<const double> raw) {
  if (raw.empty()) throw UsageError("no values to normalize");
  double lo = raw[0], hi = raw[0];
  for (double v : raw) {
    if (!std::isfinite(v)) throw NumericalError("non-finite raw value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(raw.size(), 0.0);
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) * inv;
  }
  return out;
}

// R_t = gamma * V(s_{t+1}) - V(s_t) for t < T; the end-of-episode entry is 0.
inline std::vector<double> shaped_rewards(std::span<const double> values,
                                          double gamma) {
  if (values.empty()) throw UsageError("no values to shape");
  std::vector<double> rewards(values.size(), 0.0);
  for (std::size_t t = 0; t + 1 < values.size(); ++t)
    rewards[t] = gamma * values[t + 1] - values[t];
  return rewards;
}

// A_t = eta * [ I(success) + sum_{n=t}^{T} (gamma*lambda)^{n-t} R_n ], with
// eta and the +-1 indicator chosen by the episode outcome. Computed by the
// usual backward recursion on the discounted tail sum.
inline std::vector<double> advantages(std::span<const double> rewards,
                                      bool success, double gamma,
                                      double lambda, double eta_success,
                                      double eta_failure) {
  if (rewards.empty()) throw UsageError("no rewards");
  const double eta = success ? eta_success : eta_failure;
  const double indicator = success ? 1.0 : -1.0;
  const double decay = gamma * lambda;
  std::vector<double> out(rewards.size());
  double tail = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    tail = rewards[t] + decay * tail;
    out[t] = eta * (indicator + tail);
  }
  return out;
}

// Outcome-only ablation: every reward zeroed, so the advantage collapses to
// eta * I(success) at every step. gamma and lambda are accepted to mirror
// the dense signature; they cannot influence the result.
inline std::vector<double> sparse_baseline_advantages(
    bool success, std::size_t T, double /*gamma*/, double /*lambda*/,
    double eta_success, double eta_failure) {
  const double eta = success ? eta_success : eta_failure;
  const double indicator = success ? 1.0 : -1.0;
  return std::vector<double>(T + 1, eta * indicator);
}

// ---------------------------------------------------------------------------
// Rollout collection.

struct RolloutEpisode {
  Trajectory trajectory;                  // actions always present
  std::vector<std::array<int, kActionDims>> action_bins;
  std::vector<double> old_log_probs;      // one per action, at collection
  std::vector<double> raw_values;         // one per state, frozen value model
};

// Uniform instruction draw over (task, train paraphrase). Fine-tuning never
// sees eval paraphrases.
inline Instruction draw_train_instruction(Rng& rng) {
  const Task task = kAllTasks[rng.integer(kNumTasks)];
  const int paraphrase = static_cast<int>(rng.integer(2));
  return make_instruction(task, paraphrase);
}

inline RolloutEpisode collect_episode(const DiscretePolicy& policy,
                                      const ValueModel& value_model,
                                      const EnvVariant& variant,
                                      std::uint64_t run_seed,
                                      std::uint64_t episode_index,
                                      int horizon = kHorizon) {
  Rng episode_rng(mix_seed({run_seed, episode_index, 0xE1}));
  const Instruction ins = draw_train_instruction(episode_rng);
  const std::uint64_t env_seed = mix_seed({run_seed, episode_index, 0xE2});

  Env env(variant, horizon);
  RolloutEpisode ep;
  ep.trajectory.instruction = ins;
  ep.trajectory.has_actions = true;
  ep.trajectory.variant_id = variant.id;
  ep.trajectory.seed = env_seed;
  Observation obs = env.reset(ins, env_seed);
  ep.trajectory.observations.push_back(obs);
  ep.raw_values.push_back(
      predict_value_features(value_model, concat_features(obs, ins)));
  while (!env.state().done) {
    const std::vector<double> features = concat_features(obs, ins);
    const ActionSample sample = sample_action(policy, features, episode_rng);
    const StepOutcome out = env.step(sample.action);
    ep.trajectory.actions.push_back(sample.action);
    ep.action_bins.push_back(sample.bins);
    ep.old_log_probs.push_back(sample.log_prob);
    ep.trajectory.success = out.success;
    obs = out.obs;
    ep.trajectory.observations.push_back(obs);
    ep.raw_values.push_back(
        predict_value_features(value_model, concat_features(obs, ins)));
  }
  return ep;
}

inline std::vector<RolloutEpisode> collect_rollouts(
    const DiscretePolicy& policy, const ValueModel& value_model,
    const std::vector<EnvVariant>& variants, int n_episodes,
    std::uint64_t run_seed, std::uint64_t episode_index_base = 0,
    int horizon = kHorizon) {
  if (variants.empty()) throw ConfigError("no variants to roll out in");
  std::vector<RolloutEpisode> episodes;
  episodes.reserve(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t idx = episode_index_base + e;
    episodes.push_back(collect_episode(policy, value_model,
                                       variants[idx % variants.size()],
                                       run_seed, idx, horizon));
  }
  return episodes;
}

// ---------------------------------------------------------------------------
// PPO update machinery.

struct TransitionSample {
  std::vector<double> features;
  std::array<int, kActionDims> bins{};
  double old_log_prob = 0.0;
  double advantage = 0.0;
  std::vector<double> ref_log_probs;  // per-dim log-softmax of the fixed ref
  std::size_t episode = 0;
};

enum class RewardMode { kDense, kSparse };

inline RewardMode reward_mode_from_name(const std::string& s) {
  if (s == "dense") return RewardMode::kDense;
  if (s == "sparse") return RewardMode::kSparse;
  throw ConfigError("reward mode must be 'dense' or 'sparse'");
}

// Flattens episodes into per-transition samples with advantages attached.
// The reference policy's per-bin log-probs are cached here once per batch;
// the reference never moves during fine-tuning.
inline std::vector<TransitionSample> build_transition_samples(
    const std::vector<RolloutEpisode>& episodes,
    const DiscretePolicy& ref_policy, RewardMode mode, double gamma,
    double lambda, double eta_success, double eta_failure) {
  std::vector<TransitionSample> samples;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const RolloutEpisode& ep = episodes[e];
    const std::size_t T = ep.trajectory.actions.size();
    std::vector<double> adv;
    if (mode == RewardMode::kDense) {
      const std::vector<double> normalized = normalize_values(ep.raw_values);
      const std::vector<double> rewards = shaped_rewards(normalized, gamma);
      adv = advantages(rewards, ep.trajectory.success, gamma, lambda,
                       eta_success, eta_failure);
    } else {
      adv = sparse_baseline_advantages(ep.trajectory.success, T, gamma,
                                       lambda, eta_success, eta_failure);
    }
    for (std::size_t t = 0; t < T; ++t) {
      TransitionSample s;
      s.features = concat_features(ep.trajectory.observations[t],
                                   ep.trajectory.instruction);
      s.bins = ep.action_bins[t];
      s.old_log_prob = ep.old_log_probs[t];
      s.advantage = adv[t];
      s.episode = e;
      const std::vector<double> ref_logits =
          forward_mlp(ref_policy.spec, ref_policy.params, s.features);
      s.ref_log_probs.reserve(ref_logits.size());
      const int bins = ref_policy.codec.bins;
      for (int d = 0; d < kActionDims; ++d) {
        const std::vector<double> logp = log_softmax(std::span<const double>(
            ref_logits.data() + d * bins, static_cast<std::size_t>(bins)));
        s.ref_log_probs.insert(s.ref_log_probs.end(), logp.begin(),
                               logp.end());
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

struct PpoStats {
  double loss = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

// loss = -mean( min(r*A, clip(r, 1-eps, 1+eps)*A) - beta * KL(new || ref) ).
// The ratio r = exp(new_lp - old_lp) differentiates as r itself w.r.t. the
// new log-prob, and contributes zero gradient when the clipped branch wins.
// KL is exact per dimension over the categorical bins.
inline PpoStats ppo_loss(const MlpSpec& spec, const ParamVector& params,
                         int bins,
                         std::span<const TransitionSample* const> batch,
                         double epsilon, double beta,
                         ParamVector* grad = nullptr) {
  if (batch.empty()) throw UsageError("empty ppo batch");
  PpoStats stats;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<double> upstream;
  std::vector<double> logp_all(static_cast<std::size_t>(kActionDims) * bins);
  for (std::size_t s_idx = 0; s_idx < batch.size(); ++s_idx) {
    const TransitionSample& s = *batch[s_idx];
    const ForwardTrace trace = forward_trace(spec, params, s.features);
    const std::vector<double>& logits = trace.output();

    double new_lp = 0.0;
    for (int d = 0; d < kActionDims; ++d) {
      const std::vector<double> logp = log_softmax(std::span<const double>(
          logits.data() + d * bins, static_cast<std::size_t>(bins)));
      std::copy(logp.begin(), logp.end(), logp_all.begin() + d * bins);
      new_lp += logp[s.bins[d]];
    }

    const double ratio = std::exp(new_lp - s.old_log_prob);
    if (!std::isfinite(ratio))
      throw NumericalError("non-finite ratio at batch sample " +
                           std::to_string(s_idx) + " (episode " +
                           std::to_string(s.episode) + ")");
    const double lo = 1.0 - epsilon, hi = 1.0 + epsilon;
    const double clipped = ratio < lo ? lo : (ratio > hi ? hi : ratio);
    const double surr_unclipped = ratio * s.advantage;
    const double surr_clipped = clipped * s.advantage;
    const bool take_unclipped = surr_unclipped <= surr_clipped;
    const double surr = take_unclipped ? surr_unclipped : surr_clipped;
    if (surr_clipped < surr_unclipped) stats.clip_fraction += inv;
    stats.mean_ratio += ratio * inv;

    // Exact categorical KL(new || ref), summed over action dimensions.
    double kl_sample = 0.0;
    std::array<double, kActionDims> kl_dim{};
    for (int d = 0; d < kActionDims; ++d) {
      double kl = 0.0;
      for (int i = 0; i < bins; ++i) {
        const double lp = logp_all[d * bins + i];
        kl += std::exp(lp) * (lp - s.ref_log_probs[d * bins + i]);
      }
      kl_dim[d] = kl;
      kl_sample += kl;
    }
    stats.mean_kl += kl_sample * inv;
    stats.loss -= (surr - beta * kl_sample) * inv;

    if (grad != nullptr) {
      upstream.assign(logits.size(), 0.0);
      const double surr_factor = take_unclipped ? ratio * s.advantage : 0.0;
      for (int d = 0; d < kActionDims; ++d) {
        for (int i = 0; i < bins; ++i) {
          const double p = std::exp(logp_all[d * bins + i]);
          // d new_lp / d z_i = [i == bin] - p_i
          const double dlp = (i == s.bins[d] ? 1.0 : 0.0) - p;
          // d KL_d / d z_i = p_i * ((log p_i - log q_i) - KL_d)
          const double dkl = p * ((logp_all[d * bins + i] -
                                   s.ref_log_probs[d * bins + i]) -
                                  kl_dim[d]);
          upstream[d * bins + i] =
              -inv * (surr_factor * dlp - beta * dkl);
        }
      }
      backward_from_trace(spec, params, trace, upstream, *grad);
    }
  }
  return stats;
}

struct KlController {
  double beta = 0.1;
  double target_kl = 0.01;
};

// Doubling/halving with a dead zone of factor 1.5 around the target,
// clamped to [1e-5, 10].
inline KlController adapt_beta(KlController c, double observed_kl) {
  if (observed_kl < 0.0) throw UsageError("negative observed kl");
  if (observed_kl > 1.5 * c.target_kl)
    c.beta *= 2.0;
  else if (observed_kl < c.target_kl / 1.5)
    c.beta *= 0.5;
  c.beta = std::max(1e-5, std::min(10.0, c.beta));
  return c;
}

// ---------------------------------------------------------------------------
// The fine-tuning loop.

struct FinetuneConfig {
  int total_episodes = 8192;
  int episodes_per_batch = 64;
  int ppo_epochs = 4;
  std::size_t minibatch = 1024;
  double gamma = 0.99;
  double lambda = 0.95;
  double epsilon = 0.2;
  double eta_success = 0.25;
  double eta_failure = 1.0;
  double beta0 = 0.1;
  double target_kl = 0.01;
  double lr = 3e-4;
  RewardMode reward_mode = RewardMode::kDense;
  std::uint64_t seed = 0;
  int horizon = kHorizon;
};

struct FinetuneIterMetrics {
  int iter = 0;
  int episodes = 0;  // cumulative
  double success_rate = 0.0;
  double mean_ep_len = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  double beta = 0.0;
  double mean_advantage = 0.0;
};

struct FinetuneResult {
  DiscretePolicy policy;
  std::vector<FinetuneIterMetrics> metrics;
  bool diverged = false;
};

// Only the head segments move: the trunk gradient is masked to zero, which
// under Adam leaves trunk parameters bit-identical. The reference policy is
// the incoming checkpoint and never changes.
inline FinetuneResult finetune(const DiscretePolicy& initial_policy,
                               const ValueModel& value_model,
                               const std::vector<EnvVariant>& variants,
                               const FinetuneConfig& config) {
  if (config.episodes_per_batch < 1 || config.total_episodes < 1)
    throw ConfigError("episode counts must be positive");
  FinetuneResult result;
  result.policy = initial_policy;
  const DiscretePolicy& ref_policy = initial_policy;

  AdamState adam;
  KlController kl_ctrl{config.beta0, config.target_kl};
  Rng update_rng(mix_seed({config.seed, 0xF7}));

  const int n_iters =
      (config.total_episodes + config.episodes_per_batch - 1) /
      config.episodes_per_batch;
  double initial_success_rate = -1.0;
  int low_success_streak = 0;

  for (int iter = 0; iter < n_iters; ++iter) {
    const std::vector<RolloutEpisode> episodes = collect_rollouts(
        result.policy, value_model, variants, config.episodes_per_batch,
        config.seed,
        static_cast<std::uint64_t>(iter) *
            static_cast<std::uint64_t>(config.episodes_per_batch),
        config.horizon);

    double successes = 0.0, length_sum = 0.0;
    for (const RolloutEpisode& ep : episodes) {
      successes += ep.trajectory.success ? 1.0 : 0.0;
      length_sum += static_cast<double>(ep.trajectory.actions.size());
    }
    const double success_rate = successes / episodes.size();
    if (initial_success_rate < 0.0) initial_success_rate = success_rate;

    std::vector<TransitionSample> samples = build_transition_samples(
        episodes, ref_policy, config.reward_mode, config.gamma, config.lambda,
        config.eta_success, config.eta_failure);

    double adv_sum = 0.0;
    for (const TransitionSample& s : samples) adv_sum += s.advantage;

    std::vector<const TransitionSample*> order(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) order[i] = &samples[i];

    double kl_acc = 0.0, clip_acc = 0.0;
    std::size_t stat_batches = 0;
    for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
      shuffle(order, update_rng);
      for (std::size_t at = 0; at < order.size(); at += config.minibatch) {
        const std::size_t n = std::min(config.minibatch, order.size() - at);
        const std::span<const TransitionSample* const> batch(
            order.data() + at, n);
        ParamVector grad = result.policy.params.zeros_like();
        const PpoStats stats =
            ppo_loss(result.policy.spec, result.policy.params,
                     result.policy.codec.bins, batch, config.epsilon,
                     kl_ctrl.beta, &grad);
        mask_to_head(result.policy.spec, grad);
        adam_step(result.policy.params, grad, adam, config.lr);
        kl_acc += stats.mean_kl;
        clip_acc += stats.clip_fraction;
        ++stat_batches;
      }
    }
    const double mean_kl = stat_batches > 0 ? kl_acc / stat_batches : 0.0;
    const double clip_frac = stat_batches > 0 ? clip_acc / stat_batches : 0.0;
    kl_ctrl = adapt_beta(kl_ctrl, mean_kl);

    FinetuneIterMetrics m;
    m.iter = iter;
    m.episodes = (iter + 1) * config.episodes_per_batch;
    m.success_rate = success_rate;
    m.mean_ep_len = length_sum / episodes.size();
    m.mean_kl = mean_kl;
    m.clip_frac = clip_frac;
    m.beta = kl_ctrl.beta;
    m.mean_advantage =
        samples.empty() ? 0.0 : adv_sum / static_cast<double>(samples.size());
    result.metrics.push_back(m);

    // Divergence guard: a sustained collapse below a quarter of the initial
    // success rate stops the run rather than burning the episode budget.
    if (initial_success_rate > 0.0 &&
        success_rate < 0.25 * initial_success_rate) {
      if (++low_success_streak >= 3) {
        result.diverged = true;
        break;
      }
    } else {
      low_success_streak = 0;
    }
  }
  return result;
}

}  // namespace rftf

#endif  // RFTF_RFTF_FINETUNE_HPP_
