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
// Experiment orchestration: chained five-task evaluation with the L1..L5
// metrics, the generalization / adaptation / ablation protocols over seeds,
// and the JSON run report. Everything here is deterministic given the
// configuration; evaluation sequences are seeded by sequence index, so any
// parallel schedule would reduce to the same aggregates.

#ifndef RFTF_HARNESS_HPP_
#define RFTF_HARNESS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rftf/bc_pretrain.hpp"
#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/rftf_finetune.hpp"
#include "rftf/rng.hpp"
#include "rftf/value_model.hpp"

namespace rftf {

inline constexpr int kChainLength = 5;

// One evaluation step: a task paired with a held-out paraphrase.
struct ChainStep {
  Task task = Task::kReachTarget;
  int paraphrase_id = 2;
};

struct ChainResult {
  std::vector<int> completed;              // per sequence, 0..kChainLength
  std::array<double, kChainLength> levels{};  // L1..L5
  double avg_len = 0.0;
};

// Executes the episodes of one sequence, stopping at the first failure, and
// returns how many initial tasks succeeded.
using SequenceRunner =
    std::function<int(std::uint64_t seq_seed,
                      const std::array<ChainStep, kChainLength>& steps)>;

// Draws each sequence's tasks (uniform with replacement) and held-out
// paraphrases, delegates execution, and aggregates the level metrics.
// L_n is the fraction of sequences that completed at least n tasks, so
// avg_len, the mean completed count, equals the sum of the levels.
inline ChainResult run_chain_protocol(int n_sequences, std::uint64_t seed,
                                      const SequenceRunner& run_sequence) {
  if (n_sequences < 1) throw ConfigError("n_sequences must be >= 1");
  ChainResult result;
  result.completed.reserve(n_sequences);
  for (int s = 0; s < n_sequences; ++s) {
    const std::uint64_t seq_seed =
        mix_seed({seed, static_cast<std::uint64_t>(s)});
    Rng draw_rng(mix_seed({seq_seed, 0xC1}));
    std::array<ChainStep, kChainLength> steps;
    for (ChainStep& step : steps) {
      step.task = kAllTasks[draw_rng.integer(kNumTasks)];
      step.paraphrase_id = 2 + static_cast<int>(draw_rng.integer(2));
    }
    const int completed = run_sequence(seq_seed, steps);
    if (completed < 0 || completed > kChainLength)
      throw UsageError("sequence runner returned " +
                       std::to_string(completed));
    result.completed.push_back(completed);
  }
  for (int n = 1; n <= kChainLength; ++n) {
    std::size_t hits = 0;
    for (int c : result.completed)
      if (c >= n) ++hits;
    result.levels[n - 1] =
        static_cast<double>(hits) / static_cast<double>(n_sequences);
  }
  double total = 0.0;
  for (int c : result.completed) total += c;
  result.avg_len = total / static_cast<double>(n_sequences);
  return result;
}

// Greedy chained evaluation of a policy in one environment variant. Within a
// sequence the world persists across tasks (the effector re-homes, objects
// stay where the previous task left them) unless chain_persistence is off,
// in which case every task starts from a fresh reset.
inline ChainResult eval_chains(const DiscretePolicy& policy,
                               const EnvVariant& variant, int n_sequences,
                               std::uint64_t seed, int horizon = kHorizon,
                               bool chain_persistence = true) {
  const SequenceRunner runner =
      [&](std::uint64_t seq_seed,
          const std::array<ChainStep, kChainLength>& steps) {
        Env env(variant, horizon);
        int completed = 0;
        for (int pos = 0; pos < kChainLength; ++pos) {
          const Instruction ins =
              make_instruction(steps[pos].task, steps[pos].paraphrase_id);
          const std::uint64_t episode_seed =
              mix_seed({seq_seed, 0xC2, static_cast<std::uint64_t>(pos)});
          Observation obs = (pos == 0 || !chain_persistence)
                                ? env.reset(ins, episode_seed)
                                : env.chain_reset(ins, episode_seed);
          while (!env.state().done)
            obs = env.step(greedy_action(policy, concat_features(obs, ins)))
                      .obs;
          if (!env.state().success) break;
          ++completed;
        }
        return completed;
      };
  return run_chain_protocol(n_sequences, seed, runner);
}

// ---------------------------------------------------------------------------
// Configuration.

struct EvalConfig {
  int n_sequences = 500;
  int horizon = kHorizon;
  bool chain_persistence = true;
};

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<char> train_variants = {'A', 'B', 'C'};
  char eval_variant = 'D';
  int demos_per_pair = 50;
  int holdout_demos_per_pair = 10;
  std::uint64_t demo_seed = 0;
  BcTrainConfig bc;
  ValueTrainConfig value;
  FinetuneConfig finetune;
  EvalConfig eval;

  void validate() const {
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (train_variants.empty()) throw ConfigError("no training variants");
    if (finetune.gamma < 0.0 || finetune.gamma > 1.0)
      throw ConfigError("gamma must lie in [0, 1]");
    if (finetune.lambda < 0.0 || finetune.lambda > 1.0)
      throw ConfigError("lambda must lie in [0, 1]");
    if (demos_per_pair < 1 || holdout_demos_per_pair < 1)
      throw ConfigError("demo counts must be positive");
    if (eval.n_sequences < 1) throw ConfigError("n_sequences must be >= 1");
  }
};

inline nlohmann::json hidden_to_json(const std::vector<std::size_t>& dims) {
  return nlohmann::json(dims);
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seeds"] = c.seeds;
  std::string train;
  for (char v : c.train_variants) train.push_back(v);
  j["train_variants"] = train;
  j["eval_variant"] = std::string(1, c.eval_variant);
  j["demos_per_pair"] = c.demos_per_pair;
  j["holdout_demos_per_pair"] = c.holdout_demos_per_pair;
  j["demo_seed"] = c.demo_seed;
  j["bc"] = {{"hidden_dims", hidden_to_json(c.bc.hidden_dims)},
             {"bins", c.bc.bins},
             {"epochs", c.bc.epochs},
             {"lr", c.bc.lr},
             {"minibatch", c.bc.minibatch},
             {"seed", c.bc.seed}};
  j["value"] = {{"hidden_dims", hidden_to_json(c.value.hidden_dims)},
                {"epochs", c.value.epochs},
                {"lr", c.value.lr},
                {"pairs_per_trajectory", c.value.pairs_per_trajectory},
                {"holdout_pairs", c.value.holdout_pairs},
                {"seed", c.value.seed}};
  j["finetune"] = {{"total_episodes", c.finetune.total_episodes},
                   {"episodes_per_batch", c.finetune.episodes_per_batch},
                   {"ppo_epochs", c.finetune.ppo_epochs},
                   {"minibatch", c.finetune.minibatch},
                   {"gamma", c.finetune.gamma},
                   {"lambda", c.finetune.lambda},
                   {"epsilon", c.finetune.epsilon},
                   {"eta_success", c.finetune.eta_success},
                   {"eta_failure", c.finetune.eta_failure},
                   {"beta0", c.finetune.beta0},
                   {"target_kl", c.finetune.target_kl},
                   {"lr", c.finetune.lr},
                   {"reward",
                    c.finetune.reward_mode == RewardMode::kDense ? "dense"
                                                                 : "sparse"},
                   {"horizon", c.finetune.horizon}};
  j["eval"] = {{"n_sequences", c.eval.n_sequences},
               {"horizon", c.eval.horizon},
               {"chain_persistence", c.eval.chain_persistence}};
  return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("train_variants")) {
    const std::string s = j.at("train_variants").get<std::string>();
    c.train_variants.assign(s.begin(), s.end());
  }
  if (j.contains("eval_variant")) {
    const std::string s = j.at("eval_variant").get<std::string>();
    if (s.size() != 1) throw ConfigError("eval_variant must be one letter");
    c.eval_variant = s[0];
  }
  c.demos_per_pair = j.value("demos_per_pair", c.demos_per_pair);
  c.holdout_demos_per_pair =
      j.value("holdout_demos_per_pair", c.holdout_demos_per_pair);
  c.demo_seed = j.value("demo_seed", c.demo_seed);
  if (j.contains("bc")) {
    const nlohmann::json& b = j.at("bc");
    if (b.contains("hidden_dims"))
      c.bc.hidden_dims = b.at("hidden_dims").get<std::vector<std::size_t>>();
    c.bc.bins = b.value("bins", c.bc.bins);
    c.bc.epochs = b.value("epochs", c.bc.epochs);
    c.bc.lr = b.value("lr", c.bc.lr);
    c.bc.minibatch = b.value("minibatch", c.bc.minibatch);
    c.bc.seed = b.value("seed", c.bc.seed);
  }
  if (j.contains("value")) {
    const nlohmann::json& v = j.at("value");
    if (v.contains("hidden_dims"))
      c.value.hidden_dims =
          v.at("hidden_dims").get<std::vector<std::size_t>>();
    c.value.epochs = v.value("epochs", c.value.epochs);
    c.value.lr = v.value("lr", c.value.lr);
    c.value.pairs_per_trajectory =
        v.value("pairs_per_trajectory", c.value.pairs_per_trajectory);
    c.value.holdout_pairs = v.value("holdout_pairs", c.value.holdout_pairs);
    c.value.seed = v.value("seed", c.value.seed);
  }
  if (j.contains("finetune")) {
    const nlohmann::json& f = j.at("finetune");
    c.finetune.total_episodes =
        f.value("total_episodes", c.finetune.total_episodes);
    c.finetune.episodes_per_batch =
        f.value("episodes_per_batch", c.finetune.episodes_per_batch);
    c.finetune.ppo_epochs = f.value("ppo_epochs", c.finetune.ppo_epochs);
    c.finetune.minibatch = f.value("minibatch", c.finetune.minibatch);
    c.finetune.gamma = f.value("gamma", c.finetune.gamma);
    c.finetune.lambda = f.value("lambda", c.finetune.lambda);
    c.finetune.epsilon = f.value("epsilon", c.finetune.epsilon);
    c.finetune.eta_success = f.value("eta_success", c.finetune.eta_success);
    c.finetune.eta_failure = f.value("eta_failure", c.finetune.eta_failure);
    c.finetune.beta0 = f.value("beta0", c.finetune.beta0);
    c.finetune.target_kl = f.value("target_kl", c.finetune.target_kl);
    c.finetune.lr = f.value("lr", c.finetune.lr);
    if (f.contains("reward"))
      c.finetune.reward_mode =
          reward_mode_from_name(f.at("reward").get<std::string>());
    c.finetune.horizon = f.value("horizon", c.finetune.horizon);
  }
  if (j.contains("eval")) {
    const nlohmann::json& e = j.at("eval");
    c.eval.n_sequences = e.value("n_sequences", c.eval.n_sequences);
    c.eval.horizon = e.value("horizon", c.eval.horizon);
    c.eval.chain_persistence =
        e.value("chain_persistence", c.eval.chain_persistence);
  }
  c.validate();
  return c;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// Hash of the canonical (key-sorted, compact) config dump. A rerun with the
// same configuration reproduces the hash; any hyperparameter change moves it.
inline std::string config_hash(const ExperimentConfig& c) {
  return hex64(fnv1a64(experiment_config_to_json(c).dump()));
}

// Hash with the reward mode masked out. The dense and sparse arms of the
// ablation must agree on this: it proves every other knob was held fixed.
inline std::string reward_blind_hash(const ExperimentConfig& c) {
  nlohmann::json j = experiment_config_to_json(c);
  j["finetune"]["reward"] = "masked";
  return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Protocol runners.

struct SeedOutcome {
  std::uint64_t seed = 0;
  ChainResult finetuned;
  ChainResult baseline;  // the un-fine-tuned input policy, same sequences
  bool diverged = false;
  std::vector<FinetuneIterMetrics> train_metrics;
};

struct RunReport {
  std::string protocol;
  std::string config_hash;
  std::string paired_hash;  // reward-blind hash shared by ablation arms
  std::string policy_id;    // provenance label for the input policy
  std::string value_id;     // provenance label for the value model
  char eval_variant = 'D';
  std::vector<SeedOutcome> per_seed;
  double mean_avg_len = 0.0;
  double spread_avg_len = 0.0;  // sample standard deviation over seeds
  double baseline_mean_avg_len = 0.0;
};

inline nlohmann::json chain_result_to_json(const ChainResult& r) {
  return {{"levels", r.levels},
          {"avg_len", r.avg_len},
          {"completed", r.completed}};
}

inline nlohmann::json run_report_to_json(const RunReport& r) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const SeedOutcome& s : r.per_seed) {
    nlohmann::json iters = nlohmann::json::array();
    for (const FinetuneIterMetrics& m : s.train_metrics)
      iters.push_back({{"iter", m.iter},
                       {"episodes", m.episodes},
                       {"success_rate", m.success_rate},
                       {"mean_ep_len", m.mean_ep_len},
                       {"mean_kl", m.mean_kl},
                       {"clip_frac", m.clip_frac},
                       {"beta", m.beta},
                       {"mean_advantage", m.mean_advantage}});
    per_seed.push_back({{"seed", s.seed},
                        {"finetuned", chain_result_to_json(s.finetuned)},
                        {"baseline", chain_result_to_json(s.baseline)},
                        {"diverged", s.diverged},
                        {"train_metrics", iters}});
  }
  return {{"protocol", r.protocol},
          {"config_hash", r.config_hash},
          {"paired_hash", r.paired_hash},
          {"policy_id", r.policy_id},
          {"value_id", r.value_id},
          {"eval_variant", std::string(1, r.eval_variant)},
          {"per_seed", per_seed},
          {"mean_avg_len", r.mean_avg_len},
          {"spread_avg_len", r.spread_avg_len},
          {"baseline_mean_avg_len", r.baseline_mean_avg_len}};
}

inline std::vector<EnvVariant> variants_from_ids(
    const std::vector<char>& ids) {
  std::vector<EnvVariant> out;
  out.reserve(ids.size());
  for (char id : ids) out.push_back(builtin_variant(id));
  return out;
}

// Fine-tunes the given policy once per seed on train_ids, then evaluates the
// result and the untouched input policy on the eval variant with identical
// sequence seeds, so every comparison is paired.
inline RunReport run_protocol(const std::string& protocol,
                              const std::vector<char>& train_ids,
                              const PolicyCheckpoint& bc,
                              const ValueModel& value,
                              const ExperimentConfig& config,
                              const std::string& policy_id = "",
                              const std::string& value_id = "") {
  config.validate();
  const std::vector<EnvVariant> train_variants = variants_from_ids(train_ids);
  const EnvVariant eval_variant = builtin_variant(config.eval_variant);
  const DiscretePolicy baseline_policy = policy_from_checkpoint(bc);

  RunReport report;
  report.protocol = protocol;
  report.config_hash = config_hash(config);
  report.paired_hash = reward_blind_hash(config);
  report.policy_id = policy_id;
  report.value_id = value_id;
  report.eval_variant = config.eval_variant;

  double sum = 0.0, sum_sq = 0.0, baseline_sum = 0.0;
  for (const std::uint64_t seed : config.seeds) {
    FinetuneConfig fc = config.finetune;
    fc.seed = seed;
    const FinetuneResult ft =
        finetune(baseline_policy, value, train_variants, fc);

    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.diverged = ft.diverged;
    outcome.train_metrics = ft.metrics;
    const std::uint64_t eval_seed = mix_seed({seed, 0xEE});
    outcome.finetuned =
        eval_chains(ft.policy, eval_variant, config.eval.n_sequences,
                    eval_seed, config.eval.horizon,
                    config.eval.chain_persistence);
    outcome.baseline =
        eval_chains(baseline_policy, eval_variant, config.eval.n_sequences,
                    eval_seed, config.eval.horizon,
                    config.eval.chain_persistence);
    sum += outcome.finetuned.avg_len;
    sum_sq += outcome.finetuned.avg_len * outcome.finetuned.avg_len;
    baseline_sum += outcome.baseline.avg_len;
    report.per_seed.push_back(std::move(outcome));
  }
  const double n = static_cast<double>(config.seeds.size());
  report.mean_avg_len = sum / n;
  report.baseline_mean_avg_len = baseline_sum / n;
  if (config.seeds.size() > 1) {
    const double var =
        std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    report.spread_avg_len = std::sqrt(var);
  }
  return report;
}

// Generalization: fine-tune where the demos came from, evaluate somewhere
// never trained in.
inline RunReport run_generalization(const PolicyCheckpoint& bc,
                                    const ValueModel& value,
                                    const ExperimentConfig& config,
                                    const std::string& policy_id = "",
                                    const std::string& value_id = "") {
  return run_protocol("generalization", config.train_variants, bc, value,
                      config, policy_id, value_id);
}

// Adaptation: fine-tune directly in the evaluation variant.
inline RunReport run_adaptation(const PolicyCheckpoint& bc,
                                const ValueModel& value,
                                const ExperimentConfig& config,
                                const std::string& policy_id = "",
                                const std::string& value_id = "") {
  return run_protocol("adaptation", {config.eval_variant}, bc, value, config,
                      policy_id, value_id);
}

// Paired ablation: identical configs and seeds except for the reward mode.
inline std::pair<RunReport, RunReport> run_ablation(
    const PolicyCheckpoint& bc, const ValueModel& value,
    const ExperimentConfig& config, const std::string& policy_id = "",
    const std::string& value_id = "") {
  ExperimentConfig dense_config = config;
  dense_config.finetune.reward_mode = RewardMode::kDense;
  ExperimentConfig sparse_config = config;
  sparse_config.finetune.reward_mode = RewardMode::kSparse;
  RunReport dense = run_protocol("ablation_dense", config.train_variants, bc,
                                 value, dense_config, policy_id, value_id);
  RunReport sparse = run_protocol("ablation_sparse", config.train_variants,
                                  bc, value, sparse_config, policy_id,
                                  value_id);
  return {std::move(dense), std::move(sparse)};
}

}  // namespace rftf

#endif  // RFTF_HARNESS_HPP_
