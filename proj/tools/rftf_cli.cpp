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

// Command-line driver for the full pipeline: expert demo generation,
// behavior-cloning pretraining, value-model training, reward fine-tuning,
// chained evaluation, the paired dense-vs-sparse ablation, and plots.
//
// Option precedence everywhere: explicit flag > --config file > built-in
// default. Exit codes: 2 usage or config, 3 io, 4 numerical, 1 other.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rftf/bc_pretrain.hpp"
#include "rftf/checkpoint.hpp"
#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/expert_demos.hpp"
#include "rftf/harness.hpp"
#include "rftf/plots.hpp"
#include "rftf/rftf_finetune.hpp"
#include "rftf/rng.hpp"
#include "rftf/tensor_core.hpp"
#include "rftf/value_model.hpp"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;
};

rftf::ExperimentConfig load_base_config(const std::string& path) {
  if (path.empty()) return rftf::ExperimentConfig{};
  std::ifstream in(path);
  if (!in) throw rftf::IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw rftf::ConfigError("bad config JSON in " + path + ": " + e.what());
  }
  return rftf::experiment_config_from_json(j);
}

// Relative output and input paths are taken under --out-dir when set, so a
// whole run can be redirected without editing every flag.
std::string resolve(const GlobalOptions& g, const std::string& path) {
  if (path.empty() || g.out_dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(g.out_dir) / p).string();
}

std::vector<char> parse_variant_ids(const std::string& s) {
  std::vector<char> out;
  for (char c : s) {
    if (c == ',' || c == ' ') continue;
    out.push_back(c);
  }
  if (out.empty()) throw rftf::ConfigError("no variant ids in '" + s + "'");
  return out;
}

template <typename T>
std::vector<T> parse_number_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      if constexpr (std::is_same_v<T, int>)
        out.push_back(std::stoi(tok));
      else
        out.push_back(static_cast<T>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw rftf::ConfigError(std::string("bad ") + what + " entry '" + tok +
                              "' in '" + s + "'");
    }
  }
  if (out.empty())
    throw rftf::ConfigError(std::string("empty ") + what + " list '" + s +
                            "'");
  return out;
}

std::vector<rftf::Task> parse_tasks(const std::string& s) {
  if (s.empty()) return rftf::all_tasks();
  std::vector<rftf::Task> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(rftf::task_from_name(tok));
  if (out.empty()) throw rftf::ConfigError("empty task list '" + s + "'");
  return out;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw rftf::IoError("cannot open for write: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw rftf::IoError("write failed: " + path);
}

std::string ids_to_string(const std::vector<char>& ids) {
  return {ids.begin(), ids.end()};
}

// Stamp shared provenance onto a checkpoint meta or report object. The
// recorded hash covers the effective experiment config after overrides, so
// identical hashes imply reproducible metrics.
void stamp(nlohmann::json& j, const GlobalOptions& g,
           const rftf::ExperimentConfig& effective) {
  j["config_hash"] = rftf::config_hash(effective);
  j["deterministic"] = g.deterministic;
}

void cmd_gen_demos(const GlobalOptions& g, const rftf::ExperimentConfig& base,
                   const std::string& variants_str, CLI::Option* variants_opt,
                   const std::string& tasks_str, int n, CLI::Option* n_opt,
                   const std::string& split, const std::string& paras_str,
                   int horizon, bool state_only, const std::string& out) {
  const std::vector<char> ids = variants_opt->count()
                                    ? parse_variant_ids(variants_str)
                                    : base.train_variants;
  const int per_pair = n_opt->count() ? n : base.demos_per_pair;
  const std::uint64_t seed = g.seed_opt->count() ? g.seed : base.demo_seed;
  rftf::DemoDataset demos = rftf::generate_demos(
      rftf::variants_from_ids(ids), parse_tasks(tasks_str), per_pair, seed,
      split, parse_number_list<int>(paras_str, "paraphrase"), horizon);
  if (state_only) demos = rftf::export_state_only(demos);
  const std::string path = resolve(g, out);
  rftf::save_demos(path, demos);
  std::printf("gen-demos: %zu trajectories (variants %s, %d per pair%s) -> %s\n",
              demos.trajectories.size(), ids_to_string(ids).c_str(), per_pair,
              state_only ? ", state only" : "", path.c_str());
}

void cmd_train_bc(const GlobalOptions& g, rftf::ExperimentConfig base,
                  const std::string& demos_path,
                  const std::string& holdout_path, int bins,
                  CLI::Option* bins_opt, int epochs, CLI::Option* epochs_opt,
                  double lr, CLI::Option* lr_opt, std::size_t minibatch,
                  CLI::Option* minibatch_opt, const std::string& hidden_str,
                  CLI::Option* hidden_opt, const std::string& out,
                  const std::string& metrics_path) {
  rftf::BcTrainConfig& bc = base.bc;
  if (bins_opt->count()) bc.bins = bins;
  if (epochs_opt->count()) bc.epochs = epochs;
  if (lr_opt->count()) bc.lr = lr;
  if (minibatch_opt->count()) bc.minibatch = minibatch;
  if (hidden_opt->count())
    bc.hidden_dims = parse_number_list<std::size_t>(hidden_str, "hidden width");
  if (g.seed_opt->count()) bc.seed = g.seed;

  const rftf::DemoDataset train = rftf::load_demos(resolve(g, demos_path));
  const rftf::DemoDataset holdout =
      holdout_path.empty() ? train : rftf::load_demos(resolve(g, holdout_path));
  const rftf::BcTrainResult result = rftf::train_bc(train, holdout, bc);

  nlohmann::json meta =
      rftf::policy_meta(result.spec, result.codec, "bc", bc.seed);
  meta["demos"] = demos_path;
  stamp(meta, g, base);
  const std::string ckpt_path = resolve(g, out);
  rftf::save_checkpoint(ckpt_path, result.params, meta);
  if (!metrics_path.empty()) {
    std::vector<std::vector<double>> rows;
    for (const rftf::BcEpochMetrics& m : result.metrics)
      rows.push_back({static_cast<double>(m.epoch), m.holdout_loss,
                      m.holdout_accuracy});
    rftf::write_csv(resolve(g, metrics_path),
                    "epoch,holdout_loss,holdout_accuracy", rows);
  }
  const rftf::BcEpochMetrics& last = result.metrics.back();
  std::printf(
      "train-bc: %d epochs, holdout loss %.4f, holdout accuracy %.4f -> %s\n",
      bc.epochs, last.holdout_loss, last.holdout_accuracy, ckpt_path.c_str());
}

void cmd_train_value(const GlobalOptions& g, rftf::ExperimentConfig base,
                     const std::string& demos_path,
                     const std::string& holdout_path,
                     const std::string& init_from, int epochs,
                     CLI::Option* epochs_opt, double lr, CLI::Option* lr_opt,
                     int pairs, CLI::Option* pairs_opt, int holdout_pairs,
                     CLI::Option* holdout_pairs_opt,
                     const std::string& hidden_str, CLI::Option* hidden_opt,
                     const std::string& out, const std::string& metrics_path) {
  rftf::ValueTrainConfig& vc = base.value;
  if (epochs_opt->count()) vc.epochs = epochs;
  if (lr_opt->count()) vc.lr = lr;
  if (pairs_opt->count()) vc.pairs_per_trajectory = pairs;
  if (holdout_pairs_opt->count()) vc.holdout_pairs = holdout_pairs;
  if (hidden_opt->count())
    vc.hidden_dims = parse_number_list<std::size_t>(hidden_str, "hidden width");
  if (g.seed_opt->count()) vc.seed = g.seed;

  const rftf::DemoDataset train = rftf::load_demos(resolve(g, demos_path));
  const rftf::DemoDataset holdout =
      holdout_path.empty() ? train : rftf::load_demos(resolve(g, holdout_path));

  rftf::PolicyCheckpoint init;
  const rftf::MlpSpec* init_spec = nullptr;
  const rftf::ParamVector* init_params = nullptr;
  if (!init_from.empty()) {
    init = rftf::load_policy(resolve(g, init_from));
    // Trunk reuse needs matching hidden widths; inherit them unless the
    // caller pinned --hidden explicitly.
    if (!hidden_opt->count()) vc.hidden_dims = init.spec.hidden_dims;
    init_spec = &init.spec;
    init_params = &init.params;
  }
  const rftf::ValueTrainResult result =
      rftf::train_value_model(train, holdout, vc, init_spec, init_params);

  auto save_epoch = [&](const rftf::ValueModel& model,
                        const std::string& path) {
    nlohmann::json meta = {{"kind", "value"},
                           {"spec", rftf::mlp_spec_to_json(model.spec)},
                           {"epoch", model.epoch},
                           {"seed", vc.seed},
                           {"demos", demos_path},
                           {"init_from", init_from}};
    stamp(meta, g, base);
    rftf::save_checkpoint(path, model.params, meta);
  };

  const std::string out_resolved = resolve(g, out);
  const std::size_t slot = out_resolved.find("{n}");
  std::string kept_path = out_resolved;
  if (slot == std::string::npos) {
    save_epoch(result.model, out_resolved);
  } else {
    // "{n}" expands to each epoch number, one checkpoint per epoch.
    for (const rftf::ValueModel& model : result.epoch_models) {
      std::string path = out_resolved;
      path.replace(slot, 3, std::to_string(model.epoch));
      save_epoch(model, path);
      if (model.epoch == result.model.epoch) kept_path = path;
    }
  }
  if (!metrics_path.empty())
    rftf::write_value_metrics_csv(resolve(g, metrics_path), result.metrics);
  for (const rftf::ValueEpochMetrics& m : result.metrics)
    std::printf(
        "train-value: epoch %d, mean loss %.4f, holdout pairwise accuracy "
        "%.4f\n",
        m.epoch, m.mean_loss, m.holdout_pairwise_accuracy);
  std::printf("train-value: kept epoch %d -> %s\n", result.model.epoch,
              kept_path.c_str());
}

void cmd_finetune(const GlobalOptions& g, rftf::ExperimentConfig base,
                  const std::string& policy_path,
                  const std::string& value_path,
                  const std::string& envs_str, CLI::Option* envs_opt,
                  int episodes, CLI::Option* episodes_opt, int batch_episodes,
                  CLI::Option* batch_opt, int ppo_epochs,
                  CLI::Option* ppo_epochs_opt, std::size_t minibatch,
                  CLI::Option* minibatch_opt, double lr, CLI::Option* lr_opt,
                  const std::string& reward, CLI::Option* reward_opt,
                  int horizon, CLI::Option* horizon_opt,
                  const std::string& out, const std::string& metrics_path) {
  rftf::FinetuneConfig& fc = base.finetune;
  if (episodes_opt->count()) fc.total_episodes = episodes;
  if (batch_opt->count()) fc.episodes_per_batch = batch_episodes;
  if (ppo_epochs_opt->count()) fc.ppo_epochs = ppo_epochs;
  if (minibatch_opt->count()) fc.minibatch = minibatch;
  if (lr_opt->count()) fc.lr = lr;
  if (reward_opt->count()) fc.reward_mode = rftf::reward_mode_from_name(reward);
  if (horizon_opt->count()) fc.horizon = horizon;
  if (g.seed_opt->count()) fc.seed = g.seed;
  const std::vector<char> ids =
      envs_opt->count() ? parse_variant_ids(envs_str) : base.train_variants;

  const rftf::PolicyCheckpoint initial =
      rftf::load_policy(resolve(g, policy_path));
  const rftf::ValueModel value =
      rftf::load_value_model(resolve(g, value_path));
  const rftf::FinetuneResult result =
      rftf::finetune(rftf::policy_from_checkpoint(initial), value,
                     rftf::variants_from_ids(ids), fc);

  nlohmann::json meta = rftf::policy_meta(result.policy.spec,
                                          result.policy.codec, "rftf", fc.seed);
  meta["reward"] = fc.reward_mode == rftf::RewardMode::kDense ? "dense"
                                                              : "sparse";
  meta["diverged"] = result.diverged;
  meta["envs"] = ids_to_string(ids);
  meta["policy_init"] = policy_path;
  meta["value_model"] = value_path;
  stamp(meta, g, base);
  const std::string ckpt_path = resolve(g, out);
  rftf::save_checkpoint(ckpt_path, result.policy.params, meta);
  if (!metrics_path.empty())
    rftf::write_finetune_metrics_csv(resolve(g, metrics_path), result.metrics);

  const rftf::FinetuneIterMetrics& last = result.metrics.back();
  std::printf(
      "finetune: %d episodes in %s (%s reward), final success rate %.3f, "
      "mean kl %.5f%s -> %s\n",
      last.episodes, ids_to_string(ids).c_str(),
      fc.reward_mode == rftf::RewardMode::kDense ? "dense" : "sparse",
      last.success_rate, last.mean_kl,
      result.diverged ? ", DIVERGED (halted early)" : "", ckpt_path.c_str());
}

void cmd_eval(const GlobalOptions& g, rftf::ExperimentConfig base,
              const std::string& policy_path, const std::string& variant_str,
              CLI::Option* variant_opt, int sequences,
              CLI::Option* sequences_opt, int horizon,
              CLI::Option* horizon_opt, bool fresh_resets,
              const std::string& out, const std::string& value_path,
              const std::string& state_values_path,
              const std::string& task_name, int paraphrase) {
  rftf::EvalConfig& ec = base.eval;
  if (sequences_opt->count()) ec.n_sequences = sequences;
  if (horizon_opt->count()) ec.horizon = horizon;
  if (fresh_resets) ec.chain_persistence = false;
  if (variant_opt->count()) {
    const std::vector<char> ids = parse_variant_ids(variant_str);
    if (ids.size() != 1)
      throw rftf::ConfigError("eval takes exactly one variant");
    base.eval_variant = ids[0];
  }
  const std::uint64_t seed = g.seed;
  const rftf::PolicyCheckpoint ckpt =
      rftf::load_policy(resolve(g, policy_path));
  const rftf::DiscretePolicy policy = rftf::policy_from_checkpoint(ckpt);
  const rftf::EnvVariant variant = rftf::builtin_variant(base.eval_variant);
  const rftf::ChainResult chains =
      rftf::eval_chains(policy, variant, ec.n_sequences, seed, ec.horizon,
                        ec.chain_persistence);

  nlohmann::json report = {{"protocol", "eval"},
                           {"variant", std::string(1, variant.id)},
                           {"policy_id", policy_path},
                           {"seed", seed},
                           {"n_sequences", ec.n_sequences},
                           {"chain_persistence", ec.chain_persistence},
                           {"result", rftf::chain_result_to_json(chains)}};
  stamp(report, g, base);
  const std::string report_path = resolve(g, out);
  write_json_file(report_path, report);

  // Optional state-value trace: one greedy rollout scored by the value
  // model, for the per-episode value-curve plot.
  if (!value_path.empty()) {
    const rftf::ValueModel value =
        rftf::load_value_model(resolve(g, value_path));
    const rftf::Instruction ins =
        rftf::make_instruction(rftf::task_from_name(task_name), paraphrase);
    rftf::Env env(variant, ec.horizon);
    rftf::Observation obs = env.reset(ins, rftf::mix_seed({seed, 0xDD}));
    std::vector<double> values = {rftf::predict_value(value, obs, ins)};
    while (!env.state().done) {
      obs = env.step(rftf::greedy_action(policy, rftf::concat_features(obs, ins)))
                .obs;
      values.push_back(rftf::predict_value(value, obs, ins));
    }
    rftf::write_state_values_csv(resolve(g, state_values_path), values);
  }

  std::printf(
      "eval: variant %c, %d sequences, avg_len %.4f, levels %.3f %.3f %.3f "
      "%.3f %.3f -> %s\n",
      variant.id, ec.n_sequences, chains.avg_len, chains.levels[0],
      chains.levels[1], chains.levels[2], chains.levels[3], chains.levels[4],
      report_path.c_str());
}

void cmd_ablate(const GlobalOptions& g, rftf::ExperimentConfig base,
                const std::string& policy_path, const std::string& value_path,
                const std::string& seeds_str, CLI::Option* seeds_opt,
                const std::string& envs_str, CLI::Option* envs_opt,
                const std::string& eval_variant_str,
                CLI::Option* eval_variant_opt, int episodes,
                CLI::Option* episodes_opt, int sequences,
                CLI::Option* sequences_opt, const std::string& out_dense,
                const std::string& out_sparse) {
  if (seeds_opt->count())
    base.seeds = parse_number_list<std::uint64_t>(seeds_str, "seed");
  if (envs_opt->count()) base.train_variants = parse_variant_ids(envs_str);
  if (eval_variant_opt->count()) {
    const std::vector<char> ids = parse_variant_ids(eval_variant_str);
    if (ids.size() != 1)
      throw rftf::ConfigError("ablate takes exactly one eval variant");
    base.eval_variant = ids[0];
  }
  if (episodes_opt->count()) base.finetune.total_episodes = episodes;
  if (sequences_opt->count()) base.eval.n_sequences = sequences;
  base.validate();

  const rftf::PolicyCheckpoint bc = rftf::load_policy(resolve(g, policy_path));
  const rftf::ValueModel value =
      rftf::load_value_model(resolve(g, value_path));
  const auto [dense, sparse] =
      rftf::run_ablation(bc, value, base, policy_path, value_path);

  nlohmann::json dense_json = rftf::run_report_to_json(dense);
  nlohmann::json sparse_json = rftf::run_report_to_json(sparse);
  dense_json["deterministic"] = g.deterministic;
  sparse_json["deterministic"] = g.deterministic;
  const std::string dense_path = resolve(g, out_dense);
  const std::string sparse_path = resolve(g, out_sparse);
  write_json_file(dense_path, dense_json);
  write_json_file(sparse_path, sparse_json);
  std::printf(
      "ablate: dense mean avg_len %.4f vs sparse %.4f (baseline %.4f) -> %s, "
      "%s\n",
      dense.mean_avg_len, sparse.mean_avg_len, dense.baseline_mean_avg_len,
      dense_path.c_str(), sparse_path.c_str());
}

void cmd_plot(const GlobalOptions& g, const std::string& value_csv,
              const std::string& finetune_csv, const std::string& state_csv,
              const std::string& plots_dir) {
  const std::vector<std::string> written = rftf::emit_plots(
      resolve(g, value_csv), resolve(g, finetune_csv), resolve(g, state_csv),
      resolve(g, plots_dir));
  for (const std::string& path : written)
    std::printf("plot: wrote %s\n", path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Instruction-following pipeline: demos, behavior cloning, value model, "
      "reward fine-tuning, chained evaluation, ablation, plots"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path,
                 "JSON experiment config; flags override its fields");
  g.seed_opt = app.add_option("--seed", g.seed, "Run seed");
  app.add_flag("--deterministic", g.deterministic,
               "Record determinism intent in artifacts (runs are "
               "single-threaded and bit-deterministic regardless)");
  app.add_option("--out-dir", g.out_dir,
                 "Directory prefix for relative input and output paths");

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "Generate expert demo sets");
  std::string gd_variants = "A,B,C", gd_tasks, gd_split = "train";
  std::string gd_paraphrases = "0,1", gd_out;
  int gd_n = 50, gd_horizon = rftf::kHorizon;
  bool gd_state_only = false;
  auto* gd_variants_opt =
      gen->add_option("--variants", gd_variants, "Variant ids, e.g. A,B,C");
  gen->add_option("--tasks", gd_tasks, "Task names (default: all four)");
  auto* gd_n_opt =
      gen->add_option("--n", gd_n, "Demos per (variant, task, paraphrase)");
  gen->add_option("--split", gd_split, "train or val (disjoint seed ranges)");
  gen->add_option("--paraphrases", gd_paraphrases, "Paraphrase ids");
  gen->add_option("--horizon", gd_horizon, "Episode step limit");
  gen->add_flag("--state-only", gd_state_only,
                "Strip actions before writing (value-model training input)");
  gen->add_option("--out", gd_out, "Output JSONL path")->required();

  // train-bc
  auto* bc = app.add_subcommand("train-bc", "Behavior-clone a policy");
  std::string bc_demos, bc_holdout, bc_hidden, bc_out, bc_metrics;
  int bc_bins = 101, bc_epochs = 20;
  double bc_lr = 1e-3;
  std::size_t bc_minibatch = 256;
  bc->add_option("--demos", bc_demos, "Training demos JSONL")->required();
  bc->add_option("--holdout", bc_holdout,
                 "Holdout demos JSONL (default: score the training set)");
  auto* bc_bins_opt = bc->add_option("--bins", bc_bins, "Bins per action dim");
  auto* bc_epochs_opt = bc->add_option("--epochs", bc_epochs, "Epochs");
  auto* bc_lr_opt = bc->add_option("--lr", bc_lr, "Adam learning rate");
  auto* bc_minibatch_opt =
      bc->add_option("--minibatch", bc_minibatch, "Minibatch size");
  auto* bc_hidden_opt =
      bc->add_option("--hidden", bc_hidden, "Hidden widths, e.g. 64,64");
  bc->add_option("--out", bc_out, "Checkpoint output path")->required();
  bc->add_option("--metrics", bc_metrics, "Per-epoch metrics CSV path");

  // train-value
  auto* tv = app.add_subcommand("train-value",
                                "Train the value model on state-only demos");
  std::string tv_demos, tv_holdout, tv_init, tv_hidden, tv_out, tv_metrics;
  int tv_epochs = 5, tv_pairs = 64, tv_holdout_pairs = 2000;
  double tv_lr = 1e-3;
  tv->add_option("--demos", tv_demos, "Training demos JSONL")->required();
  tv->add_option("--holdout", tv_holdout,
                 "Holdout demos JSONL (default: score the training set)");
  tv->add_option("--init-from", tv_init,
                 "Policy checkpoint whose trunk seeds the value model");
  auto* tv_epochs_opt = tv->add_option("--epochs", tv_epochs, "Epochs");
  auto* tv_lr_opt = tv->add_option("--lr", tv_lr, "Adam learning rate");
  auto* tv_pairs_opt =
      tv->add_option("--pairs", tv_pairs, "Sampled pairs per trajectory");
  auto* tv_holdout_pairs_opt = tv->add_option(
      "--holdout-pairs", tv_holdout_pairs, "Pairs for holdout accuracy");
  auto* tv_hidden_opt =
      tv->add_option("--hidden", tv_hidden, "Hidden widths, e.g. 64,64");
  tv->add_option("--out", tv_out,
                 "Checkpoint path; '{n}' expands to each epoch number")
      ->required();
  tv->add_option("--metrics", tv_metrics, "Per-epoch metrics CSV path");

  // finetune
  auto* ft = app.add_subcommand("finetune",
                                "Fine-tune a policy with shaped rewards");
  std::string ft_policy, ft_value, ft_envs, ft_reward = "dense", ft_out;
  std::string ft_metrics;
  int ft_episodes = 8192, ft_batch = 64, ft_ppo_epochs = 4;
  int ft_horizon = rftf::kHorizon;
  std::size_t ft_minibatch = 1024;
  double ft_lr = 3e-4;
  ft->add_option("--policy", ft_policy, "Initial policy checkpoint")
      ->required();
  ft->add_option("--value", ft_value, "Value model checkpoint")->required();
  auto* ft_envs_opt =
      ft->add_option("--envs", ft_envs, "Training variant ids, e.g. A,B,C");
  auto* ft_episodes_opt =
      ft->add_option("--episodes", ft_episodes, "Total rollout episodes");
  auto* ft_batch_opt =
      ft->add_option("--batch-episodes", ft_batch, "Episodes per update");
  auto* ft_ppo_epochs_opt =
      ft->add_option("--ppo-epochs", ft_ppo_epochs, "Passes per batch");
  auto* ft_minibatch_opt =
      ft->add_option("--minibatch", ft_minibatch, "Minibatch size");
  auto* ft_lr_opt = ft->add_option("--lr", ft_lr, "Adam learning rate");
  auto* ft_reward_opt =
      ft->add_option("--reward", ft_reward, "dense or sparse");
  auto* ft_horizon_opt =
      ft->add_option("--horizon", ft_horizon, "Episode step limit");
  ft->add_option("--out", ft_out, "Checkpoint output path")->required();
  ft->add_option("--metrics", ft_metrics, "Per-iteration metrics CSV path");

  // eval
  auto* ev = app.add_subcommand("eval", "Chained evaluation of a policy");
  std::string ev_policy, ev_variant = "D", ev_out = "report.json";
  std::string ev_value, ev_state_values = "state_values.csv";
  std::string ev_task = "reach_target";
  int ev_sequences = 500, ev_horizon = rftf::kHorizon, ev_paraphrase = 2;
  bool ev_fresh = false;
  ev->add_option("--policy", ev_policy, "Policy checkpoint")->required();
  auto* ev_variant_opt =
      ev->add_option("--variant", ev_variant, "Evaluation variant id");
  auto* ev_sequences_opt =
      ev->add_option("--sequences", ev_sequences, "Five-task sequences");
  auto* ev_horizon_opt =
      ev->add_option("--horizon", ev_horizon, "Episode step limit");
  ev->add_flag("--fresh-resets", ev_fresh,
               "Reset objects between chained tasks instead of persisting");
  ev->add_option("--out", ev_out, "Report JSON path");
  ev->add_option("--value", ev_value,
                 "Value checkpoint; also writes a state-value trace");
  ev->add_option("--state-values", ev_state_values,
                 "State-value trace CSV path (with --value)");
  ev->add_option("--task", ev_task, "Task for the state-value trace");
  ev->add_option("--paraphrase", ev_paraphrase,
                 "Paraphrase id for the state-value trace");

  // ablate
  auto* ab = app.add_subcommand(
      "ablate", "Paired dense-vs-sparse fine-tuning and evaluation");
  std::string ab_policy, ab_value, ab_seeds, ab_envs, ab_eval_variant;
  std::string ab_out_dense = "report_dense.json";
  std::string ab_out_sparse = "report_sparse.json";
  int ab_episodes = 8192, ab_sequences = 500;
  ab->add_option("--policy", ab_policy, "Behavior-cloned policy checkpoint")
      ->required();
  ab->add_option("--value", ab_value, "Value model checkpoint")->required();
  auto* ab_seeds_opt =
      ab->add_option("--seeds", ab_seeds, "Run seeds, e.g. 1,2,3");
  auto* ab_envs_opt =
      ab->add_option("--envs", ab_envs, "Training variant ids");
  auto* ab_eval_variant_opt =
      ab->add_option("--eval-variant", ab_eval_variant, "Evaluation variant");
  auto* ab_episodes_opt = ab->add_option("--episodes", ab_episodes,
                                         "Total episodes per fine-tune");
  auto* ab_sequences_opt =
      ab->add_option("--sequences", ab_sequences, "Sequences per seed");
  ab->add_option("--out-dense", ab_out_dense, "Dense report JSON path");
  ab->add_option("--out-sparse", ab_out_sparse, "Sparse report JSON path");

  // plot
  auto* pl = app.add_subcommand("plot", "Render SVG plots from metrics CSVs");
  std::string pl_value_csv, pl_finetune_csv, pl_state_csv, pl_dir = "plots";
  pl->add_option("--value-metrics", pl_value_csv, "Value metrics CSV");
  pl->add_option("--finetune-metrics", pl_finetune_csv,
                 "Fine-tune metrics CSV");
  pl->add_option("--state-values", pl_state_csv, "State-value trace CSV");
  pl->add_option("--plots-dir", pl_dir, "Output directory for SVGs");

  gen->callback([&] {
    cmd_gen_demos(g, load_base_config(g.config_path), gd_variants,
                  gd_variants_opt, gd_tasks, gd_n, gd_n_opt, gd_split,
                  gd_paraphrases, gd_horizon, gd_state_only, gd_out);
  });
  bc->callback([&] {
    cmd_train_bc(g, load_base_config(g.config_path), bc_demos, bc_holdout,
                 bc_bins, bc_bins_opt, bc_epochs, bc_epochs_opt, bc_lr,
                 bc_lr_opt, bc_minibatch, bc_minibatch_opt, bc_hidden,
                 bc_hidden_opt, bc_out, bc_metrics);
  });
  tv->callback([&] {
    cmd_train_value(g, load_base_config(g.config_path), tv_demos, tv_holdout,
                    tv_init, tv_epochs, tv_epochs_opt, tv_lr, tv_lr_opt,
                    tv_pairs, tv_pairs_opt, tv_holdout_pairs,
                    tv_holdout_pairs_opt, tv_hidden, tv_hidden_opt, tv_out,
                    tv_metrics);
  });
  ft->callback([&] {
    cmd_finetune(g, load_base_config(g.config_path), ft_policy, ft_value,
                 ft_envs, ft_envs_opt, ft_episodes, ft_episodes_opt, ft_batch,
                 ft_batch_opt, ft_ppo_epochs, ft_ppo_epochs_opt, ft_minibatch,
                 ft_minibatch_opt, ft_lr, ft_lr_opt, ft_reward, ft_reward_opt,
                 ft_horizon, ft_horizon_opt, ft_out, ft_metrics);
  });
  ev->callback([&] {
    cmd_eval(g, load_base_config(g.config_path), ev_policy, ev_variant,
             ev_variant_opt, ev_sequences, ev_sequences_opt, ev_horizon,
             ev_horizon_opt, ev_fresh, ev_out, ev_value, ev_state_values,
             ev_task, ev_paraphrase);
  });
  ab->callback([&] {
    cmd_ablate(g, load_base_config(g.config_path), ab_policy, ab_value,
               ab_seeds, ab_seeds_opt, ab_envs, ab_envs_opt, ab_eval_variant,
               ab_eval_variant_opt, ab_episodes, ab_episodes_opt,
               ab_sequences, ab_sequences_opt, ab_out_dense, ab_out_sparse);
  });
  pl->callback(
      [&] { cmd_plot(g, pl_value_csv, pl_finetune_csv, pl_state_csv, pl_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const rftf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rftf::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const rftf::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const rftf::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
