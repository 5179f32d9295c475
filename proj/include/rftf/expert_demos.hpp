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
// Scripted per-task expert controllers and demonstration datasets. Demos are
// persisted as JSON-Lines, one trajectory per line, with float payloads
// base64-encoded as little-endian f64 so metadata stays greppable while the
// numbers stay exact.

#ifndef RFTF_EXPERT_DEMOS_HPP_
#define RFTF_EXPERT_DEMOS_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rftf/envsuite.hpp"
#include "rftf/errors.hpp"
#include "rftf/rng.hpp"

namespace rftf {

// Proportional gain toward the current subgoal. Eight percent of the
// remaining gap per step, saturated at the action bound, lands median episode
// length in the mid-30s: long enough to give pair sampling many intermediate
// states.
inline constexpr double kExpertGain = 0.08;
// The expert commands the gripper closed inside this radius, before contact,
// so the grasp fires on first contact instead of nudging the block away.
inline constexpr double kExpertEngageRadius = 0.10;

inline Action expert_policy(const WorldState& s, const Instruction& ins) {
  Vec2 goal;
  double gcmd = -1.0;
  switch (ins.task) {
    case Task::kReachTarget:
      goal = s.layout.target;
      break;
    case Task::kPushBlockToZone:
      if (s.held) {
        goal = s.layout.zone;
        gcmd = 1.0;
      } else {
        goal = s.block;
        gcmd = dist(s.effector, s.block) < kExpertEngageRadius ? 1.0 : -1.0;
      }
      break;
    case Task::kPressButton:
      goal = s.layout.button;
      gcmd = dist(s.effector, goal) < kExpertEngageRadius ? 1.0 : -1.0;
      break;
    case Task::kToggleSwitch:
      goal = s.layout.switch_pos;
      gcmd = dist(s.effector, goal) < kExpertEngageRadius ? 1.0 : -1.0;
      break;
  }
  Action a;
  a.delta = kExpertGain * (goal - s.effector);
  a.gripper_cmd = gcmd;
  return clamp_action(a);
}

struct Trajectory {
  Instruction instruction;
  std::vector<Observation> observations;  // length T+1, reset obs included
  std::vector<Action> actions;            // length T; empty when state-only
  bool has_actions = false;
  bool success = false;
  char variant_id = 'A';
  std::uint64_t seed = 0;
};

struct DemoDataset {
  std::vector<Trajectory> trajectories;
  std::string split = "train";  // "train" or "val"
};

// Runs one expert episode; the returned trajectory replays bit-for-bit from
// (variant, instruction, seed).
inline Trajectory run_expert_episode(const EnvVariant& variant,
                                     const Instruction& ins,
                                     std::uint64_t seed,
                                     int horizon = kHorizon) {
  Env env(variant, horizon);
  Trajectory traj;
  traj.instruction = ins;
  traj.has_actions = true;
  traj.variant_id = variant.id;
  traj.seed = seed;
  traj.observations.push_back(env.reset(ins, seed));
  while (!env.state().done) {
    const Action a = expert_policy(env.state(), ins);
    const StepOutcome out = env.step(a);
    traj.actions.push_back(a);
    traj.observations.push_back(out.obs);
    traj.success = out.success;
  }
  return traj;
}

// Exactly n_per_pair successful trajectories per (variant, task, paraphrase)
// cell; failed expert rollouts are discarded and reseeded. Train and val
// splits draw from disjoint attempt-index ranges, so their episode seeds
// never collide.
inline DemoDataset generate_demos(const std::vector<EnvVariant>& variants,
                                  const std::vector<Task>& tasks,
                                  int n_per_pair, std::uint64_t seed_base,
                                  const std::string& split = "train",
                                  const std::vector<int>& paraphrases = {0, 1},
                                  int horizon = kHorizon) {
  if (n_per_pair < 1) throw ConfigError("n_per_pair must be >= 1");
  if (split != "train" && split != "val")
    throw ConfigError("split must be 'train' or 'val'");
  const std::uint64_t attempt_offset = split == "train" ? 0 : 1000000;
  DemoDataset out;
  out.split = split;
  for (const EnvVariant& variant : variants) {
    for (Task task : tasks) {
      int kept_for_pair = 0, attempts_for_pair = 0;
      for (int paraphrase : paraphrases) {
        const Instruction ins = make_instruction(task, paraphrase);
        int kept = 0;
        std::uint64_t attempt = 0;
        while (kept < n_per_pair) {
          const std::uint64_t seed =
              mix_seed({seed_base, static_cast<std::uint64_t>(variant.id),
                        static_cast<std::uint64_t>(task),
                        static_cast<std::uint64_t>(paraphrase),
                        attempt_offset + attempt});
          ++attempt;
          ++attempts_for_pair;
          Trajectory traj = run_expert_episode(variant, ins, seed, horizon);
          if (!traj.success) continue;
          out.trajectories.push_back(std::move(traj));
          ++kept;
          ++kept_for_pair;
        }
      }
      if (attempts_for_pair > 0 &&
          static_cast<double>(attempts_for_pair - kept_for_pair) /
                  static_cast<double>(attempts_for_pair) >
              0.20)
        throw ConfigError(
            std::string("expert failure rate above 20% on variant ") +
            variant.id + ", task " + task_name(task) +
            "; environment misconfigured");
    }
  }
  return out;
}

inline DemoDataset export_state_only(const DemoDataset& dataset) {
  DemoDataset out;
  out.split = dataset.split;
  out.trajectories.reserve(dataset.trajectories.size());
  for (const Trajectory& t : dataset.trajectories) {
    Trajectory s = t;
    s.actions.clear();
    s.has_actions = false;
    out.trajectories.push_back(std::move(s));
  }
  return out;
}

// Re-runs the stored seed and actions through the environment and checks the
// stored observations and success flag bit-for-bit.
inline bool replay_matches(const Trajectory& traj, const EnvVariant& variant,
                           int horizon = kHorizon) {
  if (!traj.has_actions) return false;
  Env env(variant, horizon);
  Observation obs = env.reset(traj.instruction, traj.seed);
  if (traj.observations.empty() ||
      obs.features != traj.observations[0].features)
    return false;
  bool success = false;
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const StepOutcome out = env.step(traj.actions[t]);
    if (t + 1 >= traj.observations.size() ||
        out.obs.features != traj.observations[t + 1].features)
      return false;
    success = out.success;
  }
  return success == traj.success &&
         traj.observations.size() == traj.actions.size() + 1;
}

// ---------------------------------------------------------------------------
// JSONL persistence.

namespace detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    const unsigned b0 = data[i];
    const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
    const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
    out.push_back(kB64Alphabet[b0 >> 2]);
    out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
    out.push_back(i + 1 < len ? kB64Alphabet[((b1 & 0xf) << 2) | (b2 >> 6)]
                              : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[b2 & 0x3f] : '=');
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s) {
  if (s.size() % 4 != 0) throw IoError("bad base64 payload length");
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int v[4];
    int pads = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=') {
        v[k] = 0;
        ++pads;
      } else {
        v[k] = value_of(c);
        if (v[k] < 0 || pads > 0) throw IoError("bad base64 character");
      }
    }
    out.push_back(static_cast<unsigned char>((v[0] << 2) | (v[1] >> 4)));
    if (pads < 2)
      out.push_back(static_cast<unsigned char>(((v[1] & 0xf) << 4) |
                                               (v[2] >> 2)));
    if (pads < 1)
      out.push_back(static_cast<unsigned char>(((v[2] & 0x3) << 6) | v[3]));
  }
  return out;
}

inline std::string pack_f64(const std::vector<double>& values) {
  return base64_encode(reinterpret_cast<const unsigned char*>(values.data()),
                       values.size() * sizeof(double));
}

inline std::vector<double> unpack_f64(const std::string& b64) {
  const std::vector<unsigned char> bytes = base64_decode(b64);
  if (bytes.size() % sizeof(double) != 0)
    throw IoError("f64 payload size is not a multiple of 8");
  std::vector<double> values(bytes.size() / sizeof(double));
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

}  // namespace detail

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  std::vector<double> obs_flat;
  obs_flat.reserve(t.observations.size() * kObsDim);
  for (const Observation& o : t.observations)
    obs_flat.insert(obs_flat.end(), o.features.begin(), o.features.end());
  nlohmann::json j = {{"variant", std::string(1, t.variant_id)},
                      {"task", task_name(t.instruction.task)},
                      {"paraphrase", t.instruction.paraphrase_id},
                      {"seed", t.seed},
                      {"success", t.success},
                      {"n_obs", t.observations.size()},
                      {"obs_dim", kObsDim},
                      {"obs_b64", detail::pack_f64(obs_flat)}};
  if (t.has_actions) {
    std::vector<double> act_flat;
    act_flat.reserve(t.actions.size() * 3);
    for (const Action& a : t.actions) {
      act_flat.push_back(a.delta.x);
      act_flat.push_back(a.delta.y);
      act_flat.push_back(a.gripper_cmd);
    }
    j["act_dim"] = 3;
    j["act_b64"] = detail::pack_f64(act_flat);
  }
  return j;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  const std::string vid = j.at("variant").get<std::string>();
  if (vid.size() != 1) throw IoError("bad variant id in trajectory record");
  t.variant_id = vid[0];
  t.instruction = make_instruction(task_from_name(j.at("task")),
                                   j.at("paraphrase").get<int>());
  t.seed = j.at("seed").get<std::uint64_t>();
  t.success = j.at("success").get<bool>();
  const std::size_t n_obs = j.at("n_obs").get<std::size_t>();
  const std::size_t obs_dim = j.at("obs_dim").get<std::size_t>();
  if (obs_dim != kObsDim) throw IoError("unexpected obs_dim in demo file");
  const std::vector<double> obs_flat =
      detail::unpack_f64(j.at("obs_b64").get<std::string>());
  if (obs_flat.size() != n_obs * obs_dim)
    throw IoError("obs payload size mismatch");
  t.observations.resize(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i)
    t.observations[i].features.assign(obs_flat.begin() + i * obs_dim,
                                      obs_flat.begin() + (i + 1) * obs_dim);
  if (j.contains("act_b64")) {
    const std::vector<double> act_flat =
        detail::unpack_f64(j.at("act_b64").get<std::string>());
    if (act_flat.size() % 3 != 0) throw IoError("action payload size");
    t.has_actions = true;
    t.actions.resize(act_flat.size() / 3);
    for (std::size_t i = 0; i < t.actions.size(); ++i) {
      t.actions[i].delta = {act_flat[3 * i], act_flat[3 * i + 1]};
      t.actions[i].gripper_cmd = act_flat[3 * i + 2];
    }
  }
  return t;
}

inline void save_demos(const std::string& path, const DemoDataset& dataset) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  for (const Trajectory& t : dataset.trajectories) {
    nlohmann::json j = trajectory_to_json(t);
    j["split"] = dataset.split;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline DemoDataset load_demos(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open demos: " + path);
  DemoDataset dataset;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad demo line in " + path + ": " + e.what());
    }
    if (first) {
      dataset.split = j.value("split", std::string("train"));
      first = false;
    }
    dataset.trajectories.push_back(trajectory_from_json(j));
  }
  return dataset;
}

}  // namespace rftf

#endif  // RFTF_EXPERT_DEMOS_HPP_
