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
// 2-D tabletop manipulation environment with four layout variants (A-D),
// four instruction-conditioned tasks, and paraphrased instructions.
// Dynamics are deterministic; stochasticity enters only through seeded reset
// jitter and seeded observation noise, so identical (variant, instruction,
// seed, actions) always replays the same trajectory bit-for-bit.

#ifndef RFTF_ENVSUITE_HPP_
#define RFTF_ENVSUITE_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rftf/errors.hpp"
#include "rftf/rng.hpp"

namespace rftf {

inline constexpr int kHorizon = 100;
inline constexpr double kActionMax = 0.05;    // per-axis effector step bound
inline constexpr double kContactRadius = 0.05;
inline constexpr double kReachTolerance = 0.05;
inline constexpr double kZoneTolerance = 0.07;
inline constexpr double kResetJitter = 0.05;  // uniform per-coordinate
inline constexpr std::size_t kObsDim = 17;
inline constexpr std::size_t kEmbedDim = 12;  // 4 one-hot + 8 paraphrase code
inline constexpr int kNumParaphrases = 4;     // {0,1} train, {2,3} eval
inline constexpr std::uint64_t kEmbeddingSeed = 0x9d2c5680f1234567ULL;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }
inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }
inline Vec2 clamp01(Vec2 v) { return {clamp01(v.x), clamp01(v.y)}; }

enum class Task : int {
  kReachTarget = 0,
  kPushBlockToZone = 1,
  kPressButton = 2,
  kToggleSwitch = 3,
};

inline constexpr int kNumTasks = 4;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {
    Task::kReachTarget, Task::kPushBlockToZone, Task::kPressButton,
    Task::kToggleSwitch};

inline std::vector<Task> all_tasks() {
  return {kAllTasks.begin(), kAllTasks.end()};
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::kReachTarget: return "reach_target";
    case Task::kPushBlockToZone: return "push_block_to_zone";
    case Task::kPressButton: return "press_button";
    case Task::kToggleSwitch: return "toggle_switch";
  }
  throw ConfigError("bad task enum");
}

inline Task task_from_name(const std::string& s) {
  for (Task t : kAllTasks)
    if (task_name(t) == s) return t;
  throw ConfigError("unknown task '" + s + "'");
}

inline bool is_train_paraphrase(int p) { return p == 0 || p == 1; }
inline bool is_eval_paraphrase(int p) { return p == 2 || p == 3; }

// Instruction = task + paraphrase, embedded as one-hot task code followed by
// a fixed seeded per-(task, paraphrase) code in [-1, 1]^8. The task is fully
// identified by the one-hot part; paraphrase codes are the held-out-language
// stand-in, so eval paraphrases {2,3} are vectors the policy never trained on.
struct Instruction {
  Task task = Task::kReachTarget;
  int paraphrase_id = 0;
  std::vector<double> embedding;
};

inline Instruction make_instruction(Task task, int paraphrase_id) {
  if (paraphrase_id < 0 || paraphrase_id >= kNumParaphrases)
    throw ConfigError("paraphrase_id out of range: " +
                      std::to_string(paraphrase_id));
  Instruction ins;
  ins.task = task;
  ins.paraphrase_id = paraphrase_id;
  ins.embedding.assign(kEmbedDim, 0.0);
  ins.embedding[static_cast<std::size_t>(task)] = 1.0;
  Rng rng(mix_seed({kEmbeddingSeed, static_cast<std::uint64_t>(task),
                    static_cast<std::uint64_t>(paraphrase_id)}));
  for (std::size_t i = 4; i < kEmbedDim; ++i)
    ins.embedding[i] = rng.uniform(-1.0, 1.0);
  return ins;
}

// Anchor positions for one layout variant. Variant D is the unseen
// environment of the generalization/adaptation protocols: every anchor
// differs from its A, B, and C counterpart and observation noise is doubled,
// but the layout stays near the training manifold so that competence learned
// in A through C remains transferable, mirroring the seen/unseen split of
// chained-manipulation benchmarks.
struct EnvVariant {
  char id = 'A';
  Vec2 start, target, block, zone, button, switch_pos;
  double obs_noise_sigma = 0.005;
};

inline EnvVariant builtin_variant(char id) {
  switch (id) {
    case 'A':
      return {'A', {0.10, 0.10}, {0.80, 0.75}, {0.30, 0.55},
              {0.75, 0.30}, {0.55, 0.85}, {0.20, 0.80}, 0.005};
    case 'B':
      return {'B', {0.90, 0.10}, {0.25, 0.70}, {0.65, 0.45},
              {0.20, 0.25}, {0.45, 0.90}, {0.85, 0.65}, 0.005};
    case 'C':
      return {'C', {0.50, 0.05}, {0.15, 0.35}, {0.50, 0.70},
              {0.85, 0.55}, {0.15, 0.75}, {0.65, 0.15}, 0.005};
    case 'D':
      return {'D', {0.14, 0.16}, {0.74, 0.70}, {0.36, 0.50},
              {0.70, 0.36}, {0.50, 0.80}, {0.26, 0.74}, 0.010};
    default:
      throw ConfigError(std::string("unknown variant '") + id + "'");
  }
}

inline nlohmann::json variant_to_json(const EnvVariant& v) {
  auto pos = [](Vec2 p) { return nlohmann::json::array({p.x, p.y}); };
  return {{"id", std::string(1, v.id)},
          {"start", pos(v.start)},
          {"target", pos(v.target)},
          {"block", pos(v.block)},
          {"zone", pos(v.zone)},
          {"button", pos(v.button)},
          {"switch", pos(v.switch_pos)},
          {"obs_noise_sigma", v.obs_noise_sigma}};
}

inline EnvVariant variant_from_json(const nlohmann::json& j) {
  auto pos = [&](const char* key) -> Vec2 {
    const auto& a = j.at(key);
    Vec2 p{a.at(0).get<double>(), a.at(1).get<double>()};
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0)
      throw ConfigError(std::string("variant position '") + key +
                        "' outside the unit workspace");
    return p;
  };
  EnvVariant v;
  const std::string id = j.at("id").get<std::string>();
  if (id.size() != 1) throw ConfigError("variant id must be one character");
  v.id = id[0];
  v.start = pos("start");
  v.target = pos("target");
  v.block = pos("block");
  v.zone = pos("zone");
  v.button = pos("button");
  v.switch_pos = pos("switch");
  v.obs_noise_sigma = j.at("obs_noise_sigma").get<double>();
  if (v.obs_noise_sigma < 0.0) throw ConfigError("obs_noise_sigma < 0");
  return v;
}

// Per-episode anchor positions after reset jitter.
struct EpisodeLayout {
  Vec2 start, target, block, zone, button, switch_pos;
};

struct WorldState {
  Vec2 effector;
  double gripper = 0.0;  // 0 open .. 1 closed
  Vec2 block;
  bool button_pressed = false;
  bool switch_on = false;
  bool held = false;
  int step_count = 0;
  // Episode context. switch_initial anchors the toggle predicate;
  // switch_engaged is the edge-trigger latch so holding contact toggles once.
  bool switch_initial = false;
  bool switch_engaged = false;
  EpisodeLayout layout;
  bool done = false;
  bool success = false;
};

struct Action {
  Vec2 delta;                // clamped to [-kActionMax, kActionMax]^2
  double gripper_cmd = 0.0;  // in [-1, 1]; > 0.5 engages grasp/press
};

inline Action clamp_action(Action a, double a_max = kActionMax) {
  auto clamp = [](double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
  };
  a.delta.x = clamp(a.delta.x, -a_max, a_max);
  a.delta.y = clamp(a.delta.y, -a_max, a_max);
  a.gripper_cmd = clamp(a.gripper_cmd, -1.0, 1.0);
  return a;
}

struct Observation {
  std::vector<double> features;
};

// Noiseless feature map. Deliberately excludes `held` and any velocity;
// partial observability is structural, not only noise.
inline std::vector<double> features_of(const WorldState& s) {
  const EpisodeLayout& L = s.layout;
  return {s.effector.x,
          s.effector.y,
          s.gripper,
          s.block.x,
          s.block.y,
          s.button_pressed ? 1.0 : 0.0,
          s.switch_on ? 1.0 : 0.0,
          L.target.x - s.effector.x,
          L.target.y - s.effector.y,
          s.block.x - s.effector.x,
          s.block.y - s.effector.y,
          L.zone.x - s.block.x,
          L.zone.y - s.block.y,
          L.button.x - s.effector.x,
          L.button.y - s.effector.y,
          L.switch_pos.x - s.effector.x,
          L.switch_pos.y - s.effector.y};
}

// Model input: observation features followed by the instruction embedding.
inline std::vector<double> concat_features(const Observation& obs,
                                           const Instruction& ins) {
  std::vector<double> f;
  f.reserve(obs.features.size() + ins.embedding.size());
  f.insert(f.end(), obs.features.begin(), obs.features.end());
  f.insert(f.end(), ins.embedding.begin(), ins.embedding.end());
  return f;
}

inline bool success_predicate(const WorldState& s, const Instruction& ins) {
  switch (ins.task) {
    case Task::kReachTarget:
      return dist(s.effector, s.layout.target) < kReachTolerance;
    case Task::kPushBlockToZone:
      return dist(s.block, s.layout.zone) < kZoneTolerance;
    case Task::kPressButton:
      return s.button_pressed;
    case Task::kToggleSwitch:
      return s.switch_on != s.switch_initial;
  }
  throw ConfigError("bad task enum");
}

// Deterministic dynamics. Grasp resolution precedes block push so closing
// the gripper on first contact grabs the block instead of nudging it away.
inline WorldState transition(const WorldState& s, const Action& raw_action,
                             const Instruction& ins, int horizon = kHorizon) {
  if (s.done) throw UsageError("step on a finished episode");
  const Action a = clamp_action(raw_action);
  WorldState n = s;
  n.effector = clamp01(s.effector + a.delta);
  n.gripper = clamp01(s.gripper + 0.5 * a.gripper_cmd);

  const bool engage = a.gripper_cmd > 0.5;
  if (n.held && !engage) n.held = false;
  if (!n.held && engage && dist(n.effector, s.block) < kContactRadius)
    n.held = true;

  if (n.held) {
    n.block = n.effector;
  } else {
    // The effector body is a disk of radius kContactRadius; an unheld block
    // inside it is expelled radially to the boundary. Exact center overlap
    // (a block just released in place) stays put until the effector moves.
    const Vec2 dir = s.block - n.effector;
    const double d = norm(dir);
    if (d < kContactRadius && d > 1e-9)
      n.block = clamp01(n.effector + (kContactRadius / d) * dir);
  }

  if (engage && dist(n.effector, s.layout.button) < kContactRadius)
    n.button_pressed = true;

  const bool switch_contact =
      engage && dist(n.effector, s.layout.switch_pos) < kContactRadius;
  if (switch_contact && !s.switch_engaged) n.switch_on = !n.switch_on;
  n.switch_engaged = switch_contact;

  n.step_count = s.step_count + 1;
  n.success = success_predicate(n, ins);
  n.done = n.success || n.step_count >= horizon;
  return n;
}

struct StepOutcome {
  Observation obs;
  bool done = false;
  bool success = false;
};

// One environment instance: variant + current episode. Owns the noise stream;
// reset(seed) makes the whole episode a pure function of its arguments.
// Reset draw order (fixed): 12 jitter uniforms (start, target, block, zone,
// button, switch; x then y), 1 switch coin, then 17 noise normals per
// observation including the reset observation.
class Env {
 public:
  explicit Env(const EnvVariant& variant, int horizon = kHorizon)
      : variant_(variant), horizon_(horizon), rng_(0) {}

  const EnvVariant& variant() const { return variant_; }
  int horizon() const { return horizon_; }
  const WorldState& state() const { return state_; }
  const Instruction& instruction() const { return instruction_; }

  Observation reset(const Instruction& ins, std::uint64_t seed) {
    instruction_ = ins;
    rng_ = Rng(seed);
    auto jitter = [&](Vec2 anchor) -> Vec2 {
      const double jx = rng_.uniform(-kResetJitter, kResetJitter);
      const double jy = rng_.uniform(-kResetJitter, kResetJitter);
      auto clamp_ws = [](double v) {
        return v < 0.05 ? 0.05 : (v > 0.95 ? 0.95 : v);
      };
      return {clamp_ws(anchor.x + jx), clamp_ws(anchor.y + jy)};
    };
    WorldState s;
    s.layout.start = jitter(variant_.start);
    s.layout.target = jitter(variant_.target);
    s.layout.block = jitter(variant_.block);
    s.layout.zone = jitter(variant_.zone);
    s.layout.button = jitter(variant_.button);
    s.layout.switch_pos = jitter(variant_.switch_pos);
    s.effector = s.layout.start;
    s.block = s.layout.block;
    s.switch_initial = rng_.coin();
    s.switch_on = s.switch_initial;
    state_ = s;
    return observe();
  }

  // Chain boundary inside an evaluation sequence: objects persist, the
  // effector returns to a freshly jittered start, the momentary button pops
  // back up, and the toggle reference becomes the current switch position.
  Observation chain_reset(const Instruction& ins, std::uint64_t seed) {
    instruction_ = ins;
    rng_ = Rng(seed);
    const double jx = rng_.uniform(-kResetJitter, kResetJitter);
    const double jy = rng_.uniform(-kResetJitter, kResetJitter);
    auto clamp_ws = [](double v) {
      return v < 0.05 ? 0.05 : (v > 0.95 ? 0.95 : v);
    };
    WorldState s = state_;
    s.layout.start = {clamp_ws(variant_.start.x + jx),
                      clamp_ws(variant_.start.y + jy)};
    s.effector = s.layout.start;
    s.gripper = 0.0;
    s.held = false;
    s.button_pressed = false;
    s.switch_initial = s.switch_on;
    s.switch_engaged = false;
    s.step_count = 0;
    s.done = false;
    s.success = false;
    state_ = s;
    return observe();
  }

  StepOutcome step(const Action& a) {
    state_ = transition(state_, a, instruction_, horizon_);
    return {observe(), state_.done, state_.success};
  }

 private:
  Observation observe() {
    Observation obs{features_of(state_)};
    // Noise draws happen even at sigma 0 so streams align across sigmas.
    for (double& f : obs.features)
      f += variant_.obs_noise_sigma * rng_.normal();
    return obs;
  }

  EnvVariant variant_;
  Instruction instruction_;
  int horizon_;
  WorldState state_;
  Rng rng_;
};

}  // namespace rftf

#endif  // RFTF_ENVSUITE_HPP_
