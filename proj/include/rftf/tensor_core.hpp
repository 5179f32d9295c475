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
// Minimal differentiable numerical core: flat parameter vectors with named
// segments, fixed-architecture MLP forward/backward, stable softmax/sigmoid
// helpers, Adam, and finite-difference gradient checking. Everything is f64
// and deterministic; nets here are tiny, so clarity and reproducibility win
// over throughput.

#ifndef RFTF_TENSOR_CORE_HPP_
#define RFTF_TENSOR_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rftf/errors.hpp"
#include "rftf/rng.hpp"

namespace rftf {

// One named contiguous slice of a ParamVector.
struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

// Flat f64 parameter store with a named segment table. Policies, reference
// policies, value models, and their gradients all share this representation;
// gradients always have the same layout as the parameters they differentiate.
class ParamVector {
 public:
  std::vector<double> values;

  ParamVector() = default;

  // Builds a contiguous layout from (name, shape) pairs, zero-initialized.
  explicit ParamVector(
      const std::vector<std::pair<std::string, std::vector<std::size_t>>>&
          names_and_shapes) {
    std::size_t offset = 0;
    for (const auto& [name, shape] : names_and_shapes) {
      Segment s{name, offset, shape};
      offset += s.numel();
      segments_.push_back(std::move(s));
    }
    values.assign(offset, 0.0);
  }

  // Rebuilds from an explicit table (checkpoint load). Segments must tile
  // [0, total) exactly: non-overlapping and gap-free.
  static ParamVector from_table(std::vector<Segment> table,
                                std::vector<double> payload) {
    std::vector<Segment> sorted = table;
    std::sort(sorted.begin(), sorted.end(),
              [](const Segment& a, const Segment& b) {
                return a.offset < b.offset;
              });
    std::size_t expect = 0;
    for (const Segment& s : sorted) {
      if (s.offset != expect)
        throw ConfigError("segment table has gap or overlap at '" + s.name +
                          "' (offset " + std::to_string(s.offset) +
                          ", expected " + std::to_string(expect) + ")");
      expect += s.numel();
    }
    if (expect != payload.size())
      throw ConfigError("segment table covers " + std::to_string(expect) +
                        " values but payload has " +
                        std::to_string(payload.size()));
    ParamVector p;
    p.segments_ = std::move(table);
    p.values = std::move(payload);
    return p;
  }

  const std::vector<Segment>& segments() const { return segments_; }

  std::size_t size() const { return values.size(); }

  bool has_segment(const std::string& name) const {
    return find(name) != nullptr;
  }

  std::span<double> seg(const std::string& name) {
    const Segment* s = find(name);
    if (s == nullptr) throw ConfigError("no segment named '" + name + "'");
    return {values.data() + s->offset, s->numel()};
  }

  std::span<const double> seg(const std::string& name) const {
    const Segment* s = find(name);
    if (s == nullptr) throw ConfigError("no segment named '" + name + "'");
    return {values.data() + s->offset, s->numel()};
  }

  const Segment& segment_info(const std::string& name) const {
    const Segment* s = find(name);
    if (s == nullptr) throw ConfigError("no segment named '" + name + "'");
    return *s;
  }

  // Same layout, all-zero values. This is how gradients are born.
  ParamVector zeros_like() const {
    ParamVector p;
    p.segments_ = segments_;
    p.values.assign(values.size(), 0.0);
    return p;
  }

  bool same_layout(const ParamVector& other) const {
    if (segments_.size() != other.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (segments_[i].name != other.segments_[i].name ||
          segments_[i].offset != other.segments_[i].offset ||
          segments_[i].shape != other.segments_[i].shape)
        return false;
    }
    return true;
  }

 private:
  const Segment* find(const std::string& name) const {
    for (const Segment& s : segments_)
      if (s.name == name) return &s;
    return nullptr;
  }

  std::vector<Segment> segments_;
};

enum class Activation { kTanh, kRelu };

inline std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

// Fully-connected net: hidden layers carry the activation, output is linear.
// Layer i owns segments "li.W" (shape {n_out, n_in}, row-major) and "li.b".
// The last layer is the head; everything before it is the trunk.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation activation = Activation::kTanh;

  std::size_t n_layers() const { return hidden_dims.size() + 1; }

  void validate() const {
    if (input_dim < 1 || output_dim < 1)
      throw ConfigError("mlp dims must be >= 1");
    for (std::size_t h : hidden_dims)
      if (h < 1) throw ConfigError("mlp dims must be >= 1");
  }

  std::vector<std::pair<std::string, std::vector<std::size_t>>> layout()
      const {
    validate();
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < n_layers(); ++i) {
      const std::size_t width =
          i < hidden_dims.size() ? hidden_dims[i] : output_dim;
      const std::string tag = "l" + std::to_string(i);
      out.emplace_back(tag + ".W", std::vector<std::size_t>{width, in});
      out.emplace_back(tag + ".b", std::vector<std::size_t>{width});
      in = width;
    }
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, shape] : layout()) {
      std::size_t k = 1;
      for (std::size_t d : shape) k *= d;
      n += k;
    }
    return n;
  }

  ParamVector make_params() const { return ParamVector(layout()); }

  // Head = last layer; its segment names, in layout order.
  std::vector<std::string> head_segment_names() const {
    const std::string tag = "l" + std::to_string(n_layers() - 1);
    return {tag + ".W", tag + ".b"};
  }

  bool is_head_segment(const std::string& name) const {
    const std::string tag = "l" + std::to_string(n_layers() - 1) + ".";
    return name.rfind(tag, 0) == 0;
  }
};

inline void check_params_match(const MlpSpec& spec, const ParamVector& p) {
  if (p.size() != spec.param_count())
    throw ConfigError("param vector has " + std::to_string(p.size()) +
                      " values, spec wants " +
                      std::to_string(spec.param_count()));
}

// ---------------------------------------------------------------------------
// Stable scalar helpers.

// log(1 + exp(x)) without overflow/underflow across the whole double range.
inline double log1pexp(double x) {
  if (x <= -37.0) return std::exp(x);
  if (x <= 18.0) return std::log1p(std::exp(x));
  if (x <= 33.3) return x + std::exp(-x);
  return x;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// In-place softmax with max subtraction; safe for logits up to +-1e4.
inline void softmax_inplace(std::span<double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward.

inline std::vector<double> forward_mlp(const MlpSpec& spec,
                                       const ParamVector& params,
                                       std::span<const double> input) {
  check_params_match(spec, params);
  if (input.size() != spec.input_dim)
    throw ConfigError("input has " + std::to_string(input.size()) +
                      " features, spec wants " +
                      std::to_string(spec.input_dim));
  std::vector<double> x(input.begin(), input.end());
  for (std::size_t i = 0; i < spec.n_layers(); ++i) {
    const std::string tag = "l" + std::to_string(i);
    const auto W = params.seg(tag + ".W");
    const auto b = params.seg(tag + ".b");
    const std::size_t n_out = b.size();
    const std::size_t n_in = x.size();
    std::vector<double> y(n_out);
    for (std::size_t r = 0; r < n_out; ++r) {
      double acc = b[r];
      const double* row = W.data() + r * n_in;
      for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
    const bool hidden = i + 1 < spec.n_layers();
    if (hidden) {
      if (spec.activation == Activation::kTanh)
        for (double& v : y) v = std::tanh(v);
      else
        for (double& v : y) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(y);
  }
  return x;
}

// Post-activation values per layer; acts[0] is the input, acts.back() the
// (linear) output. Enough to run the backward pass for tanh and relu.
struct ForwardTrace {
  std::vector<std::vector<double>> acts;

  const std::vector<double>& output() const { return acts.back(); }
};

inline ForwardTrace forward_trace(const MlpSpec& spec,
                                  const ParamVector& params,
                                  std::span<const double> input) {
  check_params_match(spec, params);
  if (input.size() != spec.input_dim)
    throw ConfigError("input has " + std::to_string(input.size()) +
                      " features, spec wants " +
                      std::to_string(spec.input_dim));
  ForwardTrace trace;
  trace.acts.reserve(spec.n_layers() + 1);
  trace.acts.emplace_back(input.begin(), input.end());
  for (std::size_t i = 0; i < spec.n_layers(); ++i) {
    const std::string tag = "l" + std::to_string(i);
    const auto W = params.seg(tag + ".W");
    const auto b = params.seg(tag + ".b");
    const std::vector<double>& x = trace.acts.back();
    const std::size_t n_out = b.size();
    const std::size_t n_in = x.size();
    std::vector<double> y(n_out);
    for (std::size_t r = 0; r < n_out; ++r) {
      double acc = b[r];
      const double* row = W.data() + r * n_in;
      for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
    const bool hidden = i + 1 < spec.n_layers();
    if (hidden) {
      if (spec.activation == Activation::kTanh)
        for (double& v : y) v = std::tanh(v);
      else
        for (double& v : y) v = v > 0.0 ? v : 0.0;
    }
    trace.acts.push_back(std::move(y));
  }
  return trace;
}

// Reverse pass from an upstream gradient dL/d(output). Accumulates into
// grad (layout must match params); callers batch by summing into one grad.
inline void backward_from_trace(const MlpSpec& spec, const ParamVector& params,
                                const ForwardTrace& trace,
                                std::span<const double> upstream,
                                ParamVector& grad) {
  if (upstream.size() != spec.output_dim)
    throw ConfigError("upstream gradient has " +
                      std::to_string(upstream.size()) + " entries, spec wants " +
                      std::to_string(spec.output_dim));
  if (!grad.same_layout(params))
    throw ConfigError("gradient layout does not match params");
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t ii = spec.n_layers(); ii-- > 0;) {
    const std::string tag = "l" + std::to_string(ii);
    const auto W = params.seg(tag + ".W");
    auto gW = grad.seg(tag + ".W");
    auto gb = grad.seg(tag + ".b");
    const std::vector<double>& x = trace.acts[ii];      // layer input
    const std::vector<double>& y = trace.acts[ii + 1];  // post-activation
    const std::size_t n_out = gb.size();
    const std::size_t n_in = x.size();
    // Hidden layers: fold the activation derivative into delta first.
    if (ii + 1 < spec.n_layers()) {
      if (spec.activation == Activation::kTanh)
        for (std::size_t r = 0; r < n_out; ++r) delta[r] *= 1.0 - y[r] * y[r];
      else
        for (std::size_t r = 0; r < n_out; ++r)
          if (y[r] <= 0.0) delta[r] = 0.0;
    }
    for (std::size_t r = 0; r < n_out; ++r) {
      gb[r] += delta[r];
      double* grow = gW.data() + r * n_in;
      for (std::size_t c = 0; c < n_in; ++c) grow[c] += delta[r] * x[c];
    }
    if (ii == 0) break;
    std::vector<double> prev(n_in, 0.0);
    for (std::size_t r = 0; r < n_out; ++r) {
      const double* row = W.data() + r * n_in;
      for (std::size_t c = 0; c < n_in; ++c) prev[c] += delta[r] * row[c];
    }
    delta = std::move(prev);
  }
}

inline ParamVector backward(const MlpSpec& spec, const ParamVector& params,
                            std::span<const double> input,
                            std::span<const double> upstream) {
  ForwardTrace trace = forward_trace(spec, params, input);
  ParamVector grad = params.zeros_like();
  backward_from_trace(spec, params, trace, upstream, grad);
  return grad;
}

// Xavier-uniform weights, zero biases. Per-layer draw order is row-major W
// then b, so a given (spec, seed) always yields the same parameters.
inline ParamVector xavier_init(const MlpSpec& spec, std::uint64_t seed) {
  ParamVector p = spec.make_params();
  Rng rng(seed);
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.n_layers(); ++i) {
    const std::size_t width =
        i < spec.hidden_dims.size() ? spec.hidden_dims[i] : spec.output_dim;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + width));
    auto W = p.seg("l" + std::to_string(i) + ".W");
    for (double& w : W) w = rng.uniform(-limit, limit);
    in = width;
  }
  return p;
}

// Copies every non-head segment from src into dst. Both nets must share the
// trunk architecture; heads may differ (policy head vs scalar value head).
inline void copy_trunk(const MlpSpec& src_spec, const ParamVector& src,
                       const MlpSpec& dst_spec, ParamVector& dst) {
  if (src_spec.input_dim != dst_spec.input_dim ||
      src_spec.hidden_dims != dst_spec.hidden_dims ||
      src_spec.activation != dst_spec.activation)
    throw ConfigError("trunk architectures differ; cannot copy");
  for (const auto& [name, shape] : src_spec.layout()) {
    if (src_spec.is_head_segment(name)) continue;
    auto from = src.seg(name);
    auto to = dst.seg(name);
    std::copy(from.begin(), from.end(), to.begin());
  }
}

// Zeroes gradient entries outside the head. With Adam this freezes the trunk
// exactly: zero grad keeps m = v = 0, so the step is identically zero.
inline void mask_to_head(const MlpSpec& spec, ParamVector& grad) {
  for (const Segment& s : grad.segments()) {
    if (spec.is_head_segment(s.name)) continue;
    auto g = grad.seg(s.name);
    std::fill(g.begin(), g.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

inline void adam_step(ParamVector& params, const ParamVector& grad,
                      AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  const std::size_t n = params.size();
  if (grad.size() != n)
    throw ConfigError("gradient size does not match params");
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);
  if (state.m.size() != n || state.v.size() != n)
    throw ConfigError("optimizer state size does not match params");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad.values[i]))
      throw NumericalError("non-finite gradient at parameter " +
                           std::to_string(i) + " (adam step " +
                           std::to_string(state.t + 1) + ")");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad.values[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param_index = 0;
};

// Central finite differences against an analytic gradient. The relative
// error uses denominator max(|analytic|, |numeric|, 1e-8); the absolute
// floor keeps zero-gradient coordinates from dividing by zero.
inline GradCheckReport grad_check(
    const ParamVector& params,
    const std::function<double(const ParamVector&)>& loss,
    const ParamVector& analytic_grad, double step = 1e-5) {
  if (analytic_grad.size() != params.size())
    throw ConfigError("analytic gradient size does not match params");
  ParamVector probe = params;
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = loss(probe);
    probe.values[i] = saved - step;
    const double down = loss(probe);
    probe.values[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("non-finite loss while probing parameter " +
                           std::to_string(i));
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = analytic_grad.values[i];
    const double denom =
        std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(analytic - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param_index = i;
    }
  }
  return report;
}

}  // namespace rftf

#endif  // RFTF_TENSOR_CORE_HPP_
