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

#ifndef RFTF_RNG_HPP_
#define RFTF_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rftf {

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64; used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed plus context ids
// (worker index, episode index, ...). Same inputs, same output, always.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = 0x8f1bbcdcbfa53e0bULL;
  for (std::uint64_t p : parts) {
    std::uint64_t st = s ^ (p * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL);
    s = splitmix64(st);
  }
  return s;
}

// Seeded RNG with self-contained sampling helpers. std::* distributions are
// implementation-defined, so every draw here is spelled out explicitly; a
// given (seed, call sequence) yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (no cached spare; two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n), n >= 1. Fixed-point multiply, no rejection.
  std::uint64_t integer(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  bool coin() { return (gen_() & 1ULL) != 0; }

 private:
  std::mt19937_64 gen_;
};

// Fisher-Yates with Rng::integer; std::shuffle is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.integer(i + 1));
    std::swap(items[i], items[j]);
  }
}

}  // namespace rftf

#endif  // RFTF_RNG_HPP_
