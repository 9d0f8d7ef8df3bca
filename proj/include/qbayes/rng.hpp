// Copyright 2026 The qbayes developers
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

#pragma once

#include <cstdint>
#include <stdexcept>

namespace qbayes {

// Counter-based pseudorandom generator. Output i of stream (seed, stream) is
// a pure function of (seed, stream, i): streams can be created per sequence,
// per sample, or per worker without any coordination, which is what makes
// simulation results independent of execution order and worker count.
//
// The generator is SplitMix64 run in counter mode (the finalizer is a strong
// 64-bit permutation); the per-stream base key is derived by mixing seed and
// stream through the same permutation twice.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t x) {
  x += kGoldenGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix64(mix64(seed ^ 0x243F6A8885A308D3ull) +
                    kGoldenGamma * mix64(stream ^ 0x13198A2E03707344ull))) {}

  std::uint64_t next_u64() { return mix64(base_ + (counter_++) * kGoldenGamma); }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

/// One binomial draw: the number of successes in n Bernoulli(p) trials.
inline std::uint64_t binomial_draw(double p, std::uint64_t n, CounterRng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial_draw: p outside [0, 1]");
  if (n < 1) throw std::invalid_argument("binomial_draw: n must be >= 1");
  if (p == 0.0) return 0;
  if (p == 1.0) return n;
  std::uint64_t s = 0;
  for (std::uint64_t i = 0; i < n; ++i) s += rng.bernoulli(p) ? 1 : 0;
  return s;
}

}  // namespace qbayes
