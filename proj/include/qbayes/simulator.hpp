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
#include <utility>
#include <vector>

#include "qbayes/model.hpp"
#include "qbayes/rng.hpp"

// Synthetic device: binomial shot counts for calibration sequences, plus the
// analytic GHZ readout distribution used as a mitigation benchmark. All
// randomness is counter-based; per-sequence streams are derived from the plan
// seed and the sequence index, so results do not depend on execution order.

namespace qbayes {

struct ExperimentPlan {
  std::vector<GateOp> sequences;
  std::uint64_t shots = 16384;
  std::uint64_t seed = 0;

  void validate() const {
    if (sequences.empty()) throw std::invalid_argument("ExperimentPlan: no sequences");
    if (shots < 1) throw std::invalid_argument("ExperimentPlan: shots must be >= 1");
  }
};

struct CountEntry {
  GateOp sequence;
  std::uint64_t shots = 0;
  std::uint64_t zeros = 0;  // s_k, the count of outcome 0
};

struct CountRecord {
  std::vector<CountEntry> entries;

  std::size_t size() const { return entries.size(); }

  std::vector<double> frequencies() const {
    std::vector<double> f;
    f.reserve(entries.size());
    for (const auto& e : entries) f.push_back(static_cast<double>(e.zeros) / e.shots);
    return f;
  }

  void validate() const {
    if (entries.empty()) throw std::invalid_argument("CountRecord: empty");
    for (const auto& e : entries) {
      if (e.shots < 1) throw std::invalid_argument("CountRecord: shots must be >= 1");
      if (e.zeros > e.shots) throw std::invalid_argument("CountRecord: zeros exceed shots");
    }
  }
};

/// One binomial count of outcome 0 in n shots at probability p.
inline std::uint64_t sample_counts(double p, std::uint64_t n, CounterRng& rng) {
  return binomial_draw(p, n, rng);
}

inline std::uint64_t sample_counts(double p, std::uint64_t n, std::uint64_t seed) {
  CounterRng rng(seed, 0x5A4D50C7ull);
  return binomial_draw(p, n, rng);
}

/// Runs every sequence of the plan against ground-truth parameters.
inline CountRecord run_experiment(const FullParams& truth, const ExperimentPlan& plan) {
  plan.validate();
  if (!truth.is_valid()) throw std::invalid_argument("run_experiment: invalid truth parameters");
  CountRecord rec;
  rec.entries.reserve(plan.sequences.size());
  for (std::size_t k = 0; k < plan.sequences.size(); ++k) {
    const double p = full_sequence_probability(truth, plan.sequences[k]);
    if (!(p >= -kExactTol && p <= 1.0 + kExactTol))
      throw std::logic_error("run_experiment: model probability outside [0, 1]");
    CounterRng rng(plan.seed, 0xC0117E5ull + k);
    const double pc = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    rec.entries.push_back({plan.sequences[k], plan.shots, sample_counts(pc, plan.shots, rng)});
  }
  return rec;
}

/// In-place application of independent per-qubit bit-flip channels
/// [[1-e0, e1], [e0, 1-e1]] (column = true outcome) to a distribution over
/// 2^N bitstrings, qubit 0 = most significant bit.
inline void apply_readout_channel(std::vector<double>& dist,
                                  const std::vector<std::pair<double, double>>& eps_pairs) {
  const std::size_t dim = dist.size();
  std::size_t n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  if ((std::size_t{1} << n) != dim)
    throw std::invalid_argument("apply_readout_channel: length is not a power of two");
  if (eps_pairs.size() != n)
    throw std::invalid_argument("apply_readout_channel: need one (eps0, eps1) pair per qubit");
  for (std::size_t q = 0; q < n; ++q) {
    const auto [e0, e1] = eps_pairs[q];
    if (!(e0 >= 0.0 && e0 <= 1.0 && e1 >= 0.0 && e1 <= 1.0))
      throw std::invalid_argument("apply_readout_channel: eps outside [0, 1]");
    const std::size_t stride = dim >> (q + 1);
    for (std::size_t base = 0; base < dim; base += 2 * stride)
      for (std::size_t i = base; i < base + stride; ++i) {
        const double p0 = dist[i];
        const double p1 = dist[i + stride];
        dist[i] = (1.0 - e0) * p0 + e1 * p1;
        dist[i + stride] = e0 * p0 + (1.0 - e1) * p1;
      }
  }
}

/// X-basis outcome distribution of the GHZ state (|0..0> + e^{i phase}|1..1>),
/// p(s) = [1 + cos(phase) (-1)^{|s|}] / 2^N, with optional per-qubit readout
/// noise applied as a tensor-product stochastic map.
inline std::vector<double> ghz_readout_distribution(
    int n_qubits, double phase, const std::vector<std::pair<double, double>>& eps_pairs) {
  if (n_qubits < 1 || n_qubits > 12)
    throw std::invalid_argument("ghz_readout_distribution: n_qubits must be in [1, 12]");
  if (!eps_pairs.empty() && eps_pairs.size() != static_cast<std::size_t>(n_qubits))
    throw std::invalid_argument("ghz_readout_distribution: eps list length must equal n_qubits");
  const std::size_t dim = std::size_t{1} << n_qubits;
  const double c = std::cos(phase);
  std::vector<double> dist(dim);
  for (std::size_t s = 0; s < dim; ++s) {
    const bool odd = __builtin_popcountll(s) & 1;
    dist[s] = (1.0 + (odd ? -c : c)) / static_cast<double>(dim);
  }
  if (!eps_pairs.empty()) apply_readout_channel(dist, eps_pairs);
  return dist;
}

}  // namespace qbayes
