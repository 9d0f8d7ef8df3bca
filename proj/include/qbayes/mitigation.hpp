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

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "qbayes/errors.hpp"
#include "qbayes/linalg.hpp"
#include "qbayes/model.hpp"

// Error mitigation built from the estimated parameters: pre-rotation angles
// that undo a coherent preparation error, tensor-product readout mitigation
// matrices inverted by simplex-constrained least squares, and the heuristic
// gate-amplitude correction rule.

namespace qbayes {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultXCorrectionThreshold = 0.015;
inline constexpr double kDefaultAmplitudeEta = 1.33;
inline constexpr int kMaxMitigationQubits = 12;

// ----------------------------------------------------------------------------
// Pre-rotation of coherent preparation errors
// ----------------------------------------------------------------------------

/// Rotation angles that map the estimated initial Bloch vector back onto +z:
/// apply R_z(-phi0) first, then R_y(-theta0). The x-correction flag gates the
/// physical R_y gate; the virtual R_z is always safe to apply.
struct PreRotation {
  double phi0 = 0.0;    // plane polar angle, atan2(y0, x0)
  double theta0 = 0.0;  // polar angle, atan2(rho0, z0), in [0, pi]
  bool apply_x_correction = false;
};

inline PreRotation prerotation_from_state(double x0, double y0, double z0,
                                          double threshold = kDefaultXCorrectionThreshold) {
  const BlochVector r{x0, y0, z0};
  if (!r.is_physical()) throw std::invalid_argument("prerotation_from_state: |r| > 1");
  const double rho0 = std::sqrt(x0 * x0 + y0 * y0);
  PreRotation out;
  out.phi0 = rho0 < 1e-12 ? 0.0 : std::atan2(y0, x0);
  out.theta0 = std::atan2(rho0, z0);
  out.apply_x_correction = std::fabs(x0) >= threshold;
  return out;
}

/// R_y(-theta0) * R_z(-phi0) as a Bloch rotation matrix.
inline Mat3 prerotation_matrix(const PreRotation& pre) {
  const Mat3 rz = rotation_about(0.0, 0.0, 1.0, -pre.phi0);
  const Mat3 ry = rotation_about(0.0, 1.0, 0.0, -pre.theta0);
  return mat3_mul(ry, rz);
}

// ----------------------------------------------------------------------------
// Readout mitigation
// ----------------------------------------------------------------------------

/// Classical readout error probabilities from the POVM diagonal:
/// eps0 = 1 - (pi0 + piz), eps1 = pi0 - piz.
inline std::pair<double, double> readout_eps(double pi0, double piz) {
  const double eps0 = 1.0 - (pi0 + piz);
  const double eps1 = pi0 - piz;
  if (!(eps0 >= 0.0 && eps0 <= 1.0 && eps1 >= 0.0 && eps1 <= 1.0))
    throw std::invalid_argument("readout_eps: pi0 +- piz outside [0, 1]");
  return {eps0, eps1};
}

/// Column-stochastic transition matrix observed <- true over 2^N bitstrings,
/// the Kronecker product of per-qubit blocks [[1-e0, e1], [e0, 1-e1]]
/// (qubit 0 = most significant bit).
struct MitigationMatrix {
  std::size_t n_qubits = 0;
  linalg::Matrix m;
  std::vector<std::pair<double, double>> eps_pairs;

  std::size_t dim() const { return std::size_t{1} << n_qubits; }
};

inline MitigationMatrix assemble_mitigation_matrix(
    const std::vector<std::pair<double, double>>& eps_pairs) {
  const std::size_t n = eps_pairs.size();
  if (n < 1 || n > kMaxMitigationQubits)
    throw std::invalid_argument("assemble_mitigation_matrix: need 1..12 qubits");
  for (const auto& [e0, e1] : eps_pairs)
    if (!(e0 >= 0.0 && e0 <= 1.0 && e1 >= 0.0 && e1 <= 1.0))
      throw std::invalid_argument("assemble_mitigation_matrix: eps outside [0, 1]");
  const std::size_t dim = std::size_t{1} << n;
  MitigationMatrix out;
  out.n_qubits = n;
  out.eps_pairs = eps_pairs;
  out.m = linalg::Matrix(dim, dim);
  for (std::size_t col = 0; col < dim; ++col)
    for (std::size_t row = 0; row < dim; ++row) {
      double v = 1.0;
      for (std::size_t q = 0; q < n; ++q) {
        const int truth = (col >> (n - 1 - q)) & 1;
        const int seen = (row >> (n - 1 - q)) & 1;
        const auto& [e0, e1] = eps_pairs[q];
        v *= truth == 0 ? (seen == 0 ? 1.0 - e0 : e0) : (seen == 1 ? 1.0 - e1 : e1);
      }
      out.m(row, col) = v;
    }
  return out;
}

struct MitigationResult {
  std::vector<double> probabilities;  // corrected, on the simplex
  double residual_norm = 0.0;         // ||M p - f||_2 at the solution
  double condition = 0.0;             // 2-norm condition estimate of M
  int iterations = 0;
};

namespace detail {

/// 2-norm condition estimate via power iteration on M^T M (and its inverse
/// through the LU factors).
inline double condition_estimate(const linalg::Matrix& m, const linalg::LuFactors& lu) {
  const std::size_t n = m.rows();
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double xi : x) s += xi * xi;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& xi : x) xi /= s;
    return s;
  };
  double smax = 0.0;
  for (int it = 0; it < 30; ++it) {
    std::vector<double> u = linalg::multiply(m, v);
    std::vector<double> w = linalg::multiply(linalg::transpose(m), u);
    smax = std::sqrt(normalize(w));
    v = std::move(w);
  }
  if (lu.singular) return std::numeric_limits<double>::infinity();
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double gmax = 0.0;
  const linalg::Matrix mt = linalg::transpose(m);
  const linalg::LuFactors lut = linalg::lu_factor(mt);
  for (int it = 0; it < 30; ++it) {
    std::vector<double> u = linalg::lu_solve(lu, x);
    std::vector<double> w = linalg::lu_solve(lut, u);
    gmax = std::sqrt(normalize(w));
    x = std::move(w);
  }
  return smax * gmax;
}

/// Equality-constrained least squares on the free index set:
/// min ||A_F p_F - b|| s.t. sum p_F = 1, via the bordered normal equations.
inline std::vector<double> solve_free_set(const linalg::Matrix& ata, const std::vector<double>& atb,
                                          const std::vector<std::size_t>& free_idx) {
  const std::size_t nf = free_idx.size();
  linalg::Matrix k(nf + 1, nf + 1);
  std::vector<double> rhs(nf + 1);
  for (std::size_t i = 0; i < nf; ++i) {
    for (std::size_t j = 0; j < nf; ++j) k(i, j) = ata(free_idx[i], free_idx[j]);
    k(i, nf) = 1.0;
    k(nf, i) = 1.0;
    rhs[i] = atb[free_idx[i]];
  }
  k(nf, nf) = 0.0;
  rhs[nf] = 1.0;
  return linalg::solve(k, rhs);  // last entry is the multiplier
}

}  // namespace detail

/// Corrects an observed count (or probability) vector through the mitigation
/// matrix: minimizes ||M p - observed/total||_2 subject to p >= 0 and
/// sum p = 1, via an active-set iteration. Exact data is recovered exactly.
inline MitigationResult mitigate_counts(const std::vector<double>& observed,
                                        const MitigationMatrix& mit) {
  const std::size_t dim = mit.dim();
  if (observed.size() != dim)
    throw std::invalid_argument("mitigate_counts: observed length does not match matrix");
  double total = 0.0;
  for (double c : observed) {
    if (!(c >= 0.0)) throw std::invalid_argument("mitigate_counts: negative count");
    total += c;
  }
  if (!(total > 0.0)) throw std::invalid_argument("mitigate_counts: total counts must be > 0");

  std::vector<double> f(dim);
  for (std::size_t i = 0; i < dim; ++i) f[i] = observed[i] / total;

  const linalg::LuFactors lu = linalg::lu_factor(mit.m);
  MitigationResult out;
  out.condition = detail::condition_estimate(mit.m, lu);
  if (lu.singular || !(out.condition < 1e12))
    throw EstimationError("mitigate_counts: mitigation matrix is singular or ill-conditioned");

  // The plain solve is optimal whenever it lands on the simplex (columns of M
  // sum to 1, so any exact solution automatically sums to 1).
  std::vector<double> p = linalg::lu_solve(lu, f);
  double pmin = 0.0;
  for (double v : p) pmin = std::min(pmin, v);
  constexpr double kNegTol = 1e-12;

  if (pmin < -kNegTol) {
    // Active-set descent from the feasible uniform point.
    const linalg::Matrix mt = linalg::transpose(mit.m);
    const linalg::Matrix ata = linalg::multiply(mt, mit.m);
    const std::vector<double> atb = linalg::multiply(mt, f);
    std::vector<bool> free_var(dim, true);
    std::vector<double> cur(dim, 1.0 / static_cast<double>(dim));
    const int max_outer = static_cast<int>(3 * dim) + 10;
    for (int outer = 0; outer < max_outer; ++outer) {
      ++out.iterations;
      std::vector<std::size_t> fidx;
      for (std::size_t i = 0; i < dim; ++i)
        if (free_var[i]) fidx.push_back(i);
      std::vector<double> sol = detail::solve_free_set(ata, atb, fidx);
      const double mult = sol[fidx.size()];
      std::vector<double> cand(dim, 0.0);
      for (std::size_t i = 0; i < fidx.size(); ++i) cand[fidx[i]] = sol[i];

      double neg = 0.0;
      for (std::size_t i : fidx) neg = std::min(neg, cand[i]);
      if (neg < -kNegTol) {
        // Step from the current feasible point to the first boundary.
        double alpha = 1.0;
        for (std::size_t i : fidx)
          if (cand[i] < 0.0 && cur[i] > cand[i])
            alpha = std::min(alpha, cur[i] / (cur[i] - cand[i]));
        for (std::size_t i = 0; i < dim; ++i) cur[i] += alpha * (cand[i] - cur[i]);
        for (std::size_t i : fidx)
          if (cur[i] <= kNegTol) {
            free_var[i] = false;
            cur[i] = 0.0;
          }
        continue;
      }
      cur = cand;
      // KKT check on the zeroed variables: free the one with the most
      // negative reduced gradient, if any.
      std::vector<double> grad = linalg::multiply(ata, cur);
      for (std::size_t i = 0; i < dim; ++i) grad[i] -= atb[i];
      double worst = -1e-10;
      std::size_t worst_idx = dim;
      for (std::size_t i = 0; i < dim; ++i) {
        if (free_var[i]) continue;
        const double reduced = grad[i] + mult;
        if (reduced < worst) {
          worst = reduced;
          worst_idx = i;
        }
      }
      if (worst_idx == dim) break;
      free_var[worst_idx] = true;
    }
    p = cur;
  }

  // Clean tiny negatives and renormalize exactly onto the simplex.
  double sum = 0.0;
  for (double& v : p) {
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  if (!(sum > 0.0)) throw EstimationError("mitigate_counts: empty solution");
  for (double& v : p) v /= sum;

  const std::vector<double> mp = linalg::multiply(mit.m, p);
  double r2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) r2 += (mp[i] - f[i]) * (mp[i] - f[i]);
  out.residual_norm = std::sqrt(r2);
  out.probabilities = std::move(p);
  return out;
}

// ----------------------------------------------------------------------------
// Observables and amplitude correction
// ----------------------------------------------------------------------------

/// Parity-weighted sum sum_s p(s) (-1)^{|s|}; the expectation of the N-qubit
/// X tensor power on X-basis outcome data.
inline double expectation_parity(const std::vector<double>& probabilities) {
  double e = 0.0;
  for (std::size_t s = 0; s < probabilities.size(); ++s)
    e += (__builtin_popcountll(s) & 1) ? -probabilities[s] : probabilities[s];
  return e;
}

/// Heuristic pulse-amplitude update A -> (1 - eta theta / pi) A.
inline double amplitude_correction(double amplitude, double theta,
                                   double eta = kDefaultAmplitudeEta) {
  return (1.0 - eta * theta / kPi) * amplitude;
}

}  // namespace qbayes
