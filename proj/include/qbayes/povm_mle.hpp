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
#include <stdexcept>

#include "qbayes/model.hpp"
#include "qbayes/simulator.hpp"

// Closed-form maximum-likelihood estimation of the four POVM parameters for
// the regime with no preparation and no gate errors, from the four-gate plan
// {1, X, X-90, Y90}. Gaussian variances come from the normal approximation of
// the binomial estimators; physicality constraints are checked but never
// enforced here (the Bayesian path is the constrained one).

namespace qbayes {

/// Empirical outcome-0 frequencies of the four-gate plan. Note the gate-to-
/// frequency map: X-90 rotates |0> onto +y (measuring f_y) and Y90 onto +x
/// (measuring f_x).
struct FourProbEstimates {
  double f_z = 1.0;
  double f_mz = 0.0;
  double f_x = 0.5;
  double f_y = 0.5;
  std::uint64_t shots = 16384;

  void validate() const {
    for (double f : {f_z, f_mz, f_x, f_y})
      if (!(f >= 0.0 && f <= 1.0))
        throw std::invalid_argument("FourProbEstimates: frequency outside [0, 1]");
    if (shots < 1) throw std::invalid_argument("FourProbEstimates: shots must be >= 1");
  }

  static FourProbEstimates from_counts(const CountRecord& counts) {
    counts.validate();
    const auto plan = four_gate_plan();
    if (counts.entries.size() != 4)
      throw std::invalid_argument("FourProbEstimates: need exactly the four-gate plan");
    FourProbEstimates f;
    f.shots = counts.entries.front().shots;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& e = counts.entries[k];
      if (!(e.sequence == plan[k]))
        throw std::invalid_argument("FourProbEstimates: expected plan {1, X, X-90, Y90}");
      const double freq = static_cast<double>(e.zeros) / e.shots;
      switch (k) {
        case 0: f.f_z = freq; break;
        case 1: f.f_mz = freq; break;
        case 2: f.f_y = freq; break;   // X-90 measures +y
        default: f.f_x = freq; break;  // Y90 measures +x
      }
    }
    return f;
  }
};

struct PovmMleResult {
  PovmParams estimate;
  double var_pi0 = 0.0;
  double var_piz = 0.0;
  double var_pix = 0.0;
  double var_piy = 0.0;
  bool constraints_ok = false;
  double constraint_slack = 0.0;
};

struct ConstraintCheck {
  bool ok = false;
  double slack = 0.0;  // signed minimum slack of the two positivity conditions
};

/// Positivity of both POVM elements: pi0^2 and (1-pi0)^2 must dominate
/// pix^2 + piy^2 + piz^2. Returns the smaller of the two signed slacks.
inline ConstraintCheck check_povm_constraints(const PovmParams& p, double tol = 0.0) {
  const double sum2 = p.pix * p.pix + p.piy * p.piy + p.piz * p.piz;
  const double s0 = p.pi0 * p.pi0 - sum2;
  const double s1 = (1.0 - p.pi0) * (1.0 - p.pi0) - sum2;
  const double slack = std::min(s0, s1);
  return {slack >= -tol, slack};
}

/// Rule-of-thumb validity of the Gaussian approximation: n p > q and
/// n (1 - p) > q, with q = 9 by default.
inline bool gaussian_validity(std::uint64_t n, double p, double q = 9.0) {
  if (n < 1) throw std::invalid_argument("gaussian_validity: n must be >= 1");
  const double nd = static_cast<double>(n);
  return nd * p > q && nd * (1.0 - p) > q;
}

/// Closed-form MLE: pi0 = (f_z + f_-z)/2, piz = (f_z - f_-z)/2,
/// pix = f_x - pi0, piy = f_y - pi0, with Gaussian variances evaluated at the
/// estimated frequencies. Estimates are reported even when the positivity
/// check fails; the failure is only flagged.
inline PovmMleResult estimate_povm_mle(const FourProbEstimates& f) {
  f.validate();
  const double n = static_cast<double>(f.shots);
  PovmMleResult r;
  r.estimate.pi0 = 0.5 * (f.f_z + f.f_mz);
  r.estimate.piz = 0.5 * (f.f_z - f.f_mz);
  r.estimate.pix = f.f_x - r.estimate.pi0;
  r.estimate.piy = f.f_y - r.estimate.pi0;

  const double vz = f.f_z * (1.0 - f.f_z);
  const double vmz = f.f_mz * (1.0 - f.f_mz);
  r.var_pi0 = (vz + vmz) / (4.0 * n);
  r.var_piz = r.var_pi0;
  r.var_pix = (4.0 * f.f_x * (1.0 - f.f_x) + vz + vmz) / (4.0 * n);
  r.var_piy = (4.0 * f.f_y * (1.0 - f.f_y) + vz + vmz) / (4.0 * n);

  const ConstraintCheck check = check_povm_constraints(r.estimate);
  r.constraints_ok = check.ok;
  r.constraint_slack = check.slack;
  return r;
}

}  // namespace qbayes
