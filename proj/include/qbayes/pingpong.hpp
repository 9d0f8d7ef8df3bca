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
#include <set>
#include <vector>

#include "qbayes/fit.hpp"
#include "qbayes/model.hpp"
#include "qbayes/simulator.hpp"

// Ping-pong estimation of the gate rotation error: the unit sequence
// X90 [(X90)^2]^j accumulates the overrotation linearly in j, the measured
// z_j curve is fit with the SPAM-robust ansatz
//     z_j = a + (-1)^j [b + cos(pi/2 + 2 j theta)],
// and theta at nominal amplitude is interpolated from a cubic fit of theta
// versus the pulse amplitude scale A.

namespace qbayes {

struct PingPongCurve {
  std::vector<int> reps;  // j values
  std::vector<double> z;  // measured sigma_z expectations, 2 s/n - 1
  std::uint64_t shots = 16384;
  double amplitude = 1.0;

  void validate() const {
    if (reps.size() != z.size() || reps.empty())
      throw std::invalid_argument("PingPongCurve: j/z size mismatch");
    if (shots < 1) throw std::invalid_argument("PingPongCurve: shots must be >= 1");
    for (int j : reps)
      if (j < 0) throw std::invalid_argument("PingPongCurve: j must be >= 0");
    for (double v : z)
      if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("PingPongCurve: z outside [-1, 1]");
  }
};

struct PingPongFit {
  double offset_a = 0.0;
  double offset_b = 0.0;
  double theta = 0.0;
  double offset_a_err = 0.0;
  double offset_b_err = 0.0;
  double theta_err = 0.0;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct AmpPoint {
  double amplitude = 1.0;
  double theta = 0.0;
  double theta_err = 1.0;
};

struct AmplitudeSweepFit {
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;  // cubic coefficients
  double theta_at_unit = 0.0;
  double theta_at_unit_err = 0.0;
  double chi2_reduced = 0.0;
};

inline double pingpong_model_value(double a, double b, double theta, int j) {
  const double sign = (j % 2 == 0) ? 1.0 : -1.0;
  return a + sign * (b + std::cos(1.5707963267948966 + 2.0 * j * theta));
}

/// Sequences X90 [(X90)^2]^j, i.e. (X90)^{2j+1}, one per j value. The pulse
/// amplitude scale is applied by the simulator through effective_theta.
inline ExperimentPlan generate_pingpong_plan(const std::vector<int>& j_list, std::uint64_t shots,
                                             std::uint64_t seed) {
  if (j_list.empty()) throw std::invalid_argument("generate_pingpong_plan: empty j list");
  ExperimentPlan plan;
  plan.shots = shots;
  plan.seed = seed;
  plan.sequences.reserve(j_list.size());
  for (int j : j_list) {
    if (j < 0) throw std::invalid_argument("generate_pingpong_plan: j must be >= 0");
    plan.sequences.push_back(GateOp::x90(2 * j + 1));
  }
  return plan;
}

/// Per-gate rotation error when the pulse amplitude is scaled by A; linear in
/// (A - 1) with a configurable coupling (the nominal quarter turn scales with
/// the amplitude).
inline double effective_theta(double theta0, double amplitude, double coupling = 1.0) {
  return theta0 + coupling * 1.5707963267948966 * (amplitude - 1.0);
}

/// Nonlinear fit of (a, b, theta). Initialization follows the curve geometry
/// (a from the mean, b from the alternating mean) plus a profiled theta grid:
/// for fixed theta the model is linear in (a, b), so the grid solves a 2x2
/// system per point and the oscillatory objective cannot trap the fit in a
/// local minimum.
inline PingPongFit fit_pingpong(const PingPongCurve& curve) {
  curve.validate();
  const std::size_t m = curve.z.size();
  if (m < 4) throw std::invalid_argument("fit_pingpong: need at least 4 points");

  // Binomial weights for z = 2 s/n - 1, floored away from the z = +-1 poles.
  std::vector<double> w(m);
  const double n = static_cast<double>(curve.shots);
  for (std::size_t k = 0; k < m; ++k) {
    const double p = std::min(std::max(0.5 * (curve.z[k] + 1.0), 1e-6), 1.0 - 1e-6);
    const double var = std::max(4.0 * p * (1.0 - p) / n, 1e-12);
    w[k] = 1.0 / var;
  }

  // Profiled grid over theta.
  double best_theta = 0.0, best_a = 0.0, best_b = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  constexpr int kGrid = 801;
  constexpr double kThetaRange = 0.2;
  for (int g = 0; g < kGrid; ++g) {
    const double th = -kThetaRange + 2.0 * kThetaRange * g / (kGrid - 1);
    double s11 = 0, s12 = 0, s22 = 0, r1 = 0, r2 = 0;
    for (std::size_t k = 0; k < m; ++k) {
      const double sg = (curve.reps[k] % 2 == 0) ? 1.0 : -1.0;
      const double c = std::cos(1.5707963267948966 + 2.0 * curve.reps[k] * th);
      const double t = curve.z[k] - sg * c;
      s11 += w[k];
      s12 += w[k] * sg;
      s22 += w[k];
      r1 += w[k] * t;
      r2 += w[k] * sg * t;
    }
    const double det = s11 * s22 - s12 * s12;
    if (std::fabs(det) < 1e-30) continue;
    const double a = (s22 * r1 - s12 * r2) / det;
    const double b = (s11 * r2 - s12 * r1) / det;
    double obj = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double r = curve.z[k] - pingpong_model_value(a, b, th, curve.reps[k]);
      obj += w[k] * r * r;
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_theta = th;
      best_a = a;
      best_b = b;
    }
  }

  const std::vector<int>& js = curve.reps;
  FitModelFn model = [&js](const double* p, std::size_t k) {
    return pingpong_model_value(p[0], p[1], p[2], js[k]);
  };
  const CurveFitResult r =
      fit_curve(model, curve.z, w, {best_a, best_b, best_theta});

  PingPongFit out;
  out.offset_a = r.params[0];
  out.offset_b = r.params[1];
  out.theta = r.params[2];
  out.offset_a_err = r.std_errors[0];
  out.offset_b_err = r.std_errors[1];
  out.theta_err = r.std_errors[2];
  out.chi2 = r.chi2;
  out.chi2_reduced = r.chi2_reduced;
  out.converged = r.converged;
  out.iterations = r.iterations;
  return out;
}

/// Weighted cubic fit theta(A) = alpha + beta A + gamma A^2 + delta A^3 and
/// its interpolation at A = 1 with the propagated standard error.
inline AmplitudeSweepFit fit_theta_vs_amplitude(const std::vector<AmpPoint>& points) {
  if (points.size() < 5)
    throw std::invalid_argument("fit_theta_vs_amplitude: need at least 5 points");
  std::set<double> distinct;
  for (const auto& pt : points) distinct.insert(pt.amplitude);
  if (distinct.size() < 5)
    throw std::invalid_argument("fit_theta_vs_amplitude: need at least 5 distinct amplitudes");

  std::vector<double> x, y, s;
  for (const auto& pt : points) {
    x.push_back(pt.amplitude);
    y.push_back(pt.theta);
    s.push_back(pt.theta_err > 0.0 ? pt.theta_err : 1e-12);
  }
  const PolyFitResult fit = polyfit_weighted(x, y, s, 3);

  AmplitudeSweepFit out;
  out.alpha = fit.coeffs[0];
  out.beta = fit.coeffs[1];
  out.gamma = fit.coeffs[2];
  out.delta = fit.coeffs[3];
  out.chi2_reduced = fit.chi2_reduced;
  out.theta_at_unit = out.alpha + out.beta + out.gamma + out.delta;
  double var = 0.0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) var += fit.covariance(a, b);
  out.theta_at_unit_err = std::sqrt(std::max(var, 0.0));
  return out;
}

// ----------------------------------------------------------------------------
// Closed-loop sweep
// ----------------------------------------------------------------------------

struct PingPongSweepConfig {
  std::vector<int> j_list = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> amplitudes = {0.98, 0.985, 0.99, 0.995, 1.005, 1.01, 1.015, 1.02};
  std::uint64_t shots = 16384;
  double coupling = 1.0;  // d(theta_eff)/dA in units of pi/2
};

struct PingPongSweepResult {
  std::vector<PingPongCurve> curves;
  std::vector<PingPongFit> fits;
  AmplitudeSweepFit sweep;
  std::size_t sequences_used = 0;
};

/// Simulates one ping-pong curve at a given amplitude scale.
inline PingPongCurve simulate_pingpong_curve(const FullParams& truth, double amplitude,
                                             double coupling, const std::vector<int>& j_list,
                                             std::uint64_t shots, std::uint64_t seed) {
  FullParams t = truth;
  t.theta = effective_theta(truth.theta, amplitude, coupling);
  const ExperimentPlan plan = generate_pingpong_plan(j_list, shots, seed);
  const CountRecord rec = run_experiment(t, plan);
  PingPongCurve curve;
  curve.reps = j_list;
  curve.shots = shots;
  curve.amplitude = amplitude;
  curve.z.reserve(j_list.size());
  for (const auto& e : rec.entries)
    curve.z.push_back(2.0 * static_cast<double>(e.zeros) / e.shots - 1.0);
  return curve;
}

/// Full amplitude sweep: simulate, fit each curve, fit theta(A), interpolate
/// at A = 1. The default grid is 10 j-values x 8 amplitudes = 80 sequences.
inline PingPongSweepResult run_pingpong_sweep(const FullParams& truth,
                                              const PingPongSweepConfig& cfg, std::uint64_t seed) {
  PingPongSweepResult out;
  std::vector<AmpPoint> points;
  for (std::size_t ai = 0; ai < cfg.amplitudes.size(); ++ai) {
    const double amp = cfg.amplitudes[ai];
    PingPongCurve curve = simulate_pingpong_curve(truth, amp, cfg.coupling, cfg.j_list, cfg.shots,
                                                  mix64(seed + 0x9E37 * (ai + 1)));
    PingPongFit fit = fit_pingpong(curve);
    points.push_back({amp, fit.theta, fit.theta_err});
    out.sequences_used += curve.reps.size();
    out.curves.push_back(std::move(curve));
    out.fits.push_back(fit);
  }
  out.sweep = fit_theta_vs_amplitude(points);
  return out;
}

}  // namespace qbayes
