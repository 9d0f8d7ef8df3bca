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
#include <functional>
#include <span>
#include <vector>

#include "qbayes/linalg.hpp"

// Weighted curve fitting: a small Levenberg-Marquardt loop with a numeric
// Jacobian, and a weighted polynomial fit via the normal equations. Reported
// parameter covariances are (J^T W J)^-1 scaled by max(1, chi^2/dof): with
// per-point measurement errors as weights, errors inflate when the point
// spread exceeds them but are never reported below the propagated noise.

namespace qbayes {

/// Model callback: value of the fit function at data index k for parameters p.
using FitModelFn = std::function<double(const double* p, std::size_t k)>;

struct CurveFitOptions {
  int max_iterations = 200;
  double ftol = 1e-14;  // relative chi^2 improvement considered converged
  double lambda_init = 1e-3;
};

struct CurveFitResult {
  std::vector<double> params;
  std::vector<double> std_errors;
  linalg::Matrix covariance;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double fit_chi2(const FitModelFn& model, std::span<const double> y,
                       std::span<const double> w, const std::vector<double>& p) {
  double c = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double r = y[k] - model(p.data(), k);
    c += w[k] * r * r;
  }
  return c;
}

}  // namespace detail

inline CurveFitResult fit_curve(const FitModelFn& model, std::span<const double> y,
                                std::span<const double> weights, std::vector<double> init,
                                const CurveFitOptions& opt = {}) {
  const std::size_t m = y.size();
  const std::size_t np = init.size();
  if (weights.size() != m) throw std::invalid_argument("fit_curve: weights/data size mismatch");
  if (m < np) throw std::invalid_argument("fit_curve: more parameters than data points");

  CurveFitResult out;
  out.params = std::move(init);
  out.chi2 = detail::fit_chi2(model, y, weights, out.params);

  linalg::Matrix jac(m, np);
  double lambda = opt.lambda_init;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    out.iterations = iter + 1;
    // Numeric central-difference Jacobian.
    for (std::size_t a = 0; a < np; ++a) {
      const double h = 1e-7 * std::max(1.0, std::fabs(out.params[a]));
      const double saved = out.params[a];
      out.params[a] = saved + h;
      std::vector<double> fp(m);
      for (std::size_t k = 0; k < m; ++k) fp[k] = model(out.params.data(), k);
      out.params[a] = saved - h;
      for (std::size_t k = 0; k < m; ++k) jac(k, a) = (fp[k] - model(out.params.data(), k)) / (2 * h);
      out.params[a] = saved;
    }
    linalg::Matrix jtj(np, np);
    std::vector<double> g(np, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double r = y[k] - model(out.params.data(), k);
      for (std::size_t a = 0; a < np; ++a) {
        g[a] += weights[k] * jac(k, a) * r;
        for (std::size_t b = a; b < np; ++b) jtj(a, b) += weights[k] * jac(k, a) * jac(k, b);
      }
    }
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = 0; b < a; ++b) jtj(a, b) = jtj(b, a);

    bool stepped = false;
    for (int damp = 0; damp < 16 && !stepped; ++damp) {
      linalg::Matrix aug = jtj;
      for (std::size_t a = 0; a < np; ++a)
        aug(a, a) += lambda * (jtj(a, a) > 0.0 ? jtj(a, a) : 1.0) + 1e-300;
      linalg::Matrix chol = aug;
      if (!linalg::cholesky_factor(chol)) {
        lambda *= 10.0;
        continue;
      }
      const std::vector<double> step = linalg::cholesky_solve_factored(chol, g);
      std::vector<double> cand = out.params;
      for (std::size_t a = 0; a < np; ++a) cand[a] += step[a];
      const double c2 = detail::fit_chi2(model, y, weights, cand);
      if (c2 <= out.chi2) {
        const double gain = out.chi2 - c2;
        out.params = std::move(cand);
        out.chi2 = c2;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (gain <= opt.ftol * (1.0 + out.chi2)) {
          out.converged = true;
        }
      } else {
        lambda *= 10.0;
      }
    }
    if (!stepped) {
      out.converged = true;  // stuck at the resolution limit
      break;
    }
    if (out.converged) break;
  }

  // Covariance at the solution (undamped normal matrix).
  linalg::Matrix jtj(np, np);
  for (std::size_t a = 0; a < np; ++a) {
    const double h = 1e-7 * std::max(1.0, std::fabs(out.params[a]));
    const double saved = out.params[a];
    out.params[a] = saved + h;
    std::vector<double> fp(m);
    for (std::size_t k = 0; k < m; ++k) fp[k] = model(out.params.data(), k);
    out.params[a] = saved - h;
    for (std::size_t k = 0; k < m; ++k) jac(k, a) = (fp[k] - model(out.params.data(), k)) / (2 * h);
    out.params[a] = saved;
  }
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t a = 0; a < np; ++a)
      for (std::size_t b = a; b < np; ++b) jtj(a, b) += weights[k] * jac(k, a) * jac(k, b);
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < a; ++b) jtj(a, b) = jtj(b, a);

  const double dof = m > np ? static_cast<double>(m - np) : 1.0;
  out.chi2_reduced = out.chi2 / dof;
  const double scale = std::max(1.0, out.chi2_reduced);
  try {
    out.covariance = linalg::spd_inverse(jtj);
  } catch (const std::invalid_argument&) {
    out.covariance = linalg::Matrix(np, np);  // degenerate fit; zero covariance
  }
  out.std_errors.resize(np);
  for (std::size_t a = 0; a < np; ++a) {
    for (std::size_t b = 0; b < np; ++b) out.covariance(a, b) *= scale;
    out.std_errors[a] = std::sqrt(std::max(out.covariance(a, a), 0.0));
  }
  return out;
}

struct PolyFitResult {
  std::vector<double> coeffs;  // lowest order first
  linalg::Matrix covariance;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
};

/// Weighted polynomial least squares with per-point standard deviations.
inline PolyFitResult polyfit_weighted(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> sigma, int degree) {
  const std::size_t m = x.size();
  const std::size_t np = static_cast<std::size_t>(degree) + 1;
  if (y.size() != m || sigma.size() != m)
    throw std::invalid_argument("polyfit_weighted: size mismatch");
  if (m < np) throw std::invalid_argument("polyfit_weighted: not enough points");

  linalg::Matrix xtx(np, np);
  std::vector<double> xty(np, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (!(sigma[k] > 0.0)) throw std::invalid_argument("polyfit_weighted: sigma must be > 0");
    const double w = 1.0 / (sigma[k] * sigma[k]);
    double pa = 1.0;
    std::vector<double> pows(np);
    for (std::size_t a = 0; a < np; ++a) {
      pows[a] = pa;
      pa *= x[k];
    }
    for (std::size_t a = 0; a < np; ++a) {
      xty[a] += w * pows[a] * y[k];
      for (std::size_t b = a; b < np; ++b) xtx(a, b) += w * pows[a] * pows[b];
    }
  }
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < a; ++b) xtx(a, b) = xtx(b, a);

  PolyFitResult out;
  linalg::Matrix chol = xtx;
  if (!linalg::cholesky_factor(chol))
    throw std::invalid_argument("polyfit_weighted: rank-deficient design (too few distinct x)");
  out.coeffs = linalg::cholesky_solve_factored(chol, xty);
  for (std::size_t k = 0; k < m; ++k) {
    double fit = 0.0, pa = 1.0;
    for (std::size_t a = 0; a < np; ++a) {
      fit += out.coeffs[a] * pa;
      pa *= x[k];
    }
    const double r = (y[k] - fit) / sigma[k];
    out.chi2 += r * r;
  }
  const double dof = m > np ? static_cast<double>(m - np) : 1.0;
  out.chi2_reduced = out.chi2 / dof;
  out.covariance = linalg::spd_inverse(xtx);
  const double scale = std::max(1.0, out.chi2_reduced);
  for (std::size_t a = 0; a < np; ++a)
    for (std::size_t b = 0; b < np; ++b) out.covariance(a, b) *= scale;
  return out;
}

}  // namespace qbayes
