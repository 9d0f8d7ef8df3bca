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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbayes/errors.hpp"
#include "qbayes/linalg.hpp"
#include "qbayes/model.hpp"
#include "qbayes/parallel.hpp"
#include "qbayes/rng.hpp"
#include "qbayes/simulator.hpp"

// ============================================================================
// Bayesian estimation engine
// ============================================================================
// Uniform constrained prior over an axis-aligned box, binomial log-likelihood,
// and flat-weight Monte Carlo integration of the posterior (normalization,
// mean, covariance, marginal histograms).
//
// At 16384 shots the posterior occupies a tiny fraction of any generous prior
// box, so estimate_spam / estimate_full first locate the likelihood mode
// (uniform scan + multi-start Fisher-scoring iterations, all deterministic)
// and then run the flat-weight integration on a sub-box sized per axis from
// the profile likelihood: the interval where the profile stays within
// refine_sigma^2/2 of the peak. Profile intervals track ridges (z0-piz is
// only constrained through its product), one-sided boundary decays, and
// constraint corners. Since the prior is uniform, restricting the
// integration domain to where the posterior mass lives only introduces a
// truncation error of order exp(-refine_sigma^2/2). Refinement can be
// disabled through EstimateConfig.
//
// Every random draw is a pure function of (seed, purpose, sample index) and
// reductions merge fixed-size chunks in index order, so results are bitwise
// reproducible for any worker count.

namespace qbayes {

// ----------------------------------------------------------------------------
// Prior box
// ----------------------------------------------------------------------------

struct AxisSpec {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
};

/// Which physicality constraint set applies on top of the axis bounds.
enum class ParamModel { Generic, Spam5, Full7 };

inline const std::array<const char*, 7>& canonical_param_names() {
  static const std::array<const char*, 7> names = {"x0", "y0", "z0", "pi0", "piz", "theta", "eps"};
  return names;
}

struct PriorBox {
  std::vector<AxisSpec> axes;
  ParamModel model = ParamModel::Generic;

  std::size_t dim() const { return axes.size(); }

  int axis_index(const std::string& name) const {
    for (std::size_t i = 0; i < axes.size(); ++i)
      if (axes[i].name == name) return static_cast<int>(i);
    return -1;
  }

  /// Physicality predicate of the model (bounds are handled by the sampler).
  bool feasible(const double* p) const {
    switch (model) {
      case ParamModel::Generic: return true;
      case ParamModel::Full7: {
        const double theta = p[5], eps = p[6];
        if (!(std::fabs(theta) < 1.5707963267948966 && eps >= 0.0 && eps < 1.0)) return false;
        [[fallthrough]];
      }
      case ParamModel::Spam5:
      default: {
        const double n2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if (n2 > 1.0) return false;
        const double pi0 = p[3], piz = p[4];
        const double eps1 = pi0 - piz;          // p(0 | state 1)
        const double eps0c = pi0 + piz;         // 1 - eps0
        return eps1 >= 0.0 && eps1 <= 1.0 && eps0c >= 0.0 && eps0c <= 1.0;
      }
    }
  }

  void validate() const {
    if (axes.empty()) throw std::invalid_argument("PriorBox: no axes");
    for (const auto& a : axes) {
      if (!(a.lo <= a.hi)) throw std::invalid_argument("PriorBox: lo > hi on axis " + a.name);
      if (!std::isfinite(a.lo) || !std::isfinite(a.hi))
        throw std::invalid_argument("PriorBox: non-finite bound on axis " + a.name);
    }
    const std::size_t need = model == ParamModel::Spam5 ? 5 : (model == ParamModel::Full7 ? 7 : 0);
    if (need != 0) {
      if (axes.size() != need) throw std::invalid_argument("PriorBox: wrong dimension for model");
      for (std::size_t i = 0; i < need; ++i)
        if (axes[i].name != canonical_param_names()[i])
          throw std::invalid_argument("PriorBox: axis order must be {x0,y0,z0,pi0,piz[,theta,eps]}");
    }
  }

  /// Default 5-parameter box: brackets everything seen on the studied devices.
  static PriorBox spam_default() {
    PriorBox b;
    b.model = ParamModel::Spam5;
    b.axes = {{"x0", -0.2, 0.2}, {"y0", -0.2, 0.2}, {"z0", 0.8, 1.0},
              {"pi0", 0.4, 0.6}, {"piz", 0.35, 0.5}};
    return b;
  }

  /// Default 7-parameter box (adds theta and eps).
  static PriorBox full_default() {
    PriorBox b = spam_default();
    b.model = ParamModel::Full7;
    b.axes.push_back({"theta", -0.1, 0.1});
    b.axes.push_back({"eps", 0.0, 0.01});
    return b;
  }
};

// ----------------------------------------------------------------------------
// Posterior summary
// ----------------------------------------------------------------------------

struct Histogram {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> mass;

  double bin_center(std::size_t i) const {
    const double w = (hi - lo) / static_cast<double>(mass.size());
    return lo + (static_cast<double>(i) + 0.5) * w;
  }
};

struct PosteriorSummary {
  std::vector<std::string> names;  // primary parameters, then derived ones
  std::size_t n_primary = 0;
  std::vector<double> mean;
  std::vector<double> std_err;  // sqrt of the posterior variance per entry
  linalg::Matrix covariance;    // n_primary x n_primary
  std::vector<Histogram> marginals;
  double ess = 0.0;  // Kish effective sample size (diagnostic)
  std::size_t n_samples = 0;
  PriorBox sampled_box;  // the domain the integration actually ran on

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  double mean_of(const std::string& name) const { return mean.at(index_of(name)); }
  double sigma_of(const std::string& name) const { return std_err.at(index_of(name)); }
};

// ----------------------------------------------------------------------------
// Prior sampling
// ----------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kSaltProbe = 0x70B1;
inline constexpr std::uint64_t kSaltScan = 0x5CA9;
inline constexpr std::uint64_t kSaltIntegrate = 0x169A;
inline constexpr int kMaxSampleAttempts = 200000;
inline constexpr std::size_t kChunkSize = 65536;

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix64(seed ^ (salt * 0xA24BAED4963EE407ull));
}

inline bool draw_in_box(const PriorBox& box, CounterRng& rng, double* out) {
  for (std::size_t a = 0; a < box.axes.size(); ++a)
    out[a] = box.axes[a].lo + (box.axes[a].hi - box.axes[a].lo) * rng.next_double();
  return box.feasible(out);
}

/// Rejection sample for one global index; deterministic in (seed, salt, index).
inline void sample_point_at(const PriorBox& box, std::uint64_t seed, std::uint64_t salt,
                            std::uint64_t index, double* out) {
  CounterRng rng(derive_seed(seed, salt), index);
  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt)
    if (draw_in_box(box, rng, out)) return;
  throw EstimationError("sample_prior: constraint acceptance rate is degenerate");
}

/// Cheap up-front acceptance probe; rejects boxes whose feasible fraction is
/// below 1e-4.
inline void probe_acceptance(const PriorBox& box, std::uint64_t seed) {
  constexpr int kProbeDraws = 50000;
  CounterRng rng(derive_seed(seed, kSaltProbe), 0);
  std::vector<double> x(box.dim());
  int accepted = 0;
  for (int i = 0; i < kProbeDraws; ++i)
    if (draw_in_box(box, rng, x.data())) ++accepted;
  if (accepted < 5)
    throw EstimationError("sample_prior: acceptance rate below 1e-4 (degenerate prior box)");
}

}  // namespace detail

/// Uniform samples over the constrained box, row-major n x dim.
inline std::vector<double> sample_prior(const PriorBox& box, std::size_t n_samples,
                                        std::uint64_t seed) {
  box.validate();
  if (n_samples < 1) throw std::invalid_argument("sample_prior: n_samples must be >= 1");
  detail::probe_acceptance(box, seed);
  const std::size_t d = box.dim();
  std::vector<double> out(n_samples * d);
  for (std::size_t i = 0; i < n_samples; ++i)
    detail::sample_point_at(box, seed, detail::kSaltScan, i, out.data() + i * d);
  return out;
}

// ----------------------------------------------------------------------------
// Likelihood and weights
// ----------------------------------------------------------------------------

namespace detail {

inline double log_likelihood_terms(const double* probs, const double* s, const double* n,
                                   std::size_t m) {
  double L = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double p = probs[k];
    if (p <= 0.0) {
      if (s[k] > 0.0) return -std::numeric_limits<double>::infinity();
      continue;  // s = 0, p = 0 contributes n*ln(1) = 0
    }
    if (p >= 1.0) {
      if (s[k] < n[k]) return -std::numeric_limits<double>::infinity();
      continue;
    }
    L += s[k] * std::log(p) + (n[k] - s[k]) * std::log1p(-p);
  }
  return L;
}

}  // namespace detail

/// Binomial log-likelihood sum_k [s_k ln p_k + (n_k - s_k) ln(1 - p_k)], with
/// a -inf sentinel when an observation is impossible under the probabilities.
inline double log_likelihood(const CountRecord& counts, std::span<const double> probs) {
  if (counts.entries.size() != probs.size())
    throw std::invalid_argument("log_likelihood: counts/probs length mismatch");
  double L = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double p = probs[k];
    const double s = static_cast<double>(counts.entries[k].zeros);
    const double n = static_cast<double>(counts.entries[k].shots);
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("log_likelihood: p outside [0, 1]");
    if (p <= 0.0) {
      if (s > 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    if (p >= 1.0) {
      if (s < n) return -std::numeric_limits<double>::infinity();
      continue;
    }
    L += s * std::log(p) + (n - s) * std::log1p(-p);
  }
  return L;
}

/// Fills probs_out (one entry per count record sequence) for a parameter
/// vector; the adapter between a sample row and the model.
using ProbModelFn = std::function<void(const double* params, double* probs_out)>;

/// Normalized posterior weights w_i proportional to exp(L_i - max L), over
/// row-major samples. Throws EstimationError when every sample is impossible.
inline std::vector<double> posterior_weights(std::span<const double> samples, std::size_t dim,
                                             const CountRecord& counts, const ProbModelFn& model) {
  if (dim == 0 || samples.size() % dim != 0)
    throw std::invalid_argument("posterior_weights: samples size not a multiple of dim");
  const std::size_t n = samples.size() / dim;
  const std::size_t m = counts.entries.size();
  std::vector<double> s(m), shots(m), probs(m);
  for (std::size_t k = 0; k < m; ++k) {
    s[k] = static_cast<double>(counts.entries[k].zeros);
    shots[k] = static_cast<double>(counts.entries[k].shots);
  }
  std::vector<double> logl(n, 0.0);
  double lmax = m == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n && m > 0; ++i) {
    model(samples.data() + i * dim, probs.data());
    logl[i] = detail::log_likelihood_terms(probs.data(), s.data(), shots.data(), m);
    lmax = std::max(lmax, logl[i]);
  }
  if (!std::isfinite(lmax))
    throw EstimationError("posterior_weights: all samples have zero likelihood");
  std::vector<double> w(n);
  linalg::NeumaierSum total;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(logl[i] - lmax);
    total.add(w[i]);
  }
  const double wsum = total.value();
  if (!(wsum > 0.0)) throw EstimationError("posterior_weights: zero total weight");
  for (auto& v : w) v /= wsum;
  return w;
}

inline ProbModelFn spam_model_fn(const SequenceProbEvaluator& eval) {
  return [&eval](const double* p, double* out) { eval.eval_spam(p, out); };
}

inline ProbModelFn full_model_fn(const SequenceProbEvaluator& eval) {
  return [&eval](const double* p, double* out) { eval.eval_full(p, out); };
}

// ----------------------------------------------------------------------------
// Weighted summaries
// ----------------------------------------------------------------------------

/// Weighted mean/covariance/marginals over explicit samples with normalized
/// weights. Histogram ranges come from the box axes.
inline PosteriorSummary summarize(std::span<const double> samples, std::size_t dim,
                                  std::span<const double> weights, int histogram_bins,
                                  const PriorBox& box) {
  if (dim == 0 || samples.size() % dim != 0 || samples.size() / dim != weights.size())
    throw std::invalid_argument("summarize: samples/weights size mismatch");
  if (box.dim() != dim) throw std::invalid_argument("summarize: box dimension mismatch");
  if (histogram_bins < 1) throw std::invalid_argument("summarize: bins must be >= 1");
  const std::size_t n = weights.size();

  PosteriorSummary out;
  out.n_primary = dim;
  out.n_samples = n;
  out.sampled_box = box;
  out.covariance = linalg::Matrix(dim, dim);
  std::vector<double> center(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    out.names.push_back(box.axes[a].name);
    center[a] = 0.5 * (box.axes[a].lo + box.axes[a].hi);
  }

  std::vector<linalg::NeumaierSum> wx(dim);
  std::vector<linalg::NeumaierSum> wxx(dim * dim);
  linalg::NeumaierSum w2;
  out.marginals.resize(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    out.marginals[a].name = box.axes[a].name;
    out.marginals[a].lo = box.axes[a].lo;
    out.marginals[a].hi = box.axes[a].hi;
    out.marginals[a].mass.assign(histogram_bins, 0.0);
  }
  std::vector<double> xc(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i];
    const double* x = samples.data() + i * dim;
    w2.add(w * w);
    for (std::size_t a = 0; a < dim; ++a) {
      xc[a] = x[a] - center[a];
      wx[a].add(w * xc[a]);
      auto& h = out.marginals[a];
      const double width = h.hi - h.lo;
      std::size_t bin = 0;
      if (width > 0.0) {
        const double t = (x[a] - h.lo) / width * histogram_bins;
        bin = t <= 0.0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(t), histogram_bins - 1);
      }
      h.mass[bin] += w;
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = a; b < dim; ++b) wxx[a * dim + b].add(w * xc[a] * xc[b]);
  }
  out.mean.resize(dim);
  out.std_err.resize(dim);
  std::vector<double> m(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    m[a] = wx[a].value();
    out.mean[a] = std::clamp(m[a] + center[a], box.axes[a].lo, box.axes[a].hi);
  }
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = a; b < dim; ++b) {
      const double c = wxx[a * dim + b].value() - m[a] * m[b];
      out.covariance(a, b) = c;
      out.covariance(b, a) = c;
    }
  for (std::size_t a = 0; a < dim; ++a) {
    out.covariance(a, a) = std::max(out.covariance(a, a), 0.0);
    out.std_err[a] = std::sqrt(out.covariance(a, a));
  }
  const double w2v = w2.value();
  out.ess = w2v > 0.0 ? 1.0 / w2v : 0.0;
  return out;
}

// ----------------------------------------------------------------------------
// Estimation configuration
// ----------------------------------------------------------------------------

inline constexpr std::size_t kMaxSamplesPreset = 80'000'000;

struct EstimateConfig {
  std::uint64_t seed = 0;
  std::size_t n_samples = 5'000'000;
  int histogram_bins = 64;
  int threads = 0;  // 0 = hardware concurrency
  bool refine = true;
  std::size_t scan_samples = 200'000;  // mode-location budget (outside n_samples)
  double refine_sigma = 6.0;           // half-width of the refined box, in Laplace sigmas
  std::optional<PriorBox> box;         // overrides the model default
};

// ----------------------------------------------------------------------------
// Mode location (deterministic scan + Fisher scoring)
// ----------------------------------------------------------------------------

namespace detail {

struct LikelihoodProblem {
  const SequenceProbEvaluator* eval;
  ParamModel kind;
  std::vector<double> s, n;

  std::size_t n_seq() const { return s.size(); }
  std::size_t dim() const { return kind == ParamModel::Full7 ? 7 : 5; }

  void probs(const double* p, double* out) const {
    if (kind == ParamModel::Full7)
      eval->eval_full(p, out);
    else
      eval->eval_spam(p, out);
  }
  double logl(const double* p, double* scratch) const {
    probs(p, scratch);
    return log_likelihood_terms(scratch, s.data(), n.data(), n_seq());
  }
};

inline LikelihoodProblem make_problem(const SequenceProbEvaluator& eval, ParamModel kind,
                                      const CountRecord& counts) {
  LikelihoodProblem prob;
  prob.eval = &eval;
  prob.kind = kind;
  prob.s.reserve(counts.entries.size());
  prob.n.reserve(counts.entries.size());
  for (const auto& e : counts.entries) {
    prob.s.push_back(static_cast<double>(e.zeros));
    prob.n.push_back(static_cast<double>(e.shots));
  }
  return prob;
}

struct ModeFit {
  std::vector<double> params;
  double logl = -std::numeric_limits<double>::infinity();
  linalg::Matrix fisher;  // J^T W J at the mode
  bool converged = false;
};

/// Fisher-scoring ascent of the binomial log-likelihood, projected into the
/// box and backtracked to stay feasible.
inline ModeFit fisher_scoring(const LikelihoodProblem& prob, const PriorBox& box,
                              std::vector<double> start, int max_iter = 100) {
  const std::size_t d = prob.dim();
  const std::size_t m = prob.n_seq();
  std::vector<double> p0(m), pp(m), pm(m), scratch(m);
  std::vector<double> grad(d), step(d), cand(d);
  linalg::Matrix jac(m, d);

  ModeFit fit;
  fit.params = start;
  fit.logl = prob.logl(start.data(), scratch.data());
  if (!std::isfinite(fit.logl)) return fit;

  double mu = 1e-6;
  for (int iter = 0; iter < max_iter; ++iter) {
    prob.probs(fit.params.data(), p0.data());
    // Difference-quotient Jacobian of the sequence probabilities, with the
    // perturbed points clamped into the box (one-sided at the faces).
    for (std::size_t a = 0; a < d; ++a) {
      const double width = box.axes[a].hi - box.axes[a].lo;
      if (width <= 0.0) {
        for (std::size_t k = 0; k < m; ++k) jac(k, a) = 0.0;
        continue;
      }
      const double h = std::max(1e-9, 1e-7 * width);
      std::vector<double>& x = fit.params;
      const double saved = x[a];
      const double xp = std::min(saved + h, box.axes[a].hi);
      const double xm = std::max(saved - h, box.axes[a].lo);
      x[a] = xp;
      prob.probs(x.data(), pp.data());
      x[a] = xm;
      prob.probs(x.data(), pm.data());
      x[a] = saved;
      for (std::size_t k = 0; k < m; ++k) jac(k, a) = (pp[k] - pm[k]) / (xp - xm);
    }
    // Fisher matrix and exact score: W = n / (p(1-p)), grad = J^T W (f - p).
    linalg::Matrix fisher(d, d);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const double pk = std::clamp(p0[k], 1e-9, 1.0 - 1e-9);
      const double wk = prob.n[k] / (pk * (1.0 - pk));
      const double rk = prob.s[k] / prob.n[k] - pk;
      for (std::size_t a = 0; a < d; ++a) {
        grad[a] += jac(k, a) * wk * rk;
        for (std::size_t b = a; b < d; ++b) fisher(a, b) += jac(k, a) * wk * jac(k, b);
      }
    }
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < a; ++b) fisher(a, b) = fisher(b, a);
    fit.fisher = fisher;

    bool improved = false;
    for (int damp = 0; damp < 12 && !improved; ++damp) {
      linalg::Matrix damped = fisher;
      for (std::size_t a = 0; a < d; ++a)
        damped(a, a) += mu * (fisher(a, a) > 0.0 ? fisher(a, a) : 1.0) + 1e-300;
      linalg::Matrix chol = damped;
      if (!linalg::cholesky_factor(chol)) {
        mu *= 10.0;
        continue;
      }
      step = linalg::cholesky_solve_factored(chol, grad);
      // Project into the box, then backtrack until feasible and improving.
      double scale = 1.0;
      for (int bt = 0; bt < 30; ++bt, scale *= 0.5) {
        for (std::size_t a = 0; a < d; ++a)
          cand[a] = std::clamp(fit.params[a] + scale * step[a], box.axes[a].lo, box.axes[a].hi);
        if (!box.feasible(cand.data())) continue;
        const double lc = prob.logl(cand.data(), scratch.data());
        if (lc > fit.logl) {
          const double gain = lc - fit.logl;
          fit.params = cand;
          fit.logl = lc;
          improved = true;
          mu = std::max(mu / 3.0, 1e-12);
          if (gain < 1e-10 * (1.0 + std::fabs(fit.logl))) {
            fit.converged = true;
            return fit;
          }
          break;
        }
      }
      if (!improved) mu *= 10.0;
    }
    if (!improved) {
      fit.converged = true;  // no ascent direction left at this resolution
      return fit;
    }
  }
  return fit;
}

struct ScanBest {
  double logl = -std::numeric_limits<double>::infinity();
  std::uint64_t index = 0;
  std::vector<double> params;
};

/// Deterministic uniform scan; returns the top-k samples by likelihood
/// (ties broken by index), independent of worker count.
inline std::vector<ScanBest> scan_prior(const LikelihoodProblem& prob, const PriorBox& box,
                                        std::size_t n_scan, std::uint64_t seed, int threads,
                                        std::size_t keep) {
  struct Partial {
    std::vector<ScanBest> best;
  };
  const std::size_t d = prob.dim();
  auto partials = parallel_chunked_map<Partial>(
      n_scan, kChunkSize, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        Partial part;
        std::vector<double> x(d), scratch(prob.n_seq());
        for (std::size_t i = begin; i < end; ++i) {
          sample_point_at(box, seed, kSaltScan, i, x.data());
          const double L = prob.logl(x.data(), scratch.data());
          if (!std::isfinite(L)) continue;
          if (part.best.size() < keep || L > part.best.back().logl) {
            ScanBest sb{L, i, x};
            auto pos = std::upper_bound(part.best.begin(), part.best.end(), sb,
                                        [](const ScanBest& a, const ScanBest& b) {
                                          return a.logl > b.logl ||
                                                 (a.logl == b.logl && a.index < b.index);
                                        });
            part.best.insert(pos, std::move(sb));
            if (part.best.size() > keep) part.best.pop_back();
          }
        }
        return part;
      });
  std::vector<ScanBest> all;
  for (const auto& part : partials)
    all.insert(all.end(), part.best.begin(), part.best.end());
  std::sort(all.begin(), all.end(), [](const ScanBest& a, const ScanBest& b) {
    return a.logl > b.logl || (a.logl == b.logl && a.index < b.index);
  });
  if (all.size() > keep) all.resize(keep);
  return all;
}

/// Clamps a point with one fixed axis back into the box and constraint set;
/// returns false when no nearby feasible point exists.
inline bool repair_feasible(const PriorBox& box, std::size_t fixed_axis, double* p) {
  const std::size_t d = box.dim();
  for (std::size_t a = 0; a < d; ++a)
    if (a != fixed_axis) p[a] = std::clamp(p[a], box.axes[a].lo, box.axes[a].hi);
  if (box.model != ParamModel::Generic) {
    // POVM feasibility: piz <= min(pi0, 1 - pi0) given both are nonnegative
    // on the default boxes; adjust whichever is not fixed. The bounds can be
    // contradictory, in which case the final feasibility check rejects.
    if (fixed_axis != 4) {
      const double cap = std::min({box.axes[4].hi, p[3], 1.0 - p[3]});
      p[4] = std::max(box.axes[4].lo, std::min(p[4], cap));
    } else {
      const double floor = std::max(box.axes[3].lo, p[4]);
      const double cap = std::min(box.axes[3].hi, 1.0 - p[4]);
      p[3] = std::max(floor, std::min(p[3], cap));
    }
    // Bloch-ball feasibility: shrink the free preparation components.
    double fixed2 = 0.0;
    double free2 = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      (a == fixed_axis ? fixed2 : free2) += p[a] * p[a];
    if (fixed2 + free2 > 1.0) {
      if (fixed2 >= 1.0 || free2 == 0.0) return false;
      const double scale = std::sqrt((1.0 - fixed2) / free2) * (1.0 - 1e-12);
      for (std::size_t a = 0; a < 3; ++a)
        if (a != fixed_axis) p[a] = std::clamp(p[a] * scale, box.axes[a].lo, box.axes[a].hi);
    }
  }
  return box.feasible(p);
}

/// Profile log-likelihood along one axis: the likelihood maximized over every
/// other parameter with axis a pinned at v. Returns -inf when no feasible
/// start exists at v.
inline double profile_logl(const LikelihoodProblem& prob, const PriorBox& box, std::size_t axis,
                           double v, const std::vector<double>& mode,
                           std::vector<double>& warm) {
  PriorBox pinned = box;
  pinned.axes[axis].lo = v;
  pinned.axes[axis].hi = v;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  const std::vector<double>* origins[2] = {&warm, &mode};
  for (const std::vector<double>* origin : origins) {
    std::vector<double> start = *origin;
    start[axis] = v;
    if (!repair_feasible(box, axis, start.data())) continue;
    start[axis] = v;
    const ModeFit fit = fisher_scoring(prob, pinned, start, 40);
    if (fit.logl > best) {
      best = fit.logl;
      best_params = fit.params;
    }
  }
  if (!best_params.empty()) warm = std::move(best_params);
  return best;
}

/// Locates the likelihood mode, then sizes the integration box per axis from
/// the profile likelihood: the refined interval is where the profile stays
/// within refine_sigma^2/2 (+ margin) of the peak. Grid evaluation catches
/// ridge-length spans; bisection sharpens the boundary to ~1e-4 of the axis.
inline PriorBox refine_box(const LikelihoodProblem& prob, const PriorBox& box,
                           const EstimateConfig& cfg) {
  const std::size_t d = prob.dim();
  std::vector<ScanBest> starts =
      scan_prior(prob, box, std::max<std::size_t>(cfg.scan_samples, 1), cfg.seed, cfg.threads, 8);
  if (starts.empty())
    throw EstimationError("estimate: no feasible prior sample has nonzero likelihood");

  std::vector<std::vector<double>> candidates;
  for (const auto& s : starts) candidates.push_back(s.params);
  if (prob.kind == ParamModel::Full7) {
    // The likelihood is oscillatory in theta for long sequences; cover the
    // theta axis with a grid of extra starts anchored at the best scan point.
    const AxisSpec& th = box.axes[5];
    const int kGrid = 17;
    for (int g = 0; g < kGrid; ++g) {
      std::vector<double> p = starts.front().params;
      p[5] = th.lo + (th.hi - th.lo) * (g + 0.5) / kGrid;
      if (box.feasible(p.data())) candidates.push_back(std::move(p));
    }
  }

  ModeFit best;
  for (const auto& c : candidates) {
    ModeFit fit = fisher_scoring(prob, box, c);
    if (fit.logl > best.logl) best = std::move(fit);
  }
  if (!std::isfinite(best.logl))
    throw EstimationError("estimate: likelihood mode search failed");

  const double cut = best.logl - (0.5 * cfg.refine_sigma * cfg.refine_sigma + 2.0);
  constexpr int kGridPoints = 40;
  constexpr int kBisections = 12;

  PriorBox refined = box;
  for (std::size_t a = 0; a < d; ++a) {
    const double lo = box.axes[a].lo, hi = box.axes[a].hi;
    const double width = hi - lo;
    if (width <= 0.0) continue;
    const double step = width / kGridPoints;

    std::vector<double> warm_up = best.params, warm_down = best.params;
    double acc_lo = best.params[a], acc_hi = best.params[a];
    // Walk the grid outward from the mode; the outermost accepted point on
    // each side brackets the boundary within one grid step.
    for (int g = 1;; ++g) {
      const double v = best.params[a] + g * step;
      if (v > hi + 1e-15) break;
      const double vv = std::min(v, hi);
      if (profile_logl(prob, box, a, vv, best.params, warm_up) >= cut) acc_hi = vv;
    }
    for (int g = 1;; ++g) {
      const double v = best.params[a] - g * step;
      if (v < lo - 1e-15) break;
      const double vv = std::max(v, lo);
      if (profile_logl(prob, box, a, vv, best.params, warm_down) >= cut) acc_lo = vv;
    }
    // Sharpen each boundary inside its one-step bracket.
    if (acc_hi < hi) {
      double good = acc_hi, bad = std::min(acc_hi + step, hi);
      for (int it = 0; it < kBisections; ++it) {
        const double mid = 0.5 * (good + bad);
        if (profile_logl(prob, box, a, mid, best.params, warm_up) >= cut)
          good = mid;
        else
          bad = mid;
      }
      acc_hi = good;
    }
    if (acc_lo > lo) {
      double good = acc_lo, bad = std::max(acc_lo - step, lo);
      for (int it = 0; it < kBisections; ++it) {
        const double mid = 0.5 * (good + bad);
        if (profile_logl(prob, box, a, mid, best.params, warm_down) >= cut)
          good = mid;
        else
          bad = mid;
      }
      acc_lo = good;
    }
    // A small safety margin on each side.
    const double margin = 0.02 * (acc_hi - acc_lo) + 1e-9 * width;
    refined.axes[a].lo = std::max(lo, acc_lo - margin);
    refined.axes[a].hi = std::min(hi, acc_hi + margin);
  }
  return refined;
}

// ----------------------------------------------------------------------------
// Streaming flat-weight integration
// ----------------------------------------------------------------------------

struct StreamPartial {
  double lmax = -std::numeric_limits<double>::infinity();
  double wsum = 0.0;
  double w2sum = 0.0;
  std::vector<double> wx;    // first moments (extended columns)
  std::vector<double> wxx;   // second moments, primary block, packed upper
  std::vector<double> wd2;   // second moments of the derived columns
  std::vector<double> hist;  // d_ext * bins

  void rescale(double f) {
    wsum *= f;
    w2sum *= f * f;
    for (auto& v : wx) v *= f;
    for (auto& v : wxx) v *= f;
    for (auto& v : wd2) v *= f;
    for (auto& v : hist) v *= f;
  }

  void merge(StreamPartial&& o) {
    if (!std::isfinite(o.lmax)) return;
    if (!std::isfinite(lmax)) {
      *this = std::move(o);
      return;
    }
    const double m = std::max(lmax, o.lmax);
    rescale(std::exp(lmax - m));
    o.rescale(std::exp(o.lmax - m));
    lmax = m;
    wsum += o.wsum;
    w2sum += o.w2sum;
    for (std::size_t i = 0; i < wx.size(); ++i) wx[i] += o.wx[i];
    for (std::size_t i = 0; i < wxx.size(); ++i) wxx[i] += o.wxx[i];
    for (std::size_t i = 0; i < wd2.size(); ++i) wd2[i] += o.wd2[i];
    for (std::size_t i = 0; i < hist.size(); ++i) hist[i] += o.hist[i];
  }
};

struct ExtendedAxes {
  std::vector<std::string> names;  // primary + derived
  std::vector<double> lo, hi;      // histogram ranges
  std::vector<double> center;      // moment shift
  std::size_t n_primary = 0;
};

/// Histogram/moment layout: primary axes over the sampled box, plus derived
/// polar preparation coordinates (rho0, phi0) for the spam/full models.
inline ExtendedAxes make_extended_axes(const PriorBox& sampled, ParamModel kind) {
  ExtendedAxes ext;
  ext.n_primary = sampled.dim();
  for (const auto& a : sampled.axes) {
    ext.names.push_back(a.name);
    ext.lo.push_back(a.lo);
    ext.hi.push_back(a.hi);
    ext.center.push_back(0.5 * (a.lo + a.hi));
  }
  if (kind == ParamModel::Spam5 || kind == ParamModel::Full7) {
    const double xm = std::max(std::fabs(sampled.axes[0].lo), std::fabs(sampled.axes[0].hi));
    const double ym = std::max(std::fabs(sampled.axes[1].lo), std::fabs(sampled.axes[1].hi));
    ext.names.push_back("rho0");
    ext.lo.push_back(0.0);
    ext.hi.push_back(std::sqrt(xm * xm + ym * ym));
    ext.center.push_back(0.0);
    ext.names.push_back("phi0");
    ext.lo.push_back(-3.141592653589793);
    ext.hi.push_back(3.141592653589793);
    ext.center.push_back(0.0);
  }
  return ext;
}

inline PosteriorSummary integrate_posterior(const LikelihoodProblem& prob,
                                            const PriorBox& sampled_box,
                                            const EstimateConfig& cfg) {
  const std::size_t d = prob.dim();
  const ExtendedAxes ext = make_extended_axes(sampled_box, prob.kind);
  const std::size_t de = ext.names.size();
  const std::size_t bins = static_cast<std::size_t>(cfg.histogram_bins);
  const std::size_t npack = d * (d + 1) / 2;
  const std::size_t n = std::clamp<std::size_t>(cfg.n_samples, 1, kMaxSamplesPreset);

  auto partials = parallel_chunked_map<StreamPartial>(
      n, kChunkSize, cfg.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        const std::size_t cn = end - begin;
        std::vector<double> xs(cn * d), logl(cn), scratch(prob.n_seq());
        StreamPartial part;
        part.wx.assign(de, 0.0);
        part.wxx.assign(npack, 0.0);
        part.wd2.assign(de - d, 0.0);
        part.hist.assign(de * bins, 0.0);
        for (std::size_t i = 0; i < cn; ++i) {
          double* x = xs.data() + i * d;
          sample_point_at(sampled_box, cfg.seed, kSaltIntegrate, begin + i, x);
          logl[i] = prob.logl(x, scratch.data());
          if (logl[i] > part.lmax) part.lmax = logl[i];
        }
        if (!std::isfinite(part.lmax)) return part;
        std::vector<double> xe(de);
        for (std::size_t i = 0; i < cn; ++i) {
          if (!std::isfinite(logl[i])) continue;
          const double w = std::exp(logl[i] - part.lmax);
          const double* x = xs.data() + i * d;
          for (std::size_t a = 0; a < d; ++a) xe[a] = x[a];
          if (de > d) {
            xe[d] = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            xe[d + 1] = std::atan2(x[1], x[0]);
          }
          part.wsum += w;
          part.w2sum += w * w;
          std::size_t pk = 0;
          for (std::size_t a = 0; a < d; ++a) {
            const double xa = xe[a] - ext.center[a];
            part.wx[a] += w * xa;
            for (std::size_t b = a; b < d; ++b, ++pk)
              part.wxx[pk] += w * xa * (xe[b] - ext.center[b]);
          }
          for (std::size_t a = 0; a < de; ++a) {
            if (a >= d) {
              const double xa = xe[a] - ext.center[a];
              part.wx[a] += w * xa;
              part.wd2[a - d] += w * xa * xa;
            }
            const double width = ext.hi[a] - ext.lo[a];
            std::size_t bin = 0;
            if (width > 0.0) {
              const double t = (xe[a] - ext.lo[a]) / width * static_cast<double>(bins);
              bin = t <= 0.0 ? 0 : std::min<std::size_t>(static_cast<std::size_t>(t), bins - 1);
            }
            part.hist[a * bins + bin] += w;
          }
        }
        return part;
      });

  StreamPartial total;
  for (auto& p : partials) total.merge(std::move(p));
  if (!std::isfinite(total.lmax) || !(total.wsum > 0.0))
    throw EstimationError("estimate: posterior mass is zero on the sampled box");

  // Derived second moments are tracked through the histogram pass only for
  // the diagonal; recover derived variances from a dedicated accumulation.
  PosteriorSummary out;
  out.names = ext.names;
  out.n_primary = d;
  out.n_samples = n;
  out.sampled_box = sampled_box;
  out.ess = total.wsum * total.wsum / total.w2sum;
  out.mean.assign(de, 0.0);
  out.std_err.assign(de, 0.0);
  out.covariance = linalg::Matrix(d, d);

  std::vector<double> m(de);
  for (std::size_t a = 0; a < de; ++a) m[a] = total.wx[a] / total.wsum;
  for (std::size_t a = 0; a < d; ++a)
    out.mean[a] = std::clamp(m[a] + ext.center[a], sampled_box.axes[a].lo, sampled_box.axes[a].hi);
  for (std::size_t a = d; a < de; ++a) out.mean[a] = m[a] + ext.center[a];

  std::size_t pk = 0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b, ++pk) {
      const double c = total.wxx[pk] / total.wsum - m[a] * m[b];
      out.covariance(a, b) = c;
      out.covariance(b, a) = c;
    }
  for (std::size_t a = 0; a < d; ++a) {
    out.covariance(a, a) = std::max(out.covariance(a, a), 0.0);
    out.std_err[a] = std::sqrt(out.covariance(a, a));
  }
  for (std::size_t a = d; a < de; ++a)
    out.std_err[a] = std::sqrt(std::max(total.wd2[a - d] / total.wsum - m[a] * m[a], 0.0));

  out.marginals.resize(de);
  for (std::size_t a = 0; a < de; ++a) {
    auto& h = out.marginals[a];
    h.name = ext.names[a];
    h.lo = ext.lo[a];
    h.hi = ext.hi[a];
    h.mass.assign(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) h.mass[b] = total.hist[a * bins + b] / total.wsum;
  }
  return out;
}

inline PosteriorSummary estimate_impl(const CountRecord& counts, ParamModel kind,
                                      const EstimateConfig& cfg) {
  counts.validate();
  PriorBox box = cfg.box ? *cfg.box
                         : (kind == ParamModel::Full7 ? PriorBox::full_default()
                                                      : PriorBox::spam_default());
  box.validate();
  if (box.model != kind) throw std::invalid_argument("estimate: box model mismatch");

  std::vector<GateOp> plan;
  plan.reserve(counts.entries.size());
  for (const auto& e : counts.entries) plan.push_back(e.sequence);
  const SequenceProbEvaluator eval(plan);
  const LikelihoodProblem prob = make_problem(eval, kind, counts);

  probe_acceptance(box, cfg.seed);
  const PriorBox sampled = cfg.refine ? refine_box(prob, box, cfg) : box;
  return integrate_posterior(prob, sampled, cfg);
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Public estimators
// ----------------------------------------------------------------------------

/// Posterior over the five SPAM parameters from six-gate-plan counts (any
/// subset of the six base gates is accepted; five suffice for identifiability).
inline PosteriorSummary estimate_spam(const CountRecord& counts, const EstimateConfig& cfg = {}) {
  const auto base = six_gate_plan();
  for (const auto& e : counts.entries) {
    const bool known = std::any_of(base.begin(), base.end(),
                                   [&](const GateOp& g) { return g == e.sequence; });
    if (!known)
      throw std::invalid_argument("estimate_spam: sequence '" + to_string(e.sequence) +
                                  "' is not part of the six-gate plan");
  }
  return detail::estimate_impl(counts, ParamModel::Spam5, cfg);
}

/// Posterior over the seven SPAM + gate-error parameters from an extended
/// gate plan (typically the six base gates plus two long X90 powers).
inline PosteriorSummary estimate_full(const CountRecord& counts, const EstimateConfig& cfg = {}) {
  return detail::estimate_impl(counts, ParamModel::Full7, cfg);
}

}  // namespace qbayes
