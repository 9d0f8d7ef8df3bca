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

// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line with
// the measured numbers; the process exit code is the number of failures.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qbayes/qbayes.hpp"

#include "oracles.hpp"

using namespace qbayes;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

FullParams spam_truth() {
  FullParams t;
  t.spam = {0.05, -0.03, 0.99, 0.505, 0.485};
  return t;
}

std::string fmt(const char* format, ...) {
  va_list args;
  va_start(args, format);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// --- 1. closed-loop SPAM recovery -------------------------------------------

Outcome criterion1() {
  const FullParams truth = spam_truth();
  const double tr[5] = {0.05, -0.03, 0.99, 0.505, 0.485};
  int pass = 0;
  double max_seconds = 0.0;
  for (int t = 0; t < 100; ++t) {
    const CountRecord counts =
        run_experiment(truth, {six_gate_plan(), 16384, 10000 + static_cast<std::uint64_t>(t)});
    EstimateConfig cfg;
    cfg.seed = 20000 + static_cast<std::uint64_t>(t);
    cfg.n_samples = 5'000'000;
    const auto t0 = std::chrono::steady_clock::now();
    const PosteriorSummary s = estimate_spam(counts, cfg);
    max_seconds = std::max(
        max_seconds, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    bool ok = true;
    for (int a = 0; a < 5; ++a)
      ok = ok && std::fabs(s.mean[a] - tr[a]) <= 3.0 * s.std_err[a];
    if (ok) ++pass;
  }
  return {pass >= 95 && max_seconds < 60.0,
          fmt("%d/100 trials with every parameter inside mean +- 3 sigma (need >= 95); "
              "slowest trial %.2f s (need < 60 s)",
              pass, max_seconds)};
}

// --- 2. seven-parameter recovery ---------------------------------------------

Outcome criterion2() {
  FullParams truth = spam_truth();
  truth.theta = 0.01;
  truth.eps = 0.0005;
  int recovered = 0;
  double sigma_theta_max = 0.0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    const CountRecord counts =
        run_experiment(truth, {eight_gate_plan(8), 16384, 40000 + static_cast<std::uint64_t>(t)});
    EstimateConfig cfg;
    cfg.seed = 41000 + static_cast<std::uint64_t>(t);
    cfg.n_samples = 2'000'000;
    const PosteriorSummary s = estimate_full(counts, cfg);
    sigma_theta_max = std::max(sigma_theta_max, s.sigma_of("theta"));
    const bool ok = std::fabs(s.mean_of("theta") - truth.theta) <= 3.0 * s.sigma_of("theta") &&
                    std::fabs(s.mean_of("eps") - truth.eps) <= 3.0 * s.sigma_of("eps");
    if (ok) ++recovered;
  }
  return {recovered >= 9 && sigma_theta_max <= 0.002,
          fmt("theta and eps within 3 sigma in %d/%d trials (need >= 9); "
              "max sigma(theta) %.2e (need <= 2e-3)",
              recovered, trials, sigma_theta_max)};
}

// --- 3. convergence versus gate power ----------------------------------------

Outcome criterion3() {
  FullParams truth = spam_truth();
  truth.theta = 0.01;
  truth.eps = 0.0005;
  double min_ratio = 1e9;
  for (int t = 0; t < 3; ++t) {
    const std::uint64_t seed = 50000 + static_cast<std::uint64_t>(t);
    EstimateConfig cfg;
    cfg.seed = seed + 500;
    cfg.n_samples = 2'000'000;
    const PosteriorSummary s8 =
        estimate_full(run_experiment(truth, {eight_gate_plan(8), 16384, seed}), cfg);
    const PosteriorSummary s1 =
        estimate_full(run_experiment(truth, {eight_gate_plan(1), 16384, seed}), cfg);
    min_ratio = std::min(min_ratio, s1.sigma_of("theta") / s8.sigma_of("theta"));
  }
  return {min_ratio >= 4.0,
          fmt("sigma(theta) shrinks by >= %.2fx from n_rep=1 to n_rep=8 (need >= 4x)", min_ratio)};
}

// --- 4. MLE / Bayes agreement -------------------------------------------------

Outcome criterion4() {
  FullParams truth;
  truth.spam = {0.0, 0.0, 1.0, 0.505, 0.485};
  int agree = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t seed = 60000 + static_cast<std::uint64_t>(t);
    const CountRecord six = run_experiment(truth, {six_gate_plan(), 16384, seed});
    const CountRecord four = run_experiment(truth, {four_gate_plan(), 16384, seed + 100000});
    EstimateConfig cfg;
    cfg.seed = seed + 200000;
    cfg.n_samples = 1'000'000;
    const PosteriorSummary bayes = estimate_spam(six, cfg);
    const PovmMleResult mle = estimate_povm_mle(FourProbEstimates::from_counts(four));
    const double d0 = std::fabs(mle.estimate.pi0 - bayes.mean_of("pi0"));
    const double s0 = std::sqrt(mle.var_pi0 + bayes.sigma_of("pi0") * bayes.sigma_of("pi0"));
    const double dz = std::fabs(mle.estimate.piz - bayes.mean_of("piz"));
    const double sz = std::sqrt(mle.var_piz + bayes.sigma_of("piz") * bayes.sigma_of("piz"));
    if (d0 <= 3.0 * s0 && dz <= 3.0 * sz) ++agree;
  }
  return {agree >= 48,
          fmt("pi0 and piz agree within 3 combined sigma in %d/%d seeds (need >= 48)", agree,
              trials)};
}

// --- 5. ping-pong / Bayes agreement ------------------------------------------

Outcome criterion5() {
  FullParams truth;  // readout-ideal, so the unit-amplitude ansatz is unbiased
  truth.theta = 0.01;
  int pass = 0;
  const int trials = 50;
  std::size_t pingpong_budget = 0, bayes_budget = 0;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t seed = 70000 + static_cast<std::uint64_t>(t);
    const ExperimentPlan bayes_plan{eight_gate_plan(8), 16384, seed};
    bayes_budget = bayes_plan.sequences.size();
    EstimateConfig cfg;
    cfg.seed = seed + 300000;
    cfg.n_samples = 2'000'000;
    const PosteriorSummary s = estimate_full(run_experiment(truth, bayes_plan), cfg);
    const double tb = s.mean_of("theta"), sb = s.sigma_of("theta");

    const PingPongSweepResult sweep = run_pingpong_sweep(truth, {}, seed + 600000);
    pingpong_budget = sweep.sequences_used;
    const double tp = sweep.sweep.theta_at_unit, sp = sweep.sweep.theta_at_unit_err;

    const bool ok = std::fabs(tb - truth.theta) <= 3.0 * sb &&
                    std::fabs(tp - truth.theta) <= 3.0 * sp &&
                    std::fabs(tb - tp) <= 3.0 * std::sqrt(sb * sb + sp * sp);
    if (ok) ++pass;
  }
  return {pass >= 45 && pingpong_budget == 80 && bayes_budget == 8,
          fmt("both estimators within 3 sigma of truth and of each other in %d/%d trials "
              "(need >= 45); sequence budget %zu ping-pong vs %zu Bayes (ratio %.1fx)",
              pass, trials, pingpong_budget, bayes_budget,
              static_cast<double>(pingpong_budget) / static_cast<double>(bayes_budget))};
}

// --- 6. rotation algebra oracle ----------------------------------------------

Outcome criterion6() {
  double worst_product = 0.0;
  for (const double theta : {-0.1, 0.0, 0.03})
    for (const char axis : {'x', 'y'})
      for (const int sign : {+1, -1})
        for (int j = 0; j <= 64; ++j) {
          const auto axname = axis == 'x' ? RotationAxisName::X : RotationAxisName::Y;
          const Mat3 closed = gate_power_matrix(axname, sign, j, theta);
          const Mat3 brute = oracles::repeated_gate_product(axis, sign, j, theta);
          worst_product = std::max(worst_product, oracles::max_abs_diff(closed, brute));
        }

  // Explicit small-power formulas against the general matrices.
  double worst_explicit = 0.0;
  CounterRng rng(606);
  const double theta = 0.0137;
  const double st = std::sin(theta), ct = std::cos(theta);
  for (int rep = 0; rep < 200; ++rep) {
    BlochVector r;
    do {
      r = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    } while (!r.is_physical());
    for (const int sign : {+1, -1}) {
      const double s = sign;
      const BlochVector g1 = apply_gate({sign > 0 ? GateKind::X90Plus : GateKind::X90Minus, 1},
                                        theta, r);
      worst_explicit = std::max({worst_explicit, std::fabs(g1.x - r.x),
                                 std::fabs(g1.y - (-st * r.y - s * ct * r.z)),
                                 std::fabs(g1.z - (s * ct * r.y - st * r.z))});
      const BlochVector g2 = apply_gate({sign > 0 ? GateKind::X90Plus : GateKind::X90Minus, 2},
                                        theta, r);
      const double c2 = std::cos(2 * theta), s2 = std::sin(2 * theta);
      worst_explicit = std::max({worst_explicit, std::fabs(g2.x - r.x),
                                 std::fabs(g2.y - (-c2 * r.y + s * s2 * r.z)),
                                 std::fabs(g2.z - (-s * s2 * r.y - c2 * r.z))});
      const int n = 8;
      const double c4 = std::cos(4 * n * theta), s4 = std::sin(4 * n * theta);
      const BlochVector g3 = apply_gate({sign > 0 ? GateKind::X90Plus : GateKind::X90Minus, 4 * n},
                                        theta, r);
      worst_explicit = std::max({worst_explicit, std::fabs(g3.x - r.x),
                                 std::fabs(g3.y - (c4 * r.y - s * s4 * r.z)),
                                 std::fabs(g3.z - (s * s4 * r.y + c4 * r.z))});
      const double c41 = std::cos((4 * n + 1) * theta), s41 = std::sin((4 * n + 1) * theta);
      const BlochVector g4 = apply_gate(
          {sign > 0 ? GateKind::X90Plus : GateKind::X90Minus, 4 * n + 1}, theta, r);
      worst_explicit = std::max({worst_explicit, std::fabs(g4.x - r.x),
                                 std::fabs(g4.y - (-s41 * r.y - s * c41 * r.z)),
                                 std::fabs(g4.z - (s * c41 * r.y - s41 * r.z))});
    }
  }
  return {worst_product < 1e-10 && worst_explicit < 1e-15,
          fmt("closed-form powers vs repeated products: max |diff| %.2e (need < 1e-10); "
              "explicit formulas vs general matrices: max |diff| %.2e (need < 1e-15)",
              worst_product, worst_explicit)};
}

// --- 7. mitigation round trips -----------------------------------------------

Outcome criterion7() {
  CounterRng rng(707);
  double worst_xy = 0.0, worst_z = 0.0;
  for (int i = 0; i < 300; ++i) {
    BlochVector r;
    do {
      r = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    } while (!r.is_physical());
    const PreRotation pre = prerotation_from_state(r.x, r.y, r.z);
    const BlochVector rot = apply_matrix(prerotation_matrix(pre), r);
    worst_xy = std::max({worst_xy, std::fabs(rot.x), std::fabs(rot.y)});
    worst_z = std::max(worst_z, std::fabs(rot.z - r.norm()));
  }

  double worst_parity = 0.0;
  for (const int n : {3, 7}) {
    const std::vector<std::pair<double, double>> eps(n, {0.01, 0.02});
    const std::vector<double> noisy = ghz_readout_distribution(n, oracles::kPi / 4.0, eps);
    const MitigationResult r = mitigate_counts(noisy, assemble_mitigation_matrix(eps));
    worst_parity = std::max(
        worst_parity, std::fabs(expectation_parity(r.probabilities) - std::cos(oracles::kPi / 4.0)));
  }
  return {worst_xy < 1e-12 && worst_z < 1e-12 && worst_parity < 0.01,
          fmt("pre-rotation residual transverse %.2e (need < 1e-12); mitigated GHZ parity off "
              "ideal by %.2e at N=3,7 (need < 0.01)",
              worst_xy, worst_parity)};
}

// --- 8. estimator sanity -------------------------------------------------------

Outcome criterion8() {
  PriorBox box;
  box.axes = {{"p", 0.0, 1.0}};
  const ProbModelFn model = [](const double* p, double* out) { out[0] = p[0]; };
  const std::size_t n = 100'000;
  const auto samples = sample_prior(box, n, 808);
  const CountRecord counts{{{GateOp::identity(), 100, 37}}};
  const auto w = posterior_weights(samples, 1, counts, model);
  long double total = 0.0;
  for (double wi : w) total += wi;
  const double sum_err = std::fabs(static_cast<double>(total) - 1.0);

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += w[i] * samples[i];
  double mc_se2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    mc_se2 += w[i] * w[i] * (samples[i] - mean) * (samples[i] - mean);
  const double beta_gap = std::fabs(mean - oracles::beta_posterior_mean(37, 100));
  const double beta_tol = 3.0 * std::sqrt(mc_se2);

  const CountRecord rec = run_experiment(spam_truth(), {six_gate_plan(), 16384, 818});
  EstimateConfig cfg;
  cfg.seed = 828;
  cfg.n_samples = 1'000'000;
  const PosteriorSummary s = estimate_spam(rec, cfg);
  const auto ev = linalg::jacobi_eigenvalues(s.covariance);
  const double min_eig = ev.front();

  return {sum_err < 1e-12 && beta_gap < beta_tol && min_eig >= -1e-10,
          fmt("|sum w - 1| = %.2e (need < 1e-12); |mean - Beta mean| = %.2e (need < %.2e); "
              "min covariance eigenvalue %.2e (need >= -1e-10)",
              sum_err, beta_gap, beta_tol, min_eig)};
}

// --- 9. CLI determinism --------------------------------------------------------

#ifndef QBAYES_CLI_PATH
#define QBAYES_CLI_PATH "qbayes"
#endif

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion9() {
  namespace fs = std::filesystem;
  const fs::path base = fs::current_path() / "acceptance_cli_tmp";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path cfg_path = base / "run.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({
  "schema_version": 1,
  "name": "det",
  "mode": "closed-loop",
  "model": "spam",
  "truth": {"x0": 0.05, "y0": -0.03, "z0": 0.99, "pi0": 0.505, "piz": 0.485},
  "shots": 16384,
  "seed": 99,
  "n_samples": 200000
})";
  }
  const std::string cli = QBAYES_CLI_PATH;
  const std::string redirect = " > /dev/null 2>&1";
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"a", " --threads 1"}, {"b", " --threads 4"}, {"c", " --threads 4"}};
  for (const auto& [dir, threads] : runs) {
    const std::string cmd = cli + " --config " + cfg_path.string() + " --out " +
                            (base / dir).string() + threads + redirect;
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    ++files;
    const std::string name = entry.path().filename().string();
    const std::string ra = slurp(entry.path());
    if (ra != slurp(base / "b" / name) || ra != slurp(base / "c" / name))
      return {false, "output file " + name + " differs between runs"};
  }
  fs::remove_all(base);
  return {files > 0,
          fmt("%zu output files byte-identical across repeated runs with 1 and 4 workers", files)};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const std::vector<Entry> criteria = {
      {1, "closed-loop SPAM recovery", criterion1},
      {2, "closed-loop 7-parameter recovery", criterion2},
      {3, "convergence vs gate power", criterion3},
      {4, "MLE-Bayes agreement", criterion4},
      {5, "ping-pong-Bayes agreement", criterion5},
      {6, "rotation algebra oracle", criterion6},
      {7, "mitigation round trips", criterion7},
      {8, "estimator sanity", criterion8},
      {9, "CLI determinism", criterion9},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    const Outcome out = c.fn();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %d  %s: %s  [%.1f s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), dt);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
