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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qbayes/simulator.hpp"

#include "oracles.hpp"

using namespace qbayes;

TEST_CASE("sample_counts endpoints and validation") {
  CHECK(sample_counts(1.0, 16384, 7u) == 16384);
  CHECK(sample_counts(0.0, 16384, 7u) == 0);
  CHECK_THROWS_AS(sample_counts(-0.01, 10, 1u), std::invalid_argument);
  CHECK_THROWS_AS(sample_counts(1.01, 10, 1u), std::invalid_argument);
  CHECK_THROWS_AS(sample_counts(0.5, 0, 1u), std::invalid_argument);
}

TEST_CASE("binomial moments at p = 0.5") {
  const std::uint64_t n = 16384;
  const int trials = 1000;
  double sum = 0.0, sum2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double s = static_cast<double>(sample_counts(0.5, n, static_cast<std::uint64_t>(t)));
    sum += s;
    sum2 += s * s;
  }
  const double mean = sum / trials;
  const double var = sum2 / trials - mean * mean;
  CHECK(std::fabs(mean - 8192.0) < 4.0 * std::sqrt(n * 0.25));
  CHECK(std::fabs(var - n * 0.25) < 0.2 * n * 0.25);
}

TEST_CASE("run_experiment") {
  FullParams ideal;
  ExperimentPlan plan{six_gate_plan(), 16384, 42};

  SUBCASE("ideal truth pins the z sequences and is reproducible") {
    const CountRecord rec = run_experiment(ideal, plan);
    REQUIRE(rec.size() == 6);
    CHECK(rec.entries[0].zeros == 16384);  // f+z = 1
    CHECK(rec.entries[1].zeros == 0);      // f-z = 0
    for (std::size_t k = 2; k < 6; ++k) {
      const double f = static_cast<double>(rec.entries[k].zeros) / 16384.0;
      CHECK(std::fabs(f - 0.5) < 5.0 * std::sqrt(0.25 / 16384.0));
    }
    const CountRecord again = run_experiment(ideal, plan);
    for (std::size_t k = 0; k < 6; ++k) CHECK(again.entries[k].zeros == rec.entries[k].zeros);
  }

  SUBCASE("long sequence frequency tracks the model probability") {
    FullParams truth;
    truth.theta = 0.01;
    ExperimentPlan lp{{GateOp::x90(33)}, 16384, 3};
    const double p = full_sequence_probability(truth, GateOp::x90(33));
    const CountRecord rec = run_experiment(truth, lp);
    const double f = static_cast<double>(rec.entries[0].zeros) / 16384.0;
    CHECK(std::fabs(f - p) < 4.0 * std::sqrt(p * (1.0 - p) / 16384.0));
  }

  SUBCASE("validation") {
    ExperimentPlan empty{{}, 16384, 0};
    CHECK_THROWS_AS(run_experiment(ideal, empty), std::invalid_argument);
    ExperimentPlan zero_shots{six_gate_plan(), 0, 0};
    CHECK_THROWS_AS(run_experiment(ideal, zero_shots), std::invalid_argument);
  }
}

TEST_CASE("statistical soundness over many seeds") {
  FullParams truth;
  truth.spam = {0.05, -0.03, 0.99, 0.505, 0.485};
  truth.theta = 0.01;
  truth.eps = 0.0005;
  const GateOp seq = GateOp::x90(33);
  const double p = full_sequence_probability(truth, seq);
  const std::uint64_t n = 16384;
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  int inside = 0;
  const int trials = 600;
  for (int t = 0; t < trials; ++t) {
    const CountRecord rec = run_experiment(truth, {{seq}, n, static_cast<std::uint64_t>(t)});
    const double f = static_cast<double>(rec.entries[0].zeros) / static_cast<double>(n);
    if (std::fabs(f - p) < 5.0 * se) ++inside;
  }
  CHECK(inside >= static_cast<int>(0.99 * trials));
}

TEST_CASE("ghz readout distribution") {
  SUBCASE("single qubit, zero phase") {
    const auto d = ghz_readout_distribution(1, 0.0, {});
    CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("parity formula at N = 3 matches the statevector oracle") {
    const double phase = oracles::kPi / 4.0;
    const auto d = ghz_readout_distribution(3, phase, {});
    const auto sv = oracles::ghz_xbasis_distribution(3, phase);
    const double even = (1.0 + std::cos(phase)) / 8.0;
    const double odd = (1.0 - std::cos(phase)) / 8.0;
    for (std::size_t s = 0; s < 8; ++s) {
      const bool is_odd = __builtin_popcountll(s) & 1;
      CHECK(d[s] == doctest::Approx(is_odd ? odd : even).epsilon(1e-13));
      CHECK(std::fabs(d[s] - sv[s]) < 1e-13);
    }
  }

  SUBCASE("zero-noise channel is the identity") {
    const auto clean = ghz_readout_distribution(4, 0.7, {});
    const auto noisy = ghz_readout_distribution(4, 0.7, {{0, 0}, {0, 0}, {0, 0}, {0, 0}});
    for (std::size_t s = 0; s < clean.size(); ++s) CHECK(noisy[s] == clean[s]);
  }

  SUBCASE("noisy channel matches the dense oracle and stays normalized") {
    const std::vector<std::pair<double, double>> eps = {
        {0.01, 0.02}, {0.03, 0.01}, {0.0, 0.05}, {0.02, 0.02}, {0.04, 0.0}};
    const auto noisy = ghz_readout_distribution(5, oracles::kPi / 4.0, eps);
    const auto ideal = ghz_readout_distribution(5, oracles::kPi / 4.0, {});
    const auto dense = oracles::apply_bitflip_channel_dense(ideal, eps);
    double total = 0.0;
    for (std::size_t s = 0; s < noisy.size(); ++s) {
      CHECK(std::fabs(noisy[s] - dense[s]) < 1e-13);
      total += noisy[s];
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }

  SUBCASE("validation") {
    CHECK_THROWS_AS(ghz_readout_distribution(0, 0.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(ghz_readout_distribution(13, 0.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(ghz_readout_distribution(2, 0.0, {{0.5, 0.5}}), std::invalid_argument);
    CHECK_THROWS_AS(ghz_readout_distribution(1, 0.0, {{-0.1, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(ghz_readout_distribution(1, 0.0, {{0.0, 1.1}}), std::invalid_argument);
  }
}
