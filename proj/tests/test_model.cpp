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

#include "qbayes/bayes.hpp"
#include "qbayes/model.hpp"
#include "qbayes/rng.hpp"

#include "oracles.hpp"

using namespace qbayes;

namespace {

BlochVector random_state(CounterRng& rng) {
  // Uniform direction, uniform radius^3 inside the ball.
  for (;;) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    const double z = rng.uniform(-1.0, 1.0);
    if (x * x + y * y + z * z <= 1.0) return {x, y, z};
  }
}

}  // namespace

TEST_CASE("gate actions on cardinal states") {
  const BlochVector up{0, 0, 1};

  const BlochVector flipped = apply_gate(GateOp::x_flip(), up);
  CHECK(flipped.x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(flipped.y == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(flipped.z == doctest::Approx(-1.0).epsilon(1e-15));

  const BlochVector x90 = apply_gate(GateOp::x90(), up);
  CHECK(std::fabs(x90.x - 0.0) < 1e-15);
  CHECK(std::fabs(x90.y - -1.0) < 1e-15);
  CHECK(std::fabs(x90.z - 0.0) < 1e-15);

  const BlochVector y90 = apply_gate(GateOp::y90(), up);
  CHECK(std::fabs(y90.x - 1.0) < 1e-15);
  CHECK(std::fabs(y90.y - 0.0) < 1e-15);
  CHECK(std::fabs(y90.z - 0.0) < 1e-15);
}

TEST_CASE("gate_power_matrix basic powers") {
  const Mat3 full_turn = gate_power_matrix(RotationAxisName::X, +1, 4, 0.0);
  CHECK(oracles::max_abs_diff(full_turn, mat3_identity()) < 1e-15);

  // (X+-90)^2 at theta = 0 maps (0, y, z) -> (0, -y, -z).
  const Mat3 half = gate_power_matrix(RotationAxisName::X, +1, 2, 0.0);
  const BlochVector r = apply_matrix(half, {0.0, 0.25, -0.5});
  CHECK(std::fabs(r.x) < 1e-15);
  CHECK(std::fabs(r.y - -0.25) < 1e-15);
  CHECK(std::fabs(r.z - 0.5) < 1e-15);

  const Mat3 closed = gate_power_matrix(RotationAxisName::X, +1, 33, 0.02);
  const Mat3 brute = oracles::repeated_gate_product('x', +1, 33, 0.02);
  CHECK(oracles::max_abs_diff(closed, brute) < 1e-10);
}

TEST_CASE("rotation closure: closed form equals repeated products") {
  for (const double theta : {-0.1, 0.0, 0.03})
    for (const char axis : {'x', 'y'})
      for (const int sign : {+1, -1}) {
        const auto axname = axis == 'x' ? RotationAxisName::X : RotationAxisName::Y;
        for (int j = 0; j <= 64; ++j) {
          const Mat3 closed = gate_power_matrix(axname, sign, j, theta);
          const Mat3 brute = oracles::repeated_gate_product(axis, sign, j, theta);
          REQUIRE(oracles::max_abs_diff(closed, brute) < 1e-10);
        }
      }
}

TEST_CASE("explicit small-power formulas match the general matrices") {
  // The j = 1, 2, 4n, 4n+1 actions written out directly in terms of
  // sin(theta)/cos(theta) and sin/cos of multiples of theta.
  const double theta = 0.0173;
  const double st = std::sin(theta), ct = std::cos(theta);
  CounterRng rng(411);
  for (int rep = 0; rep < 50; ++rep) {
    const BlochVector r = random_state(rng);
    for (const int sign : {+1, -1}) {
      const double s = static_cast<double>(sign);
      const BlochVector x1 = apply_gate({GateKind::X90Plus, 1}, theta, r);
      const BlochVector x1m = apply_gate({GateKind::X90Minus, 1}, theta, r);
      const BlochVector got = sign > 0 ? x1 : x1m;
      CHECK(std::fabs(got.x - r.x) < 1e-15);
      CHECK(std::fabs(got.y - (-st * r.y - s * ct * r.z)) < 1e-15);
      CHECK(std::fabs(got.z - (s * ct * r.y - st * r.z)) < 1e-15);

      const BlochVector y1 = apply_gate(sign > 0 ? GateOp{GateKind::Y90Plus, 1}
                                                 : GateOp{GateKind::Y90Minus, 1},
                                        theta, r);
      CHECK(std::fabs(y1.x - (-st * r.x + s * ct * r.z)) < 1e-15);
      CHECK(std::fabs(y1.y - r.y) < 1e-15);
      CHECK(std::fabs(y1.z - (-s * ct * r.x - st * r.z)) < 1e-15);

      const BlochVector x2 = apply_gate(sign > 0 ? GateOp{GateKind::X90Plus, 2}
                                                 : GateOp{GateKind::X90Minus, 2},
                                        theta, r);
      const double c2 = std::cos(2 * theta), s2 = std::sin(2 * theta);
      CHECK(std::fabs(x2.x - r.x) < 1e-15);
      CHECK(std::fabs(x2.y - (-c2 * r.y + s * s2 * r.z)) < 1e-15);
      CHECK(std::fabs(x2.z - (-s * s2 * r.y - c2 * r.z)) < 1e-15);

      for (const int n : {1, 3, 8}) {
        const double c4 = std::cos(4 * n * theta), s4 = std::sin(4 * n * theta);
        const BlochVector x4n = apply_gate(sign > 0 ? GateOp{GateKind::X90Plus, 4 * n}
                                                    : GateOp{GateKind::X90Minus, 4 * n},
                                           theta, r);
        CHECK(std::fabs(x4n.x - r.x) < 1e-14);
        CHECK(std::fabs(x4n.y - (c4 * r.y - s * s4 * r.z)) < 1e-14);
        CHECK(std::fabs(x4n.z - (s * s4 * r.y + c4 * r.z)) < 1e-14);

        const double c41 = std::cos((4 * n + 1) * theta), s41 = std::sin((4 * n + 1) * theta);
        const BlochVector x4n1 = apply_gate(sign > 0 ? GateOp{GateKind::X90Plus, 4 * n + 1}
                                                     : GateOp{GateKind::X90Minus, 4 * n + 1},
                                            theta, r);
        CHECK(std::fabs(x4n1.x - r.x) < 1e-14);
        CHECK(std::fabs(x4n1.y - (-s41 * r.y - s * c41 * r.z)) < 1e-14);
        CHECK(std::fabs(x4n1.z - (s * c41 * r.y - s41 * r.z)) < 1e-14);
      }
    }
  }
}

TEST_CASE("tilted-axis rotation") {
  const RotationAxis x_axis{0.0, 0.0};
  const Mat3 tilted = rotation_matrix_tilted(x_axis, oracles::kPi / 2.0);
  const Mat3 x90 = gate_power_matrix(RotationAxisName::X, +1, 1, 0.0);
  CHECK(oracles::max_abs_diff(tilted, x90) < 1e-15);

  const RotationAxis skew{0.3, -0.4};
  CHECK(oracles::max_abs_diff(rotation_matrix_tilted(skew, 0.0), mat3_identity()) < 1e-15);

  // Rotation about +z by pi/2 sends +x to +y.
  const RotationAxis z_axis{0.0, 1.0};
  const BlochVector moved = apply_matrix(rotation_matrix_tilted(z_axis, oracles::kPi / 2.0),
                                         {1.0, 0.0, 0.0});
  CHECK(std::fabs(moved.x) < 1e-15);
  CHECK(std::fabs(moved.y - 1.0) < 1e-15);
  CHECK(std::fabs(moved.z) < 1e-15);

  // Orthogonality for a generic tilt and angle.
  const Mat3 m = rotation_matrix_tilted(skew, 1.234);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[k][i] * m[k][j];
      CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
}

TEST_CASE("depolarizing shrinkage") {
  const BlochVector up{0, 0, 1};
  const BlochVector same = apply_depolarizing({0.1, -0.2, 0.5}, 0.0, 7);
  CHECK(same.x == 0.1);
  CHECK(same.y == -0.2);
  CHECK(same.z == 0.5);

  CHECK(apply_depolarizing(up, 0.0005, 1).z == doctest::Approx(0.9995).epsilon(1e-15));
  CHECK(apply_depolarizing(up, 0.5, 2).z == doctest::Approx(0.25).epsilon(1e-15));

  CHECK_THROWS_AS(apply_depolarizing(up, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(apply_depolarizing(up, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(apply_depolarizing(up, 0.1, -1), std::invalid_argument);

  // Monotone shrinkage with equality only for eps = 0, j = 0, or r = 0.
  CounterRng rng(7);
  for (int i = 0; i < 200; ++i) {
    const BlochVector r = random_state(rng);
    const double eps = rng.uniform(0.0, 0.9);
    const int j = static_cast<int>(rng.uniform(0.0, 5.0));
    const double before = r.norm();
    const double after = apply_depolarizing(r, eps, j).norm();
    CHECK(after <= before + 1e-15);
    if (eps > 1e-9 && j > 0 && before > 1e-9) CHECK(after < before);
  }
}

TEST_CASE("norm preservation under gates") {
  CounterRng rng(99);
  const std::vector<GateOp> gates = {GateOp::identity(), GateOp::x_flip(), GateOp::x90(3),
                                     GateOp::x90m(12),   GateOp::y90(33),  GateOp::y90m(5)};
  for (int i = 0; i < 200; ++i) {
    const BlochVector r = random_state(rng);
    const double theta = rng.uniform(-0.1, 0.1);
    for (const auto& g : gates) {
      const BlochVector out = apply_gate(g, theta, r);
      CHECK(std::fabs(out.norm() - r.norm()) < 1e-12);
    }
  }
}

TEST_CASE("outcome probabilities") {
  const PovmParams ideal{0.5, 0.0, 0.0, 0.5};
  CHECK(outcome_probability({0, 0, 1}, ideal) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(outcome_probability({0, 0, -1}, ideal) == doctest::Approx(0.0).epsilon(1e-15));
  const PovmParams real{0.505, 0.0, 0.0, 0.485};
  CHECK(outcome_probability({0, 0, 1}, real) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("six-gate sequence probabilities") {
  SUBCASE("ideal parameters") {
    const auto f = spam_sequence_probabilities({0, 0, 1, 0.5, 0.5});
    CHECK(f.f_plus_z == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(f.f_minus_z == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(f.f_plus_y == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(f.f_minus_y == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(f.f_plus_x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(f.f_minus_x == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("hand-evaluated example") {
    const auto f = spam_sequence_probabilities({0.05, 0.0, 0.99, 0.505, 0.49});
    CHECK(f.f_plus_z == doctest::Approx(0.9901).epsilon(1e-12));
    CHECK(f.f_minus_z == doctest::Approx(0.0199).epsilon(1e-12));
    CHECK(f.f_plus_x == doctest::Approx(0.4805).epsilon(1e-12));
    CHECK(f.f_minus_x == doctest::Approx(0.5295).epsilon(1e-12));
    CHECK(f.f_plus_y == doctest::Approx(0.505).epsilon(1e-12));
    CHECK(f.f_minus_y == doctest::Approx(0.505).epsilon(1e-12));
  }
  SUBCASE("pipeline equivalence and exact reduction") {
    CounterRng rng(1234);
    const auto plan = six_gate_plan();
    for (int i = 0; i < 100; ++i) {
      SpamParams p;
      p.x0 = rng.uniform(-0.2, 0.2);
      p.y0 = rng.uniform(-0.2, 0.2);
      p.z0 = rng.uniform(0.8, 1.0);
      p.pi0 = rng.uniform(0.45, 0.55);
      p.piz = rng.uniform(0.35, std::min(p.pi0, 1.0 - p.pi0));
      if (!p.is_valid()) continue;
      const auto f = spam_sequence_probabilities(p).as_array();
      for (std::size_t k = 0; k < plan.size(); ++k) {
        const BlochVector rk = apply_gate(plan[k], 0.0, p.bloch());
        const double pk = outcome_probability(rk, p.povm());
        CHECK(std::fabs(f[k] - pk) < 1e-12);
      }
      // General six-gate forms with pix = piy = 0 reduce to the closed forms
      // exactly.
      const double pix = 0.0, piy = 0.0;
      const double general[6] = {
          p.pi0 + pix * p.x0 + piy * p.y0 + p.piz * p.z0,
          p.pi0 + pix * p.x0 - piy * p.y0 - p.piz * p.z0,
          p.pi0 + piy * p.z0 + pix * p.x0 - p.piz * p.y0,
          p.pi0 - piy * p.z0 + pix * p.x0 + p.piz * p.y0,
          p.pi0 + pix * p.z0 - p.piz * p.x0 + piy * p.y0,
          p.pi0 - pix * p.z0 + p.piz * p.x0 + piy * p.y0,
      };
      for (std::size_t k = 0; k < 6; ++k) CHECK(f[k] == general[k]);
    }
  }
}

TEST_CASE("full sequence probability") {
  SUBCASE("reduces to the six-gate forms at theta = eps = 0") {
    FullParams p;
    p.spam = {0.04, -0.02, 0.985, 0.51, 0.48};
    const auto f = spam_sequence_probabilities(p.spam).as_array();
    const auto plan = six_gate_plan();
    for (std::size_t k = 0; k < plan.size(); ++k)
      CHECK(std::fabs(full_sequence_probability(p, plan[k]) - f[k]) < 1e-12);
  }
  SUBCASE("32 quarter turns are the identity on |0>") {
    FullParams ideal;
    CHECK(full_sequence_probability(ideal, GateOp::x90(32)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("matches the stepwise oracle") {
    FullParams p;
    p.theta = 0.01;
    p.eps = 0.0005;
    const double got = full_sequence_probability(p, GateOp::x90(33));
    const double want =
        oracles::stepwise_sequence_probability(0, 0, 1, 0.5, 0.5, 0.01, 0.0005, 'x', +1, 33);
    CHECK(std::fabs(got - want) < 1e-10);
  }
}

TEST_CASE("probability bounds inside the constrained prior box") {
  const PriorBox box = PriorBox::full_default();
  const auto plan = eight_gate_plan(8);
  CounterRng rng(2026);
  std::vector<double> x(7);
  int tested = 0;
  while (tested < 20000) {
    for (std::size_t a = 0; a < 7; ++a) x[a] = rng.uniform(box.axes[a].lo, box.axes[a].hi);
    if (!box.feasible(x.data())) continue;
    ++tested;
    FullParams p;
    p.spam = {x[0], x[1], x[2], x[3], x[4]};
    p.theta = x[5];
    p.eps = x[6];
    for (const auto& g : plan) {
      const double prob = full_sequence_probability(p, g);
      REQUIRE(prob >= -1e-12);
      REQUIRE(prob <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("gate string round trip") {
  const std::vector<GateOp> gates = {GateOp::identity(), GateOp::x_flip(),  GateOp::x90(),
                                     GateOp::x90m(),     GateOp::y90(),     GateOp::y90m(),
                                     GateOp::x90(32),    GateOp::x90m(33),  GateOp::y90(4),
                                     GateOp::x_flip(2),  GateOp::y90m(17)};
  for (const auto& g : gates) {
    const GateOp back = parse_gate(to_string(g));
    CHECK(back == g);
  }
  CHECK(parse_gate("I") == GateOp::identity());
  CHECK(parse_gate("X90^0") == GateOp::identity());
  CHECK_THROWS_AS(parse_gate("Z90"), std::invalid_argument);
  CHECK_THROWS_AS(parse_gate("X90^-2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_gate("X90^two"), std::invalid_argument);
}

TEST_CASE("compiled evaluator matches the reference pipeline") {
  const auto plan = eight_gate_plan(8);
  const SequenceProbEvaluator eval(plan);
  CounterRng rng(555);
  std::vector<double> p5(5), p7(7), out(plan.size());
  for (int i = 0; i < 200; ++i) {
    FullParams fp;
    fp.spam.x0 = rng.uniform(-0.15, 0.15);
    fp.spam.y0 = rng.uniform(-0.15, 0.15);
    fp.spam.z0 = rng.uniform(0.8, 0.98);
    fp.spam.pi0 = rng.uniform(0.45, 0.55);
    fp.spam.piz = rng.uniform(0.35, 0.44);
    fp.theta = rng.uniform(-0.1, 0.1);
    fp.eps = rng.uniform(0.0, 0.01);
    if (!fp.is_valid()) continue;

    p7 = {fp.spam.x0, fp.spam.y0, fp.spam.z0, fp.spam.pi0, fp.spam.piz, fp.theta, fp.eps};
    eval.eval_full(p7.data(), out.data());
    for (std::size_t k = 0; k < plan.size(); ++k)
      CHECK(std::fabs(out[k] - full_sequence_probability(fp, plan[k])) < 1e-12);

    FullParams noerr;
    noerr.spam = fp.spam;
    for (std::size_t a = 0; a < 5; ++a) p5[a] = p7[a];
    eval.eval_spam(p5.data(), out.data());
    for (std::size_t k = 0; k < plan.size(); ++k)
      CHECK(std::fabs(out[k] - full_sequence_probability(noerr, plan[k])) < 1e-12);
  }
}
