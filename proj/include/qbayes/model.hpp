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

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// ============================================================================
// Single-qubit error model
// ============================================================================
// States are Bloch 3-vectors, measurement is a two-outcome POVM parametrized
// by (pi0, pix, piy, piz) for outcome 0, and the calibration gates are the
// identity, an ideal X pi-flip, and X/Y quarter turns that carry a common
// overrotation angle theta plus a per-gate depolarizing shrinkage eps. All
// probabilities have closed forms, which is what makes brute-force posterior
// integration affordable.

namespace qbayes {

inline constexpr double kExactTol = 1e-12;    // closed-form algebra
inline constexpr double kProductTol = 1e-10;  // accumulated matrix products

// ----------------------------------------------------------------------------
// Domain types
// ----------------------------------------------------------------------------

/// Qubit state r = (x, y, z) with |r| <= 1.
struct BlochVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool is_physical(double tol = kExactTol) const { return x * x + y * y + z * z <= 1.0 + tol; }
};

/// Outcome-0 POVM element Pi = sum_mu pi_mu sigma^mu.
struct PovmParams {
  double pi0 = 0.5;
  double pix = 0.0;
  double piy = 0.0;
  double piz = 0.5;
};

/// The reduced 5-parameter SPAM set {x0, y0, z0, pi0, piz} (pix = piy = 0).
struct SpamParams {
  double x0 = 0.0;
  double y0 = 0.0;
  double z0 = 1.0;
  double pi0 = 0.5;
  double piz = 0.5;

  BlochVector bloch() const { return {x0, y0, z0}; }
  PovmParams povm() const { return {pi0, 0.0, 0.0, piz}; }

  bool is_valid(double tol = kExactTol) const {
    const double n2 = x0 * x0 + y0 * y0 + z0 * z0;
    return n2 <= 1.0 + tol && pi0 - piz >= -tol && pi0 + piz <= 1.0 + tol &&
           pi0 - piz <= 1.0 + tol && pi0 + piz >= -tol;
  }
};

/// SPAM plus the two gate-error parameters.
struct FullParams {
  SpamParams spam;
  double theta = 0.0;  // overrotation of every 90-degree gate, radians
  double eps = 0.0;    // per-gate depolarizing probability

  bool is_valid(double tol = kExactTol) const {
    return spam.is_valid(tol) && std::fabs(theta) < 1.5707963267948966 && eps >= 0.0 && eps < 1.0;
  }
};

/// Tilted rotation axis u = (xhat, yhat, zhat) with xhat the positive root.
struct RotationAxis {
  double yhat = 0.0;
  double zhat = 0.0;

  double xhat() const {
    const double r2 = 1.0 - yhat * yhat - zhat * zhat;
    return r2 > 0.0 ? std::sqrt(r2) : 0.0;
  }
  bool is_valid(double tol = kExactTol) const { return yhat * yhat + zhat * zhat <= 1.0 + tol; }
};

enum class GateKind : std::uint8_t { Identity, XFlip, X90Plus, X90Minus, Y90Plus, Y90Minus };

/// One calibration gate, possibly repeated. Any gate with reps = 0 is the
/// identity.
struct GateOp {
  GateKind kind = GateKind::Identity;
  int reps = 0;

  static GateOp identity() { return {GateKind::Identity, 0}; }
  static GateOp x_flip(int reps = 1) { return {GateKind::XFlip, reps}; }
  static GateOp x90(int reps = 1) { return {GateKind::X90Plus, reps}; }
  static GateOp x90m(int reps = 1) { return {GateKind::X90Minus, reps}; }
  static GateOp y90(int reps = 1) { return {GateKind::Y90Plus, reps}; }
  static GateOp y90m(int reps = 1) { return {GateKind::Y90Minus, reps}; }

  bool is_identity() const { return kind == GateKind::Identity || reps == 0; }
  /// Number of elementary gate applications, i.e. depolarizing steps.
  int shrink_steps() const { return is_identity() ? 0 : reps; }

  bool operator==(const GateOp& o) const {
    if (is_identity() && o.is_identity()) return true;
    return kind == o.kind && reps == o.reps;
  }
};

inline std::string to_string(const GateOp& g) {
  if (g.is_identity()) return "1";
  std::string base;
  switch (g.kind) {
    case GateKind::XFlip: base = "X"; break;
    case GateKind::X90Plus: base = "X90"; break;
    case GateKind::X90Minus: base = "X-90"; break;
    case GateKind::Y90Plus: base = "Y90"; break;
    case GateKind::Y90Minus: base = "Y-90"; break;
    default: return "1";
  }
  if (g.reps != 1) base += "^" + std::to_string(g.reps);
  return base;
}

/// Parses "1", "X", "X90", "X-90", "Y90", "Y-90", optionally with "^j".
inline GateOp parse_gate(const std::string& text) {
  std::string base = text;
  int reps = 1;
  const auto caret = text.find('^');
  if (caret != std::string::npos) {
    base = text.substr(0, caret);
    const std::string power = text.substr(caret + 1);
    std::size_t used = 0;
    try {
      reps = std::stoi(power, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("parse_gate: bad repetition count in '" + text + "'");
    }
    if (used != power.size() || reps < 0)
      throw std::invalid_argument("parse_gate: bad repetition count in '" + text + "'");
  }
  GateKind kind;
  if (base == "1" || base == "I") {
    return GateOp::identity();
  } else if (base == "X") {
    kind = GateKind::XFlip;
  } else if (base == "X90" || base == "X+90") {
    kind = GateKind::X90Plus;
  } else if (base == "X-90") {
    kind = GateKind::X90Minus;
  } else if (base == "Y90" || base == "Y+90") {
    kind = GateKind::Y90Plus;
  } else if (base == "Y-90") {
    kind = GateKind::Y90Minus;
  } else {
    throw std::invalid_argument("parse_gate: unknown gate '" + text + "'");
  }
  if (reps == 0) return GateOp::identity();
  return {kind, reps};
}

// ----------------------------------------------------------------------------
// 3x3 rotation algebra
// ----------------------------------------------------------------------------

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 mat3_identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
  return c;
}

inline BlochVector apply_matrix(const Mat3& m, const BlochVector& r) {
  return {m[0][0] * r.x + m[0][1] * r.y + m[0][2] * r.z,
          m[1][0] * r.x + m[1][1] * r.y + m[1][2] * r.z,
          m[2][0] * r.x + m[2][1] * r.y + m[2][2] * r.z};
}

/// cos and sin of j*(pi/2 + theta), with the quarter turns applied exactly.
/// Writing the angle as j*pi/2 + j*theta keeps large-j powers accurate and
/// makes the j = 1 matrix reproduce the explicit small-power formulas
/// digit for digit (cos(pi/2 + theta) evaluates exactly as -sin(theta)).
inline std::array<double, 2> quarter_turn_trig(int j, double theta) {
  if (j < 0) throw std::invalid_argument("quarter_turn_trig: j must be >= 0");
  const double cj = std::cos(j * theta);
  const double sj = std::sin(j * theta);
  switch (j & 3) {
    case 0: return {cj, sj};
    case 1: return {-sj, cj};
    case 2: return {-cj, -sj};
    default: return {sj, -cj};
  }
}

enum class RotationAxisName { X, Y };

/// Closed-form (X_{+-90})^j or (Y_{+-90})^j as a rotation by j*(pi/2 + theta).
inline Mat3 gate_power_matrix(RotationAxisName axis, int sign, int j, double theta) {
  if (j < 0) throw std::invalid_argument("gate_power_matrix: j must be >= 0");
  if (sign != 1 && sign != -1) throw std::invalid_argument("gate_power_matrix: sign must be +-1");
  const auto [c, s] = quarter_turn_trig(j, theta);
  const double ss = sign * s;
  if (axis == RotationAxisName::X) {
    return {{{1, 0, 0}, {0, c, -ss}, {0, ss, c}}};
  }
  return {{{c, 0, ss}, {0, 1, 0}, {-ss, 0, c}}};
}

/// Rodrigues rotation about an arbitrary unit axis: 1 + sin(t) U + (1-cos(t)) U^2.
inline Mat3 rotation_about(double ux, double uy, double uz, double angle) {
  const double s = std::sin(angle);
  const double v = 1.0 - std::cos(angle);
  const Mat3 u = {{{0, -uz, uy}, {uz, 0, -ux}, {-uy, ux, 0}}};
  const Mat3 u2 = mat3_mul(u, u);
  Mat3 m = mat3_identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] += s * u[i][j] + v * u2[i][j];
  return m;
}

/// Rotation about a tilted (near-x) axis by a total angle.
inline Mat3 rotation_matrix_tilted(const RotationAxis& axis, double angle) {
  if (!axis.is_valid()) throw std::invalid_argument("rotation_matrix_tilted: invalid axis");
  return rotation_about(axis.xhat(), axis.yhat, axis.zhat, angle);
}

/// Rotation matrix for a gate with overrotation theta on the 90-degree gates.
/// The X pi-flip is ideal (no theta dependence).
inline Mat3 gate_matrix(const GateOp& g, double theta) {
  if (g.reps < 0) throw std::invalid_argument("gate_matrix: reps must be >= 0");
  if (g.is_identity()) return mat3_identity();
  switch (g.kind) {
    case GateKind::XFlip: {
      if (g.reps % 2 == 0) return mat3_identity();
      return {{{1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
    }
    case GateKind::X90Plus: return gate_power_matrix(RotationAxisName::X, +1, g.reps, theta);
    case GateKind::X90Minus: return gate_power_matrix(RotationAxisName::X, -1, g.reps, theta);
    case GateKind::Y90Plus: return gate_power_matrix(RotationAxisName::Y, +1, g.reps, theta);
    case GateKind::Y90Minus: return gate_power_matrix(RotationAxisName::Y, -1, g.reps, theta);
    default: return mat3_identity();
  }
}

// ----------------------------------------------------------------------------
// Model operations
// ----------------------------------------------------------------------------

inline BlochVector apply_gate(const GateOp& g, double theta, const BlochVector& r) {
  return apply_matrix(gate_matrix(g, theta), r);
}

inline BlochVector apply_gate(const GateOp& g, const BlochVector& r) {
  return apply_gate(g, 0.0, r);
}

/// (1 - eps)^j by repeated squaring; exact for eps = 0 or j = 0.
inline double shrink_factor(double eps, int j) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("shrink_factor: eps outside [0, 1)");
  if (j < 0) throw std::invalid_argument("shrink_factor: j must be >= 0");
  double base = 1.0 - eps;
  double out = 1.0;
  for (unsigned n = static_cast<unsigned>(j); n != 0; n >>= 1) {
    if (n & 1u) out *= base;
    base *= base;
  }
  return out;
}

/// Uniform depolarizing shrinkage r -> (1 - eps)^j r.
inline BlochVector apply_depolarizing(const BlochVector& r, double eps, int j) {
  const double f = shrink_factor(eps, j);
  return {f * r.x, f * r.y, f * r.z};
}

/// p(0 | r) = pi0 + pix x + piy y + piz z.
inline double outcome_probability(const BlochVector& r, const PovmParams& povm) {
  return povm.pi0 + povm.pix * r.x + povm.piy * r.y + povm.piz * r.z;
}

/// The six outcome-0 probabilities of the gate set {1, X, X-90, X90, Y90, Y-90}
/// in the reduced model (pix = piy = 0, no gate errors), in the order
/// (f+z, f-z, f+y, f-y, f+x, f-x).
struct SpamProbabilities {
  double f_plus_z, f_minus_z, f_plus_y, f_minus_y, f_plus_x, f_minus_x;

  std::array<double, 6> as_array() const {
    return {f_plus_z, f_minus_z, f_plus_y, f_minus_y, f_plus_x, f_minus_x};
  }
};

inline SpamProbabilities spam_sequence_probabilities(const SpamParams& p) {
  return {p.pi0 + p.piz * p.z0, p.pi0 - p.piz * p.z0, p.pi0 - p.piz * p.y0,
          p.pi0 + p.piz * p.y0, p.pi0 - p.piz * p.x0, p.pi0 + p.piz * p.x0};
}

/// Outcome-0 probability of one (possibly repeated) gate with coherent error
/// theta and per-application depolarizing shrinkage eps.
inline double full_sequence_probability(const FullParams& p, const GateOp& seq) {
  BlochVector r = apply_gate(seq, p.theta, p.spam.bloch());
  r = apply_depolarizing(r, p.eps, seq.shrink_steps());
  return outcome_probability(r, p.spam.povm());
}

// ----------------------------------------------------------------------------
// Standard gate plans
// ----------------------------------------------------------------------------

/// {1, X, X-90, X90, Y90, Y-90}: the six-gate SPAM experiment. The entries
/// measure, in order, (f+z, f-z, f+y, f-y, f+x, f-x).
inline std::vector<GateOp> six_gate_plan() {
  return {GateOp::identity(), GateOp::x_flip(), GateOp::x90m(),
          GateOp::x90(),      GateOp::y90(),    GateOp::y90m()};
}

/// Six-gate plan extended with (X90)^{4n} and (X90)^{4n+1}.
inline std::vector<GateOp> eight_gate_plan(int n_rep = 8) {
  if (n_rep < 1) throw std::invalid_argument("eight_gate_plan: n_rep must be >= 1");
  auto plan = six_gate_plan();
  plan.push_back(GateOp::x90(4 * n_rep));
  plan.push_back(GateOp::x90(4 * n_rep + 1));
  return plan;
}

/// {1, X, X-90, Y90}: the four-gate plan for direct POVM estimation, measuring
/// (f_z, f_-z, f_y, f_x).
inline std::vector<GateOp> four_gate_plan() {
  return {GateOp::identity(), GateOp::x_flip(), GateOp::x90m(), GateOp::y90()};
}

// ----------------------------------------------------------------------------
// Compiled plan evaluator
// ----------------------------------------------------------------------------

// Posterior integration evaluates every sequence probability millions of
// times, so the per-sequence structure (which trig values are needed, the
// exact theta = 0 coefficients) is compiled once up front. Parameter vectors
// are ordered {x0, y0, z0, pi0, piz[, theta, eps]}. Evaluation is const and
// uses only stack scratch, so one evaluator can be shared across workers.
class SequenceProbEvaluator {
 public:
  static constexpr std::size_t kMaxTrigSlots = 16;

  explicit SequenceProbEvaluator(std::vector<GateOp> plan) : plan_(std::move(plan)) {
    steps_.reserve(plan_.size());
    for (const GateOp& g : plan_) {
      Step st;
      st.kind = g.is_identity() ? GateKind::Identity : g.kind;
      st.reps = g.shrink_steps();
      const Mat3 m = gate_matrix(g, 0.0);
      st.ax = m[2][0];
      st.ay = m[2][1];
      st.az = m[2][2];
      st.trig_slot = trig_slot_for(st.reps, st.kind);
      steps_.push_back(st);
    }
  }

  std::size_t size() const { return steps_.size(); }
  const std::vector<GateOp>& plan() const { return plan_; }

  /// Probabilities for the 5-parameter model (theta = eps = 0).
  void eval_spam(const double* p, double* out) const {
    const double pi0 = p[3], piz = p[4];
    for (std::size_t k = 0; k < steps_.size(); ++k) {
      const Step& st = steps_[k];
      out[k] = pi0 + piz * (st.ax * p[0] + st.ay * p[1] + st.az * p[2]);
    }
  }

  /// Probabilities for the 7-parameter model {x0,y0,z0,pi0,piz,theta,eps}.
  void eval_full(const double* p, double* out) const {
    const double x0 = p[0], y0 = p[1], z0 = p[2], pi0 = p[3], piz = p[4];
    const double theta = p[5], eps = p[6];
    // One trig/shrink evaluation per distinct repetition count.
    std::array<double, kMaxTrigSlots> tc, ts, tf;
    for (std::size_t t = 0; t < trig_reps_.size(); ++t) {
      const auto cs = quarter_turn_trig(trig_reps_[t], theta);
      tc[t] = cs[0];
      ts[t] = cs[1];
      tf[t] = shrink_factor(eps, trig_reps_[t]);
    }
    for (std::size_t k = 0; k < steps_.size(); ++k) {
      const Step& st = steps_[k];
      double zf;
      double f = 1.0;
      switch (st.kind) {
        case GateKind::Identity: zf = z0; break;
        case GateKind::XFlip:
          zf = (st.reps % 2 == 0) ? z0 : -z0;
          f = shrink_factor(eps, st.reps);
          break;
        case GateKind::X90Plus:
          zf = ts[st.trig_slot] * y0 + tc[st.trig_slot] * z0;
          f = tf[st.trig_slot];
          break;
        case GateKind::X90Minus:
          zf = -ts[st.trig_slot] * y0 + tc[st.trig_slot] * z0;
          f = tf[st.trig_slot];
          break;
        case GateKind::Y90Plus:
          zf = -ts[st.trig_slot] * x0 + tc[st.trig_slot] * z0;
          f = tf[st.trig_slot];
          break;
        default:  // Y90Minus
          zf = ts[st.trig_slot] * x0 + tc[st.trig_slot] * z0;
          f = tf[st.trig_slot];
          break;
      }
      out[k] = pi0 + piz * (f * zf);
    }
  }

 private:
  struct Step {
    GateKind kind;
    int reps;
    double ax, ay, az;  // theta = 0 final-z row, exact {0, +-1}
    std::size_t trig_slot = 0;
  };

  std::size_t trig_slot_for(int reps, GateKind kind) {
    if (kind == GateKind::Identity || kind == GateKind::XFlip) return 0;
    for (std::size_t i = 0; i < trig_reps_.size(); ++i)
      if (trig_reps_[i] == reps) return i;
    if (trig_reps_.size() == kMaxTrigSlots)
      throw std::invalid_argument("SequenceProbEvaluator: too many distinct gate powers");
    trig_reps_.push_back(reps);
    return trig_reps_.size() - 1;
  }

  std::vector<GateOp> plan_;
  std::vector<Step> steps_;
  std::vector<int> trig_reps_;
};

}  // namespace qbayes
