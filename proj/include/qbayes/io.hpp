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

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbayes/bayes.hpp"
#include "qbayes/mitigation.hpp"
#include "qbayes/pingpong.hpp"
#include "qbayes/povm_mle.hpp"
#include "qbayes/simulator.hpp"

// JSON and CSV wire formats. JSON documents carry a schema_version and a kind
// tag; readers are strict about both. CSV is RFC-4180 style with headers and
// dot decimal separators. Doubles are written with %.17g so round trips are
// exact and output bytes are reproducible.

namespace qbayes::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ----------------------------------------------------------------------------
// Files
// ----------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << content;
}

inline json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("malformed JSON in " + what);
  return j;
}

inline void check_header(const json& j, const std::string& kind, const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + ": expected a JSON object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSchemaVersion)
    throw std::invalid_argument(what + ": missing or unsupported schema_version");
  if (!j.contains("kind") || j["kind"] != kind)
    throw std::invalid_argument(what + ": expected kind '" + kind + "'");
}

// ----------------------------------------------------------------------------
// Count records
// ----------------------------------------------------------------------------

inline json count_record_to_json(const CountRecord& rec) {
  json entries = json::array();
  for (const auto& e : rec.entries)
    entries.push_back({{"sequence", to_string(e.sequence)}, {"shots", e.shots}, {"zeros", e.zeros}});
  return json{{"schema_version", kSchemaVersion}, {"kind", "count_record"}, {"entries", entries}};
}

inline CountRecord count_record_from_json(const json& j) {
  check_header(j, "count_record", "count record");
  if (!j.contains("entries") || !j["entries"].is_array())
    throw std::invalid_argument("count record: missing entries array");
  CountRecord rec;
  for (const auto& e : j["entries"]) {
    if (!e.is_object() || !e.contains("sequence") || !e.contains("shots") || !e.contains("zeros"))
      throw std::invalid_argument("count record: entry needs sequence/shots/zeros");
    CountEntry entry;
    entry.sequence = parse_gate(e["sequence"].get<std::string>());
    entry.shots = e["shots"].get<std::uint64_t>();
    entry.zeros = e["zeros"].get<std::uint64_t>();
    rec.entries.push_back(entry);
  }
  rec.validate();
  return rec;
}

// ----------------------------------------------------------------------------
// Bitstring count vectors
// ----------------------------------------------------------------------------

struct BitstringCounts {
  int n_qubits = 0;
  std::vector<double> counts;  // indexed by bitstring value, MSB = qubit 0
};

inline json bitstring_counts_to_json(const BitstringCounts& bc) {
  json counts = json::object();
  for (std::size_t s = 0; s < bc.counts.size(); ++s) {
    std::string key(bc.n_qubits, '0');
    for (int q = 0; q < bc.n_qubits; ++q)
      if ((s >> (bc.n_qubits - 1 - q)) & 1) key[q] = '1';
    counts[key] = bc.counts[s];
  }
  return json{{"schema_version", kSchemaVersion}, {"kind", "bitstring_counts"}, {"counts", counts}};
}

inline BitstringCounts bitstring_counts_from_json(const json& j) {
  check_header(j, "bitstring_counts", "bitstring counts");
  if (!j.contains("counts") || !j["counts"].is_object() || j["counts"].empty())
    throw std::invalid_argument("bitstring counts: missing counts object");
  BitstringCounts bc;
  bc.n_qubits = static_cast<int>(j["counts"].begin().key().size());
  if (bc.n_qubits < 1 || bc.n_qubits > kMaxMitigationQubits)
    throw std::invalid_argument("bitstring counts: qubit count outside [1, 12]");
  bc.counts.assign(std::size_t{1} << bc.n_qubits, 0.0);
  for (const auto& [key, value] : j["counts"].items()) {
    if (key.size() != static_cast<std::size_t>(bc.n_qubits))
      throw std::invalid_argument("bitstring counts: inconsistent bitstring lengths");
    std::size_t idx = 0;
    for (char c : key) {
      if (c != '0' && c != '1')
        throw std::invalid_argument("bitstring counts: bitstring must be 0/1");
      idx = (idx << 1) | static_cast<std::size_t>(c - '0');
    }
    if (!value.is_number()) throw std::invalid_argument("bitstring counts: counts must be numbers");
    const double v = value.get<double>();
    if (!(v >= 0.0)) throw std::invalid_argument("bitstring counts: negative count");
    bc.counts[idx] = v;
  }
  return bc;
}

// ----------------------------------------------------------------------------
// Posterior summaries
// ----------------------------------------------------------------------------

inline json prior_box_to_json(const PriorBox& box) {
  json axes = json::object();
  for (const auto& a : box.axes) axes[a.name] = json::array({a.lo, a.hi});
  return axes;
}

inline json summary_to_json(const PosteriorSummary& s) {
  json params = json::array();
  for (std::size_t i = 0; i < s.names.size(); ++i)
    params.push_back({{"name", s.names[i]},
                      {"mean", s.mean[i]},
                      {"std_err", s.std_err[i]},
                      {"derived", i >= s.n_primary}});
  json cov = json::array();
  for (std::size_t i = 0; i < s.n_primary; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < s.n_primary; ++k) row.push_back(s.covariance(i, k));
    cov.push_back(row);
  }
  return json{{"schema_version", kSchemaVersion},
              {"kind", "posterior_summary"},
              {"parameters", params},
              {"covariance", cov},
              {"ess", s.ess},
              {"n_samples", s.n_samples},
              {"sampled_box", prior_box_to_json(s.sampled_box)}};
}

/// One CSV file per marginal: columns bin_center, mass.
inline void write_marginals_csv(const PosteriorSummary& s, const std::string& dir,
                                const std::string& run_name) {
  for (const auto& h : s.marginals) {
    std::ostringstream csv;
    csv << "bin_center,mass\n";
    for (std::size_t b = 0; b < h.mass.size(); ++b)
      csv << format_double(h.bin_center(b)) << "," << format_double(h.mass[b]) << "\n";
    write_text_file(dir + "/" + run_name + ".marginal_" + h.name + ".csv", csv.str());
  }
}

// ----------------------------------------------------------------------------
// POVM MLE results
// ----------------------------------------------------------------------------

inline json povm_mle_to_json(const PovmMleResult& r) {
  return json{{"schema_version", kSchemaVersion},
              {"kind", "povm_mle"},
              {"pi0", r.estimate.pi0},
              {"pix", r.estimate.pix},
              {"piy", r.estimate.piy},
              {"piz", r.estimate.piz},
              {"var_pi0", r.var_pi0},
              {"var_pix", r.var_pix},
              {"var_piy", r.var_piy},
              {"var_piz", r.var_piz},
              {"constraints_ok", r.constraints_ok},
              {"constraint_slack", r.constraint_slack}};
}

// ----------------------------------------------------------------------------
// Ping-pong curves and fits
// ----------------------------------------------------------------------------

/// Curve CSV: columns j, z, n, A; one row per measured point, curves grouped
/// by amplitude on read.
inline std::string pingpong_curves_to_csv(const std::vector<PingPongCurve>& curves) {
  std::ostringstream csv;
  csv << "j,z,n,A\n";
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.reps.size(); ++k)
      csv << c.reps[k] << "," << format_double(c.z[k]) << "," << c.shots << ","
          << format_double(c.amplitude) << "\n";
  return csv.str();
}

inline std::vector<PingPongCurve> pingpong_curves_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("curve CSV: empty file");
  // Tolerate \r\n and header casing.
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.pop_back();
    return s;
  };
  if (strip(line) != "j,z,n,A") throw std::invalid_argument("curve CSV: expected header j,z,n,A");
  std::map<double, PingPongCurve> by_amp;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 4)
      throw std::invalid_argument("curve CSV: bad row at line " + std::to_string(line_no));
    try {
      const int j = std::stoi(fields[0]);
      const double z = std::stod(fields[1]);
      const std::uint64_t n = std::stoull(fields[2]);
      const double amp = std::stod(fields[3]);
      auto& curve = by_amp[amp];
      curve.amplitude = amp;
      curve.shots = n;
      curve.reps.push_back(j);
      curve.z.push_back(z);
    } catch (const std::exception&) {
      throw std::invalid_argument("curve CSV: bad value at line " + std::to_string(line_no));
    }
  }
  std::vector<PingPongCurve> curves;
  for (auto& [amp, curve] : by_amp) curves.push_back(std::move(curve));
  if (curves.empty()) throw std::invalid_argument("curve CSV: no data rows");
  return curves;
}

inline json pingpong_result_to_json(const std::vector<PingPongFit>& fits,
                                    const std::vector<PingPongCurve>& curves,
                                    const AmplitudeSweepFit& sweep, std::size_t sequences_used) {
  json per_amp = json::array();
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    json residuals = json::array();
    for (std::size_t k = 0; k < curves[i].reps.size(); ++k)
      residuals.push_back(curves[i].z[k] - pingpong_model_value(f.offset_a, f.offset_b, f.theta,
                                                                curves[i].reps[k]));
    per_amp.push_back({{"amplitude", curves[i].amplitude},
                       {"a", f.offset_a},
                       {"b", f.offset_b},
                       {"theta", f.theta},
                       {"a_err", f.offset_a_err},
                       {"b_err", f.offset_b_err},
                       {"theta_err", f.theta_err},
                       {"chi2_reduced", f.chi2_reduced},
                       {"converged", f.converged},
                       {"residuals", residuals}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"kind", "pingpong_result"},
              {"curve_fits", per_amp},
              {"amplitude_fit",
               {{"alpha", sweep.alpha},
                {"beta", sweep.beta},
                {"gamma", sweep.gamma},
                {"delta", sweep.delta},
                {"theta_at_unit", sweep.theta_at_unit},
                {"theta_at_unit_err", sweep.theta_at_unit_err},
                {"chi2_reduced", sweep.chi2_reduced}}},
              {"sequences_used", sequences_used},
              {"bayes_equivalent_sequences", 8},
              {"sequence_cost_ratio",
               sequences_used > 0 ? static_cast<double>(sequences_used) / 8.0 : 0.0}};
}

// ----------------------------------------------------------------------------
// Mitigation results
// ----------------------------------------------------------------------------

inline json mitigation_result_to_json(const MitigationResult& r, int n_qubits,
                                      const std::vector<double>& raw_frequencies) {
  json probs = json::object();
  json raw = json::object();
  for (std::size_t s = 0; s < r.probabilities.size(); ++s) {
    std::string key(n_qubits, '0');
    for (int q = 0; q < n_qubits; ++q)
      if ((s >> (n_qubits - 1 - q)) & 1) key[q] = '1';
    probs[key] = r.probabilities[s];
    raw[key] = raw_frequencies[s];
  }
  return json{{"schema_version", kSchemaVersion},
              {"kind", "mitigation_result"},
              {"mitigated_probabilities", probs},
              {"raw_frequencies", raw},
              {"residual_norm", r.residual_norm},
              {"condition", r.condition},
              {"parity_expectation_raw", expectation_parity(raw_frequencies)},
              {"parity_expectation_mitigated", expectation_parity(r.probabilities)}};
}

}  // namespace qbayes::io
