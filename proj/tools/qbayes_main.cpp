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

// Command-line front end: simulate -> estimate -> mitigate workflows driven
// by a strict JSON config. All randomness flows from explicit seeds in the
// config (or the --seed override); repeated runs produce byte-identical
// output files for any worker count.
//
// Exit codes: 0 success, 2 config/validation error, 3 estimation failure.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qbayes/io.hpp"
#include "qbayes/qbayes.hpp"

namespace {

using json = nlohmann::json;
using namespace qbayes;

// ----------------------------------------------------------------------------
// Strict config parsing
// ----------------------------------------------------------------------------

void reject_unknown_keys(const json& node, const std::string& path,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : node.items())
    if (!allowed.count(key))
      throw std::invalid_argument("unknown field " + path + "." + key);
}

const json& require_field(const json& node, const std::string& path, const std::string& key) {
  if (!node.contains(key)) throw std::invalid_argument("missing field " + path + "." + key);
  return node[key];
}

double get_number(const json& node, const std::string& path, const std::string& key) {
  const json& v = require_field(node, path, key);
  if (!v.is_number()) throw std::invalid_argument("field " + path + "." + key + " must be a number");
  return v.get<double>();
}

double get_number_or(const json& node, const std::string& path, const std::string& key,
                     double fallback) {
  if (!node.contains(key)) return fallback;
  return get_number(node, path, key);
}

std::uint64_t get_uint(const json& node, const std::string& path, const std::string& key) {
  const json& v = require_field(node, path, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw std::invalid_argument("field " + path + "." + key + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::uint64_t get_uint_or(const json& node, const std::string& path, const std::string& key,
                          std::uint64_t fallback) {
  if (!node.contains(key)) return fallback;
  return get_uint(node, path, key);
}

std::string get_string(const json& node, const std::string& path, const std::string& key) {
  const json& v = require_field(node, path, key);
  if (!v.is_string()) throw std::invalid_argument("field " + path + "." + key + " must be a string");
  return v.get<std::string>();
}

bool get_bool_or(const json& node, const std::string& path, const std::string& key, bool fallback) {
  if (!node.contains(key)) return fallback;
  const json& v = node[key];
  if (!v.is_boolean()) throw std::invalid_argument("field " + path + "." + key + " must be a bool");
  return v.get<bool>();
}

FullParams parse_truth(const json& node, const std::string& path) {
  if (!node.is_object()) throw std::invalid_argument("field " + path + " must be an object");
  reject_unknown_keys(node, path, {"x0", "y0", "z0", "pi0", "piz", "theta", "eps"});
  FullParams t;
  t.spam.x0 = get_number(node, path, "x0");
  t.spam.y0 = get_number(node, path, "y0");
  t.spam.z0 = get_number(node, path, "z0");
  t.spam.pi0 = get_number(node, path, "pi0");
  t.spam.piz = get_number(node, path, "piz");
  t.theta = get_number_or(node, path, "theta", 0.0);
  t.eps = get_number_or(node, path, "eps", 0.0);
  if (!t.is_valid()) throw std::invalid_argument("field " + path + ": unphysical truth parameters");
  return t;
}

std::vector<GateOp> parse_sequences(const json& node, const std::string& path) {
  if (!node.is_array() || node.empty())
    throw std::invalid_argument("field " + path + " must be a non-empty array of gate strings");
  std::vector<GateOp> out;
  for (const auto& v : node) {
    if (!v.is_string()) throw std::invalid_argument("field " + path + ": entries must be strings");
    out.push_back(parse_gate(v.get<std::string>()));
  }
  return out;
}

PriorBox parse_prior_box(const json& node, const std::string& path, ParamModel kind) {
  PriorBox box = kind == ParamModel::Full7 ? PriorBox::full_default() : PriorBox::spam_default();
  if (node.is_null()) return box;
  if (!node.is_object()) throw std::invalid_argument("field " + path + " must be an object");
  for (const auto& [key, value] : node.items()) {
    const int axis = box.axis_index(key);
    if (axis < 0) throw std::invalid_argument("unknown prior axis " + path + "." + key);
    if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number())
      throw std::invalid_argument("field " + path + "." + key + " must be [lo, hi]");
    box.axes[axis].lo = value[0].get<double>();
    box.axes[axis].hi = value[1].get<double>();
  }
  box.validate();
  return box;
}

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<int> threads;
  std::string out_dir = ".";
};

EstimateConfig parse_estimate_config(const json& node, const std::string& path, ParamModel kind,
                                     const CliOverrides& cli) {
  EstimateConfig cfg;
  cfg.seed = cli.seed ? *cli.seed : get_uint(node, path, "seed");
  cfg.n_samples = cli.samples ? *cli.samples : get_uint_or(node, path, "n_samples", 5'000'000);
  if (cfg.n_samples < 1 || cfg.n_samples > kMaxSamplesPreset)
    throw std::invalid_argument("field " + path + ".n_samples outside [1, 80000000]");
  cfg.histogram_bins = static_cast<int>(get_uint_or(node, path, "bins", 64));
  if (cfg.histogram_bins < 1 || cfg.histogram_bins > 4096)
    throw std::invalid_argument("field " + path + ".bins outside [1, 4096]");
  cfg.refine = get_bool_or(node, path, "refine", true);
  cfg.threads = cli.threads ? *cli.threads : 0;
  if (node.contains("prior_box")) cfg.box = parse_prior_box(node["prior_box"], path + ".prior_box", kind);
  return cfg;
}

// ----------------------------------------------------------------------------
// Shared output helpers
// ----------------------------------------------------------------------------

void print_summary_lines(const PosteriorSummary& s) {
  for (std::size_t a = 0; a < s.names.size(); ++a)
    std::printf("%-6s = %+.6g +- %.3g%s\n", s.names[a].c_str(), s.mean[a], s.std_err[a],
                a >= s.n_primary ? "  (derived)" : "");
  std::printf("ess = %.1f of %zu samples\n", s.ess, s.n_samples);
}

void write_summary_outputs(const PosteriorSummary& s, const std::string& dir,
                           const std::string& name, json extra = json::object()) {
  json doc = io::summary_to_json(s);
  for (auto& [k, v] : extra.items()) doc[k] = v;
  io::write_text_file(dir + "/" + name + ".summary.json", doc.dump(2) + "\n");
  io::write_marginals_csv(s, dir, name);
}

CountRecord load_counts(const std::string& path) {
  return io::count_record_from_json(io::parse_json(io::read_text_file(path), path));
}

// ----------------------------------------------------------------------------
// Modes
// ----------------------------------------------------------------------------

int run_simulate(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "truth", "sequences",
                                 "shots", "seed"});
  const FullParams truth = parse_truth(require_field(cfg, "$", "truth"), "$.truth");
  ExperimentPlan plan;
  plan.sequences = parse_sequences(require_field(cfg, "$", "sequences"), "$.sequences");
  plan.shots = get_uint(cfg, "$", "shots");
  plan.seed = cli.seed ? *cli.seed : get_uint(cfg, "$", "seed");
  const CountRecord rec = run_experiment(truth, plan);
  io::write_text_file(cli.out_dir + "/" + name + ".counts.json",
                      io::count_record_to_json(rec).dump(2) + "\n");
  for (const auto& e : rec.entries)
    std::printf("%-8s %llu / %llu\n", to_string(e.sequence).c_str(),
                static_cast<unsigned long long>(e.zeros),
                static_cast<unsigned long long>(e.shots));
  return 0;
}

int run_estimate_spam(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "counts_path", "seed",
                                 "n_samples", "bins", "refine", "prior_box"});
  const CountRecord counts = load_counts(get_string(cfg, "$", "counts_path"));
  const EstimateConfig ecfg = parse_estimate_config(cfg, "$", ParamModel::Spam5, cli);
  const PosteriorSummary s = estimate_spam(counts, ecfg);
  print_summary_lines(s);
  write_summary_outputs(s, cli.out_dir, name);
  return 0;
}

int run_estimate_full(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "counts_path", "seed",
                                 "n_samples", "bins", "refine", "prior_box"});
  const CountRecord counts = load_counts(get_string(cfg, "$", "counts_path"));
  const EstimateConfig ecfg = parse_estimate_config(cfg, "$", ParamModel::Full7, cli);
  const PosteriorSummary s = estimate_full(counts, ecfg);
  print_summary_lines(s);
  write_summary_outputs(s, cli.out_dir, name);
  return 0;
}

int run_estimate_povm_mle(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "counts_path"});
  const CountRecord counts = load_counts(get_string(cfg, "$", "counts_path"));
  const PovmMleResult r = estimate_povm_mle(FourProbEstimates::from_counts(counts));
  io::write_text_file(cli.out_dir + "/" + name + ".povm.json",
                      io::povm_mle_to_json(r).dump(2) + "\n");
  std::printf("pi0 = %+.6g +- %.3g\n", r.estimate.pi0, std::sqrt(r.var_pi0));
  std::printf("piz = %+.6g +- %.3g\n", r.estimate.piz, std::sqrt(r.var_piz));
  std::printf("pix = %+.6g +- %.3g\n", r.estimate.pix, std::sqrt(r.var_pix));
  std::printf("piy = %+.6g +- %.3g\n", r.estimate.piy, std::sqrt(r.var_piy));
  std::printf("positivity %s (slack %.3g)\n", r.constraints_ok ? "ok" : "VIOLATED",
              r.constraint_slack);
  return 0;
}

int run_mitigate(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$",
                      {"schema_version", "kind", "name", "mode", "counts_path", "readout"});
  const io::BitstringCounts bc = io::bitstring_counts_from_json(
      io::parse_json(io::read_text_file(get_string(cfg, "$", "counts_path")), "counts_path"));

  const json& readout = require_field(cfg, "$", "readout");
  if (!readout.is_object()) throw std::invalid_argument("field $.readout must be an object");
  reject_unknown_keys(readout, "$.readout", {"eps_pairs", "povm", "estimates"});
  std::vector<std::pair<double, double>> eps;
  if (readout.contains("eps_pairs")) {
    for (const auto& pair : readout["eps_pairs"]) {
      if (!pair.is_array() || pair.size() != 2)
        throw std::invalid_argument("field $.readout.eps_pairs: entries must be [eps0, eps1]");
      eps.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
  } else if (readout.contains("povm")) {
    for (const auto& q : readout["povm"]) {
      reject_unknown_keys(q, "$.readout.povm[]", {"pi0", "piz"});
      eps.push_back(readout_eps(get_number(q, "$.readout.povm[]", "pi0"),
                                get_number(q, "$.readout.povm[]", "piz")));
    }
  } else if (readout.contains("estimates")) {
    // One estimates file per qubit, as produced by estimate-spam/-full
    // (posterior_summary) or estimate-povm-mle (povm_mle).
    for (const auto& path_node : readout["estimates"]) {
      if (!path_node.is_string())
        throw std::invalid_argument("field $.readout.estimates: entries must be file paths");
      const std::string path = path_node.get<std::string>();
      const json doc = io::parse_json(io::read_text_file(path), path);
      double pi0 = 0.0, piz = 0.0;
      if (doc.value("kind", "") == "povm_mle") {
        pi0 = doc.at("pi0").get<double>();
        piz = doc.at("piz").get<double>();
      } else if (doc.value("kind", "") == "posterior_summary") {
        bool saw0 = false, sawz = false;
        for (const auto& p : doc.at("parameters")) {
          if (p.at("name") == "pi0") {
            pi0 = p.at("mean").get<double>();
            saw0 = true;
          } else if (p.at("name") == "piz") {
            piz = p.at("mean").get<double>();
            sawz = true;
          }
        }
        if (!saw0 || !sawz)
          throw std::invalid_argument(path + ": summary lacks pi0/piz parameters");
      } else {
        throw std::invalid_argument(path + ": expected a povm_mle or posterior_summary document");
      }
      eps.push_back(readout_eps(pi0, piz));
    }
  } else {
    throw std::invalid_argument("field $.readout needs eps_pairs, povm, or estimates");
  }
  if (eps.size() != static_cast<std::size_t>(bc.n_qubits))
    throw std::invalid_argument("readout list length does not match the bitstring width");

  const MitigationMatrix m = assemble_mitigation_matrix(eps);
  const MitigationResult r = mitigate_counts(bc.counts, m);
  double total = 0.0;
  for (double c : bc.counts) total += c;
  std::vector<double> raw(bc.counts.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = bc.counts[i] / total;
  io::write_text_file(cli.out_dir + "/" + name + ".mitigated.json",
                      io::mitigation_result_to_json(r, bc.n_qubits, raw).dump(2) + "\n");
  std::printf("parity expectation raw       = %+.6f\n", expectation_parity(raw));
  std::printf("parity expectation mitigated = %+.6f\n", expectation_parity(r.probabilities));
  std::printf("residual norm = %.3g, condition = %.3g\n", r.residual_norm, r.condition);
  return 0;
}

int run_pingpong(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "curves_csv", "truth",
                                 "sweep", "seed"});
  std::vector<PingPongCurve> curves;
  std::size_t sequences_used = 0;
  if (cfg.contains("curves_csv")) {
    curves = io::pingpong_curves_from_csv(io::read_text_file(get_string(cfg, "$", "curves_csv")));
    for (const auto& c : curves) sequences_used += c.reps.size();
  } else {
    const FullParams truth = parse_truth(require_field(cfg, "$", "truth"), "$.truth");
    PingPongSweepConfig sweep;
    if (cfg.contains("sweep")) {
      const json& sw = cfg["sweep"];
      reject_unknown_keys(sw, "$.sweep", {"amplitudes", "j_list", "shots", "coupling"});
      if (sw.contains("amplitudes")) {
        sweep.amplitudes.clear();
        for (const auto& a : sw["amplitudes"]) sweep.amplitudes.push_back(a.get<double>());
      }
      if (sw.contains("j_list")) {
        sweep.j_list.clear();
        for (const auto& j : sw["j_list"]) sweep.j_list.push_back(j.get<int>());
      }
      sweep.shots = get_uint_or(sw, "$.sweep", "shots", sweep.shots);
      sweep.coupling = get_number_or(sw, "$.sweep", "coupling", sweep.coupling);
    }
    const std::uint64_t seed = cli.seed ? *cli.seed : get_uint(cfg, "$", "seed");
    const PingPongSweepResult res = run_pingpong_sweep(truth, sweep, seed);
    io::write_text_file(cli.out_dir + "/" + name + ".pingpong_curves.csv",
                        io::pingpong_curves_to_csv(res.curves));
    io::write_text_file(
        cli.out_dir + "/" + name + ".pingpong.json",
        io::pingpong_result_to_json(res.fits, res.curves, res.sweep, res.sequences_used).dump(2) +
            "\n");
    std::printf("theta(A=1) = %+.6g +- %.3g\n", res.sweep.theta_at_unit,
                res.sweep.theta_at_unit_err);
    std::printf("sequences used: %zu (x%.1f the 8-sequence Bayesian experiment)\n",
                res.sequences_used, static_cast<double>(res.sequences_used) / 8.0);
    return 0;
  }

  // Fit-only path from a curves CSV.
  std::vector<PingPongFit> fits;
  std::vector<AmpPoint> points;
  for (const auto& c : curves) {
    const PingPongFit f = fit_pingpong(c);
    points.push_back({c.amplitude, f.theta, f.theta_err});
    fits.push_back(f);
  }
  AmplitudeSweepFit sweep_fit;
  if (points.size() >= 5) {
    sweep_fit = fit_theta_vs_amplitude(points);
  } else if (points.size() == 1) {
    sweep_fit.theta_at_unit = points[0].theta;
    sweep_fit.theta_at_unit_err = points[0].theta_err;
  } else {
    throw std::invalid_argument("pingpong: need 1 curve or >= 5 amplitudes for the sweep fit");
  }
  io::write_text_file(
      cli.out_dir + "/" + name + ".pingpong.json",
      io::pingpong_result_to_json(fits, curves, sweep_fit, sequences_used).dump(2) + "\n");
  std::printf("theta(A=1) = %+.6g +- %.3g\n", sweep_fit.theta_at_unit, sweep_fit.theta_at_unit_err);
  std::printf("sequences used: %zu\n", sequences_used);
  return 0;
}

int run_closed_loop(const json& cfg, const CliOverrides& cli, const std::string& name) {
  reject_unknown_keys(cfg, "$", {"schema_version", "kind", "name", "mode", "truth", "model",
                                 "n_rep", "shots", "seed", "n_samples", "bins", "refine",
                                 "prior_box"});
  const FullParams truth = parse_truth(require_field(cfg, "$", "truth"), "$.truth");
  const std::string model = get_string(cfg, "$", "model");
  if (model != "spam" && model != "full")
    throw std::invalid_argument("field $.model must be \"spam\" or \"full\"");
  const ParamModel kind = model == "full" ? ParamModel::Full7 : ParamModel::Spam5;

  ExperimentPlan plan;
  plan.shots = get_uint(cfg, "$", "shots");
  plan.seed = cli.seed ? *cli.seed : get_uint(cfg, "$", "seed");
  plan.sequences = kind == ParamModel::Full7
                       ? eight_gate_plan(static_cast<int>(get_uint_or(cfg, "$", "n_rep", 8)))
                       : six_gate_plan();
  const CountRecord rec = run_experiment(truth, plan);
  io::write_text_file(cli.out_dir + "/" + name + ".counts.json",
                      io::count_record_to_json(rec).dump(2) + "\n");

  EstimateConfig ecfg = parse_estimate_config(cfg, "$", kind, cli);
  ecfg.seed = mix64(plan.seed + 0x51D);  // decouple estimation from simulation
  if (cli.seed) ecfg.seed = mix64(*cli.seed + 0x51D);
  const PosteriorSummary s =
      kind == ParamModel::Full7 ? estimate_full(rec, ecfg) : estimate_spam(rec, ecfg);

  const double tr[7] = {truth.spam.x0, truth.spam.y0, truth.spam.z0, truth.spam.pi0,
                        truth.spam.piz, truth.theta, truth.eps};
  json recovery = json::array();
  bool all_ok = true;
  for (std::size_t a = 0; a < s.n_primary; ++a) {
    const double z = s.std_err[a] > 0.0 ? (s.mean[a] - tr[a]) / s.std_err[a] : 0.0;
    const bool ok = std::fabs(s.mean[a] - tr[a]) <= 3.0 * s.std_err[a];
    all_ok = all_ok && ok;
    recovery.push_back({{"name", s.names[a]}, {"truth", tr[a]}, {"z", z}, {"within_3_sigma", ok}});
    std::printf("%-6s = %+.6g +- %.3g   truth %+.6g   z %+5.2f   %s\n", s.names[a].c_str(),
                s.mean[a], s.std_err[a], tr[a], z, ok ? "ok" : "MISS");
  }
  std::printf("ess = %.1f of %zu samples; recovery %s\n", s.ess, s.n_samples,
              all_ok ? "ok" : "INCOMPLETE");
  write_summary_outputs(s, cli.out_dir, name, json{{"recovery", recovery}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qbayes: Bayesian estimation and mitigation of single-qubit SPAM and gate errors"};
  std::string config_path;
  CliOverrides cli;
  std::uint64_t seed_flag = 0;
  std::uint64_t samples_flag = 0;
  int threads_flag = 0;
  app.add_option("--config", config_path, "Path to the JSON run configuration")->required();
  auto* seed_opt = app.add_option("--seed", seed_flag, "Override the config seed");
  auto* samples_opt = app.add_option("--samples", samples_flag, "Override the sample count");
  auto* threads_opt = app.add_option("--threads", threads_flag, "Worker threads (0 = hardware)");
  app.add_option("--out", cli.out_dir, "Output directory (default: current)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed_opt->count() > 0) cli.seed = seed_flag;
    if (samples_opt->count() > 0) cli.samples = samples_flag;
    if (threads_opt->count() > 0) cli.threads = threads_flag;

    std::filesystem::create_directories(cli.out_dir);
    const json cfg = io::parse_json(io::read_text_file(config_path), config_path);
    if (!cfg.is_object()) throw std::invalid_argument("config must be a JSON object");
    if (!cfg.contains("schema_version") || cfg["schema_version"] != io::kSchemaVersion)
      throw std::invalid_argument("config: missing or unsupported schema_version");
    const std::string mode = get_string(cfg, "$", "mode");
    std::string name = "run";
    if (cfg.contains("name")) name = get_string(cfg, "$", "name");
    if (name.empty() || name.find('/') != std::string::npos)
      throw std::invalid_argument("field $.name must be a plain file stem");

    if (mode == "simulate") return run_simulate(cfg, cli, name);
    if (mode == "estimate-spam") return run_estimate_spam(cfg, cli, name);
    if (mode == "estimate-full") return run_estimate_full(cfg, cli, name);
    if (mode == "estimate-povm-mle") return run_estimate_povm_mle(cfg, cli, name);
    if (mode == "mitigate") return run_mitigate(cfg, cli, name);
    if (mode == "pingpong") return run_pingpong(cfg, cli, name);
    if (mode == "closed-loop") return run_closed_loop(cfg, cli, name);
    throw std::invalid_argument("unknown mode '" + mode + "'");
  } catch (const EstimationError& e) {
    std::fprintf(stderr, "estimation error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
