// Copyright 2026 The cm2sim Authors
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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "cm2/classical.hpp"
#include "cm2/csv.hpp"
#include "cm2/dynamics.hpp"
#include "cm2/model.hpp"
#include "cm2/model_io.hpp"
#include "cm2/presets.hpp"
#include "cm2/rng.hpp"
#include "cm2/svg.hpp"
#include "cm2/thermo.hpp"
#include "cm2/version.hpp"

// Experiment drivers shared by the CLI and the test suite: ensemble
// averaging with deterministic parallel reduction, single-shot records,
// exact-enumeration ledgers with the verifier, and the classical hidden-
// Markov cross-check. Every output file carries the manifest hash of the
// run configuration, and identical configurations produce identical bytes
// regardless of worker count.

namespace cm2 {

/// Complete description of one run; everything that affects results is here
/// (worker count and output directory deliberately excluded).
struct RunConfig {
  std::string mode;        // ensemble | single-shot | exact | classical | validate
  std::string preset;      // one of preset_names(), or empty
  std::string model_file;  // JSON model path, or empty
  PresetParams params;
  int steps = 100;
  std::size_t n_traj = 2000;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool svg = false;
  int bins = 30;
  double prune = 1e-14;
  int threads = 0;  // 0: CM2_THREADS env var, else hardware concurrency
  int iss_window = 0;
  double eps_i = 0.0;
  double eps_g = 0.0;
  std::size_t max_branches = (1u << 22);
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline CM2Model resolve_model_unchecked(const RunConfig& cfg) {
  if (!cfg.preset.empty() && !cfg.model_file.empty())
    throw std::invalid_argument("give either --preset or --model, not both");
  if (cfg.preset.empty() && cfg.model_file.empty())
    throw std::invalid_argument("a model is required: --preset <name> or --model <file>");
  if (!cfg.preset.empty()) return make_preset(cfg.preset, cfg.params);
  return load_model(cfg.model_file);
}

inline CM2Model resolve_model(const RunConfig& cfg) {
  CM2Model m = resolve_model_unchecked(cfg);
  const ValidationReport rep = validate(m);
  if (!rep.pass())
    throw std::invalid_argument("model validation failed\n" + rep.to_string());
  return m;
}

/// A resolved run: the model, the manifest JSON, and its content hash.
struct ResolvedRun {
  RunConfig config;
  CM2Model model;
  Json manifest;
  std::string hash;
};

inline ResolvedRun prepare_run(const RunConfig& cfg) {
  ResolvedRun run{cfg, resolve_model(cfg), Json{}, {}};
  Json j;
  j["tool"] = "cm2";
  j["version"] = kVersion;
  j["mode"] = cfg.mode;
  j["preset"] = cfg.preset;
  j["model_file"] = cfg.model_file;
  j["params"] = Json{{"f", cfg.params.f},
                     {"g", cfg.params.g},
                     {"g1", cfg.params.g1},
                     {"g2", cfg.params.g2},
                     {"epsilon_mix", cfg.params.epsilon_mix}};
  j["steps"] = cfg.steps;
  j["n_traj"] = cfg.n_traj;
  j["seed"] = cfg.seed;
  j["bins"] = cfg.bins;
  j["prune"] = cfg.prune;
  j["iss_window"] = cfg.iss_window;
  j["eps_i"] = cfg.eps_i;
  j["eps_g"] = cfg.eps_g;
  j["svg"] = cfg.svg;
  j["max_branches"] = cfg.max_branches;
  j["model"] = model_to_json(run.model);
  run.hash = hex64(fnv1a64(j.dump()));
  j["manifest_hash"] = run.hash;
  run.manifest = j;
  return run;
}

/// Rebuild a run from a previously written manifest; the embedded model is
/// authoritative. The stored hash must match the recomputed one.
inline ResolvedRun run_from_manifest(const std::string& path, const std::string& mode,
                                     const std::string& out_dir) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open manifest '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw std::invalid_argument("manifest '" + path + "': " + e.what());
  }
  if (j.value("mode", "") != mode)
    throw std::invalid_argument("manifest mode '" + j.value("mode", "") +
                                "' does not match subcommand '" + mode + "'");
  RunConfig cfg;
  cfg.mode = mode;
  cfg.preset = j.value("preset", "");
  cfg.model_file = j.value("model_file", "");
  cfg.params.f = j["params"].value("f", 0.3);
  cfg.params.g = j["params"].value("g", 0.3);
  cfg.params.g1 = j["params"].value("g1", 0.3);
  cfg.params.g2 = j["params"].value("g2", 0.1);
  cfg.params.epsilon_mix = j["params"].value("epsilon_mix", 0.0);
  cfg.steps = j.value("steps", 100);
  cfg.n_traj = j.value("n_traj", std::size_t{2000});
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.bins = j.value("bins", 30);
  cfg.prune = j.value("prune", 1e-14);
  cfg.iss_window = j.value("iss_window", 0);
  cfg.eps_i = j.value("eps_i", 0.0);
  cfg.eps_g = j.value("eps_g", 0.0);
  cfg.svg = j.value("svg", false);
  cfg.max_branches = j.value("max_branches", std::size_t{1u << 22});
  cfg.out_dir = out_dir;

  ResolvedRun run;
  run.config = cfg;
  run.model = model_from_json(j.at("model"));
  const ValidationReport rep = validate(run.model);
  if (!rep.pass())
    throw std::invalid_argument("manifest model fails validation\n" + rep.to_string());
  Json check = j;
  check.erase("manifest_hash");
  run.hash = hex64(fnv1a64(check.dump()));
  if (run.hash != j.value("manifest_hash", ""))
    throw std::invalid_argument("manifest hash mismatch; file was edited");
  run.manifest = j;
  return run;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CM2_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Static contiguous partition of [0, n); results must be written to
/// per-index slots so that the reduction order is fixed afterwards.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& body) {
  const std::size_t nt =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t w = 0; w < nt; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
};

/// Ensemble estimate with deterministic batching. batch_sc / batch_sint are
/// (batches x steps+1) matrices of batch means; column t of batch_sint is
/// the entropy of the pre-measurement state at step t (column 0 unused).
struct EnsembleResult {
  ThermoSeries series;
  ISSReport iss;
  std::vector<double> s_u;  // unconditional entropies, t = 0..steps
  Eigen::MatrixXd batch_sc;
  Eigen::MatrixXd batch_sint;
  std::size_t n_traj = 0;
  int batches = 1;
};

/// Windowed mean and standard error from batch means over columns t0..t1.
inline MeanSE window_stats(const Eigen::MatrixXd& batch, int t0, int t1) {
  const int nb = static_cast<int>(batch.rows());
  Eigen::VectorXd per_batch = Eigen::VectorXd::Zero(nb);
  for (int b = 0; b < nb; ++b) {
    double acc = 0.0;
    for (int t = t0; t <= t1; ++t) acc += batch(b, t);
    per_batch(b) = acc / (t1 - t0 + 1);
  }
  MeanSE out;
  out.mean = per_batch.mean();
  if (nb > 1) {
    const double var = (per_batch.array() - out.mean).square().sum() / (nb - 1);
    out.se = std::sqrt(var / nb);
  }
  return out;
}

/// Per-batch gain series derived from the stored batch matrices.
inline Eigen::MatrixXd batch_gain(const EnsembleResult& r) {
  Eigen::MatrixXd g = r.batch_sint - r.batch_sc;
  g.col(0).setZero();
  return g;
}

/// Per-batch net-information-rate series.
inline Eigen::MatrixXd batch_dinfo(const EnsembleResult& r) {
  const int tmax = static_cast<int>(r.batch_sc.cols()) - 1;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(r.batch_sc.rows(), r.batch_sc.cols());
  for (int t = 1; t <= tmax; ++t)
    d.col(t) = (r.batch_sc.col(t - 1) - r.batch_sc.col(t)).array() +
               (r.s_u[static_cast<std::size_t>(t)] - r.s_u[static_cast<std::size_t>(t - 1)]);
  return d;
}

/// Monte-Carlo ledger series: unconditional quantities computed exactly,
/// record-averaged entropies sampled over n_traj independent trajectories.
inline EnsembleResult ensemble_series(const CM2Model& model, const RunConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("ensemble: steps must be >= 1");
  if (cfg.n_traj < 1) throw std::invalid_argument("ensemble: n_traj must be >= 1");
  const int tmax = cfg.steps;
  const std::size_t n = cfg.n_traj;
  const int nb = static_cast<int>(std::min<std::size_t>(20, n));

  const ThermoEngine eng(model);
  const bool cond_holds = eng.measurement_condition().holds;

  // Deterministic unconditional side.
  std::vector<FluxBreakdown> flux;
  flux.reserve(static_cast<std::size_t>(tmax));
  std::vector<double> s_u(static_cast<std::size_t>(tmax) + 1);
  CMatrix rho = model.rho_x0.matrix;
  s_u[0] = vn_entropy(rho);
  for (int t = 1; t <= tmax; ++t) {
    flux.push_back(eng.delta_sigma_u(rho));
    rho = flux.back().rho_next;
    s_u[static_cast<std::size_t>(t)] = vn_entropy(rho);
  }

  // Sampled side: per-trajectory entropies, reduced in index order.
  const std::size_t stride = static_cast<std::size_t>(tmax) + 1;
  std::vector<double> sc(n * stride), sint(n * stride, 0.0);
  const Collider& coll = eng.collider();
  const double s0 = s_u[0];
  parallel_for(n, resolve_threads(cfg.threads), [&](std::size_t i) {
    SplitMix64 rng = trajectory_stream(cfg.seed, i);
    CMatrix state = model.rho_x0.matrix;
    sc[i * stride] = s0;
    for (int t = 1; t <= tmax; ++t) {
      const SampleStep step = sample_step(state, coll, rng);
      sc[i * stride + static_cast<std::size_t>(t)] = vn_entropy(step.state);
      sint[i * stride + static_cast<std::size_t>(t)] = vn_entropy(step.intermediate);
      state = step.state;
    }
  });

  EnsembleResult out;
  out.n_traj = n;
  out.batches = nb;
  out.s_u = s_u;
  out.batch_sc = Eigen::MatrixXd::Zero(nb, tmax + 1);
  out.batch_sint = Eigen::MatrixXd::Zero(nb, tmax + 1);
  std::vector<double> mean_sc(stride, 0.0), mean_sint(stride, 0.0);
  std::vector<std::size_t> batch_count(static_cast<std::size_t>(nb), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int b = static_cast<int>(i % static_cast<std::size_t>(nb));
    ++batch_count[static_cast<std::size_t>(b)];
    for (std::size_t t = 0; t < stride; ++t) {
      mean_sc[t] += sc[i * stride + t];
      mean_sint[t] += sint[i * stride + t];
      out.batch_sc(b, static_cast<Eigen::Index>(t)) += sc[i * stride + t];
      out.batch_sint(b, static_cast<Eigen::Index>(t)) += sint[i * stride + t];
    }
  }
  for (std::size_t t = 0; t < stride; ++t) {
    mean_sc[t] /= static_cast<double>(n);
    mean_sint[t] /= static_cast<double>(n);
  }
  for (int b = 0; b < nb; ++b) {
    out.batch_sc.row(b) /= static_cast<double>(batch_count[static_cast<std::size_t>(b)]);
    out.batch_sint.row(b) /= static_cast<double>(batch_count[static_cast<std::size_t>(b)]);
  }
  auto col_se = [&](const Eigen::MatrixXd& m, int t) {
    if (nb < 2) return 0.0;
    const double mu = m.col(t).mean();
    const double var = (m.col(t).array() - mu).square().sum() / (nb - 1);
    return std::sqrt(var / nb);
  };

  out.series.s0 = s0;
  out.series.sample_count = n;
  const Eigen::MatrixXd bgain = out.batch_sint - out.batch_sc;
  double info_prev = 0.0, sig_u = 0.0, sig_c = 0.0;
  for (int t = 1; t <= tmax; ++t) {
    const FluxBreakdown& fl = flux[static_cast<std::size_t>(t - 1)];
    StepLedger led;
    led.t = t;
    led.s_u = s_u[static_cast<std::size_t>(t)];
    led.s_c = mean_sc[static_cast<std::size_t>(t)];
    led.se_sc = col_se(out.batch_sc, t);
    led.info = led.s_u - led.s_c;
    led.d_info = led.info - info_prev;
    led.gain = mean_sint[static_cast<std::size_t>(t)] - mean_sc[static_cast<std::size_t>(t)];
    led.loss = led.gain - led.d_info;
    led.se_gain = col_se(bgain, t);
    {
      Eigen::MatrixXd dcol = (out.batch_sc.col(t - 1) - out.batch_sc.col(t)).matrix();
      if (nb >= 2) {
        const double mu = dcol.mean();
        const double var = (dcol.array() - mu).square().sum() / (nb - 1);
        led.se_dinfo = std::sqrt(var / nb);
      }
    }
    led.d_sigma_u = fl.d_sigma_u;
    led.d_phi_u = fl.d_phi_u;
    led.unit_fluxes = fl.unit_fluxes;
    led.d_phi_c = eng.delta_phi_c(fl.rho_yprime).d_phi_c;
    led.d_sigma_c = cond_holds ? led.d_sigma_u - led.d_info
                               : std::numeric_limits<double>::quiet_NaN();
    sig_u += led.d_sigma_u;
    sig_c += led.d_sigma_c;
    led.sigma_u_int = sig_u;
    led.sigma_c_int = sig_c;
    out.series.steps.push_back(std::move(led));
    info_prev = out.series.steps.back().info;
  }

  out.iss = iss_detect(out.series, cfg.iss_window, cfg.eps_i, cfg.eps_g);
  if (out.iss.verdict == SteadyStateVerdict::iss)
    for (StepLedger& led : out.series.steps)
      if (led.t >= out.iss.window_start) led.iss_flag = true;
  return out;
}

namespace detail {

inline const std::vector<std::string>& series_columns() {
  static const std::vector<std::string> cols = {
      "t",        "S_u",      "S_c",   "SE_Sc",    "I",
      "dI",       "G",        "L",     "dSigma_u", "dSigma_c",
      "dPhi_u",   "dPhi_c",   "Sigma_u_int", "Sigma_c_int", "iss_flag"};
  return cols;
}

inline CsvBuilder series_csv(const ThermoSeries& series, const std::string& hash,
                             const std::string& mode) {
  CsvBuilder csv;
  csv.comment("cm2 " + mode + " ledger series; all entropic quantities in nats");
  csv.comment("version=" + std::string(kVersion));
  csv.comment("manifest=" + hash);
  csv.header(series_columns());
  csv.row({fmt_int(0), fmt_g17(series.s0), fmt_g17(series.s0), fmt_g17(0.0), fmt_g17(0.0),
           fmt_g17(0.0), fmt_g17(0.0), fmt_g17(0.0), fmt_g17(0.0), fmt_g17(0.0),
           fmt_g17(0.0), fmt_g17(0.0), fmt_g17(0.0), fmt_g17(0.0), fmt_int(0)});
  for (const StepLedger& s : series.steps)
    csv.row({fmt_int(s.t), fmt_g17(s.s_u), fmt_g17(s.s_c), fmt_g17(s.se_sc),
             fmt_g17(s.info), fmt_g17(s.d_info), fmt_g17(s.gain), fmt_g17(s.loss),
             fmt_g17(s.d_sigma_u), fmt_g17(s.d_sigma_c), fmt_g17(s.d_phi_u),
             fmt_g17(s.d_phi_c), fmt_g17(s.sigma_u_int), fmt_g17(s.sigma_c_int),
             fmt_int(s.iss_flag ? 1 : 0)});
  return csv;
}

inline std::vector<double> ledger_column(const ThermoSeries& s,
                                         double StepLedger::*field) {
  std::vector<double> v;
  v.reserve(s.steps.size());
  for (const StepLedger& led : s.steps) v.push_back(led.*field);
  return v;
}

inline std::vector<double> time_axis(const ThermoSeries& s) {
  std::vector<double> t;
  t.reserve(s.steps.size());
  for (const StepLedger& led : s.steps) t.push_back(led.t);
  return t;
}

inline void write_series_svgs(const ThermoSeries& series, const std::string& dir,
                              const std::string& hash) {
  const std::vector<double> t = time_axis(series);
  const std::string note = "manifest=" + hash;
  {
    LinePlot p("entropies", "t", "nats");
    p.add_series("S_u", t, ledger_column(series, &StepLedger::s_u));
    p.add_series("S_c", t, ledger_column(series, &StepLedger::s_c));
    p.write(join_path(dir, "entropies.svg"), note);
  }
  {
    LinePlot p("information rates", "t", "nats per collision");
    p.add_series("I", t, ledger_column(series, &StepLedger::info));
    p.add_series("dI", t, ledger_column(series, &StepLedger::d_info));
    p.add_series("G", t, ledger_column(series, &StepLedger::gain));
    p.add_series("L", t, ledger_column(series, &StepLedger::loss));
    p.write(join_path(dir, "information.svg"), note);
  }
  {
    LinePlot p("entropy production and flux", "t", "nats per collision");
    p.add_series("dSigma_u", t, ledger_column(series, &StepLedger::d_sigma_u));
    p.add_series("dSigma_c", t, ledger_column(series, &StepLedger::d_sigma_c));
    p.add_series("dPhi_u", t, ledger_column(series, &StepLedger::d_phi_u));
    p.add_series("dPhi_c", t, ledger_column(series, &StepLedger::d_phi_c));
    p.write(join_path(dir, "production.svg"), note);
  }
  {
    LinePlot p("integrated entropy production", "t", "nats");
    p.add_series("Sigma_u", t, ledger_column(series, &StepLedger::sigma_u_int));
    p.add_series("Sigma_c", t, ledger_column(series, &StepLedger::sigma_c_int));
    p.write(join_path(dir, "integrated.svg"), note);
  }
}

}  // namespace detail

/// Ensemble driver: writes series.csv and manifest.json (plus SVG plots on
/// request) into cfg.out_dir.
struct EnsembleRunOutput {
  EnsembleResult result;
  std::string hash;
  std::string series_path;
};

inline EnsembleRunOutput run_ensemble(const ResolvedRun& run) {
  std::filesystem::create_directories(run.config.out_dir);
  EnsembleRunOutput out;
  out.result = ensemble_series(run.model, run.config);
  out.hash = run.hash;
  out.series_path = join_path(run.config.out_dir, "series.csv");
  detail::series_csv(out.result.series, run.hash, "ensemble").write(out.series_path);
  write_text(join_path(run.config.out_dir, "manifest.json"), run.manifest.dump(2) + "\n");
  if (run.config.svg)
    detail::write_series_svgs(out.result.series, run.config.out_dir, run.hash);
  return out;
}

inline EnsembleRunOutput run_ensemble(const RunConfig& cfg) {
  return run_ensemble(prepare_run(cfg));
}

/// Evenly binned histogram of the finite samples.
struct HistogramData {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t finite_samples = 0;
};

inline HistogramData make_histogram(const std::vector<double>& xs, int bins) {
  HistogramData h;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs)
    if (std::isfinite(x)) {
      ++h.finite_samples;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (h.finite_samples == 0) return h;
  if (!(hi > lo)) hi = lo + 1.0;
  bins = std::max(bins, 1);
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k)
    h.edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double x : xs) {
    if (!std::isfinite(x)) continue;
    int k = static_cast<int>((x - lo) / (hi - lo) * bins);
    k = std::min(std::max(k, 0), bins - 1);
    ++h.counts[static_cast<std::size_t>(k)];
  }
  return h;
}

/// Mean of xs[discard..] with a standard error from contiguous time blocks;
/// honest for autocorrelated single-trajectory data.
inline MeanSE block_stats(const std::vector<double>& xs, std::size_t discard,
                          int blocks = 20) {
  MeanSE out;
  if (xs.size() <= discard) return out;
  const std::size_t n = xs.size() - discard;
  double total = 0.0;
  for (std::size_t i = discard; i < xs.size(); ++i) total += xs[i];
  out.mean = total / static_cast<double>(n);
  const int nb = std::min<int>(blocks, static_cast<int>(n));
  if (nb < 2) return out;
  Eigen::VectorXd bm = Eigen::VectorXd::Zero(nb);
  for (int b = 0; b < nb; ++b) {
    const std::size_t lo = discard + n * static_cast<std::size_t>(b) / static_cast<std::size_t>(nb);
    const std::size_t hi = discard + n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(nb);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += xs[i];
    bm(b) = acc / static_cast<double>(hi - lo);
  }
  const double mu = bm.mean();
  const double var = (bm.array() - mu).square().sum() / (nb - 1);
  out.se = std::sqrt(var / nb);
  return out;
}

/// One measured trajectory with its per-step ledger and accumulated
/// averages; vectors are indexed by t = 1..steps at position t-1.
struct SingleShotOutput {
  TrajectoryRecord record;
  std::vector<double> s_u;       // t = 0..steps
  std::vector<double> s_c, gain, d_info, d_sigma_u, d_sigma_c;
  std::vector<double> acc_sc, acc_gain, acc_dsc, acc_z;
  std::vector<std::array<double, 3>> bloch;  // empty unless the system is a qubit
  std::string hash;
};

inline SingleShotOutput run_single_shot(const ResolvedRun& run) {
  const RunConfig& cfg = run.config;
  if (cfg.steps < 1) throw std::invalid_argument("single-shot: steps must be >= 1");
  std::filesystem::create_directories(cfg.out_dir);
  const ThermoEngine eng(run.model);
  const bool cond_holds = eng.measurement_condition().holds;

  SingleShotOutput out;
  out.hash = run.hash;
  out.record = run_trajectory(run.model, cfg.steps, derive_seed(cfg.seed, 0));

  out.s_u.resize(static_cast<std::size_t>(cfg.steps) + 1);
  std::vector<FluxBreakdown> flux;
  flux.reserve(static_cast<std::size_t>(cfg.steps));
  CMatrix rho = run.model.rho_x0.matrix;
  out.s_u[0] = vn_entropy(rho);
  for (int t = 1; t <= cfg.steps; ++t) {
    flux.push_back(eng.delta_sigma_u(rho));
    rho = flux.back().rho_next;
    out.s_u[static_cast<std::size_t>(t)] = vn_entropy(rho);
  }

  const bool qubit = run.model.system_dim == 2;
  double acc_sc = 0.0, acc_gain = 0.0, acc_dsc = 0.0, acc_z = 0.0;
  double sc_prev = out.s_u[0];
  for (int t = 1; t <= cfg.steps; ++t) {
    const std::size_t k = static_cast<std::size_t>(t);
    const double sc = vn_entropy(out.record.states[k]);
    const double gain = vn_entropy(out.record.intermediates[k - 1]) - sc;
    const double dinfo = (out.s_u[k] - sc) - (out.s_u[k - 1] - sc_prev);
    const double dsu = flux[k - 1].d_sigma_u;
    const double dsc = cond_holds ? dsu - dinfo : std::numeric_limits<double>::quiet_NaN();
    out.s_c.push_back(sc);
    out.gain.push_back(gain);
    out.d_info.push_back(dinfo);
    out.d_sigma_u.push_back(dsu);
    out.d_sigma_c.push_back(dsc);
    acc_sc += sc;
    acc_gain += gain;
    acc_dsc += dsc;
    acc_z += out.record.outcomes[k - 1];
    out.acc_sc.push_back(acc_sc / t);
    out.acc_gain.push_back(acc_gain / t);
    out.acc_dsc.push_back(acc_dsc / t);
    out.acc_z.push_back(acc_z / t);
    if (qubit) {
      const CMatrix& st = out.record.states[k];
      out.bloch.push_back({(st * pauli_x()).trace().real(), (st * pauli_y()).trace().real(),
                           (st * pauli_z()).trace().real()});
    }
    sc_prev = sc;
  }

  // Main CSV.
  CsvBuilder csv;
  csv.comment("cm2 single-shot record; entropic quantities in nats");
  csv.comment("version=" + std::string(kVersion));
  csv.comment("manifest=" + run.hash);
  std::vector<std::string> cols = {"t",        "z",       "S_u",       "S_c",
                                   "G",        "dI",      "dSigma_u",  "dSigma_c",
                                   "acc_S_c",  "acc_G",   "acc_dSigma_c", "acc_Z"};
  if (qubit) {
    cols.push_back("bloch_x");
    cols.push_back("bloch_y");
    cols.push_back("bloch_z");
  }
  csv.header(cols);
  for (int t = 1; t <= cfg.steps; ++t) {
    const std::size_t k = static_cast<std::size_t>(t - 1);
    std::vector<std::string> row = {
        fmt_int(t),
        fmt_int(out.record.outcomes[k]),
        fmt_g17(out.s_u[static_cast<std::size_t>(t)]),
        fmt_g17(out.s_c[k]),
        fmt_g17(out.gain[k]),
        fmt_g17(out.d_info[k]),
        fmt_g17(out.d_sigma_u[k]),
        fmt_g17(out.d_sigma_c[k]),
        fmt_g17(out.acc_sc[k]),
        fmt_g17(out.acc_gain[k]),
        fmt_g17(out.acc_dsc[k]),
        fmt_g17(out.acc_z[k])};
    if (qubit) {
      row.push_back(fmt_g17(out.bloch[k][0]));
      row.push_back(fmt_g17(out.bloch[k][1]));
      row.push_back(fmt_g17(out.bloch[k][2]));
    }
    csv.row(row);
  }
  csv.write(join_path(cfg.out_dir, "single_shot.csv"));
  write_text(join_path(cfg.out_dir, "manifest.json"), run.manifest.dump(2) + "\n");

  // Histograms of the stationary stretch; the first 20 points are warm-up.
  const std::size_t discard = 20;
  auto write_hist = [&](const std::string& stem, const std::vector<double>& xs,
                        const std::string& label) {
    std::vector<double> tail(xs.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(discard, xs.size())),
                             xs.end());
    const HistogramData h = make_histogram(tail, cfg.bins);
    CsvBuilder hc;
    hc.comment("cm2 single-shot histogram of " + label + "; first " +
               std::to_string(discard) + " points discarded");
    hc.comment("manifest=" + run.hash);
    hc.header({"bin_lo", "bin_hi", "count"});
    if (h.finite_samples == 0) hc.comment("no finite samples");
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      hc.row({fmt_g17(h.edges[i]), fmt_g17(h.edges[i + 1]), fmt_int(static_cast<long long>(h.counts[i]))});
    hc.write(join_path(cfg.out_dir, "hist_" + stem + ".csv"));
    if (cfg.svg && h.finite_samples > 0)
      write_text(join_path(cfg.out_dir, "hist_" + stem + ".svg"),
                 render_histogram(label, label, h.edges, h.counts, "manifest=" + run.hash));
  };
  std::vector<double> z_vals;
  for (int z : out.record.outcomes) z_vals.push_back(z);
  write_hist("S_c", out.s_c, "S_c");
  write_hist("G", out.gain, "G");
  write_hist("dSigma_c", out.d_sigma_c, "dSigma_c");
  write_hist("z", z_vals, "z");

  if (cfg.svg) {
    const std::string note = "manifest=" + run.hash;
    std::vector<double> ts;
    for (int t = 1; t <= cfg.steps; ++t) ts.push_back(t);
    std::vector<double> su1(out.s_u.begin() + 1, out.s_u.end());
    {
      LinePlot p("single-shot conditional entropy", "t", "nats");
      p.add_series("S_c", ts, out.s_c);
      p.add_series("acc mean", ts, out.acc_sc);
      p.add_series("S_u", ts, su1);
      p.write(join_path(cfg.out_dir, "ss_entropy.svg"), note);
    }
    {
      LinePlot p("single-shot gain", "t", "nats per collision");
      p.add_series("G", ts, out.gain);
      p.add_series("acc mean", ts, out.acc_gain);
      p.write(join_path(cfg.out_dir, "ss_gain.svg"), note);
    }
    {
      LinePlot p("single-shot entropy production", "t", "nats per collision");
      p.add_series("dSigma_c", ts, out.d_sigma_c);
      p.add_series("acc mean", ts, out.acc_dsc);
      p.add_series("dSigma_u", ts, out.d_sigma_u);
      p.write(join_path(cfg.out_dir, "ss_sigma.svg"), note);
    }
    {
      LinePlot p("accumulated click average", "t", "Z_t");
      p.add_series("Z_t", ts, out.acc_z);
      p.write(join_path(cfg.out_dir, "ss_clicks.svg"), note);
    }
    if (qubit) {
      LinePlot p("Bloch trajectory", "x", "z");
      std::vector<double> bx, bz;
      for (const auto& b : out.bloch) {
        bx.push_back(b[0]);
        bz.push_back(b[2]);
      }
      p.add_series("(x, z)", bx, bz);
      p.write(join_path(cfg.out_dir, "ss_bloch.svg"), note);
    }
  }
  return out;
}

inline SingleShotOutput run_single_shot(const RunConfig& cfg) {
  return run_single_shot(prepare_run(cfg));
}

/// Exact-enumeration driver: full ledger CSV, verifier report with margins,
/// and the steady-state verdict.
struct ExactRunOutput {
  ExactLedgerResult ledger;
  ISSReport iss;
  bool verifier_pass = false;
  std::string hash;
  std::string report_path;
};

inline ExactRunOutput run_exact(const ResolvedRun& run) {
  const RunConfig& cfg = run.config;
  std::filesystem::create_directories(cfg.out_dir);
  ExactRunOutput out;
  out.hash = run.hash;
  out.ledger = exact_ledger(run.model, cfg.steps, cfg.prune, cfg.max_branches);
  out.iss = iss_detect(out.ledger.series, cfg.iss_window, cfg.eps_i, cfg.eps_g);
  if (out.iss.verdict == SteadyStateVerdict::iss)
    for (StepLedger& led : out.ledger.series.steps)
      if (led.t >= out.iss.window_start) led.iss_flag = true;
  out.verifier_pass = out.ledger.all_pass();

  const std::size_t n_units = run.model.ancilla.n_units();
  CsvBuilder csv;
  csv.comment("cm2 exact ledger series; all entropic quantities in nats");
  csv.comment("version=" + std::string(kVersion));
  csv.comment("manifest=" + run.hash);
  std::vector<std::string> cols = {"t",       "S_u",      "S_c",      "I",
                                   "dI",      "G",        "L",        "dSigma_u",
                                   "dSigma_c", "dPhi_u",  "dPhi_c"};
  for (std::size_t j = 0; j < n_units; ++j) cols.push_back("dPhi_u_unit" + std::to_string(j));
  for (const char* extra : {"Sigma_u_int", "Sigma_c_int", "bound_rhs", "bound_rhs_zt",
                            "n_branches", "discarded_mass", "iss_flag"})
    cols.push_back(extra);
  csv.header(cols);
  for (const StepLedger& s : out.ledger.series.steps) {
    std::vector<std::string> row = {fmt_int(s.t),        fmt_g17(s.s_u),
                                    fmt_g17(s.s_c),      fmt_g17(s.info),
                                    fmt_g17(s.d_info),   fmt_g17(s.gain),
                                    fmt_g17(s.loss),     fmt_g17(s.d_sigma_u),
                                    fmt_g17(s.d_sigma_c), fmt_g17(s.d_phi_u),
                                    fmt_g17(s.d_phi_c)};
    for (std::size_t j = 0; j < n_units; ++j)
      row.push_back(fmt_g17(j < s.unit_fluxes.size() ? s.unit_fluxes[j] : 0.0));
    const BranchEnsemble& ens = out.ledger.ensembles[static_cast<std::size_t>(s.t)];
    row.push_back(fmt_g17(s.sigma_u_int));
    row.push_back(fmt_g17(s.sigma_c_int));
    row.push_back(fmt_g17(s.bound_rhs_prev));
    row.push_back(fmt_g17(s.bound_rhs_curr));
    row.push_back(fmt_int(static_cast<long long>(ens.branches.size())));
    row.push_back(fmt_g17(ens.discarded_mass));
    row.push_back(fmt_int(s.iss_flag ? 1 : 0));
    csv.row(row);
  }
  csv.write(join_path(cfg.out_dir, "exact_series.csv"));

  out.report_path = join_path(cfg.out_dir, "verifier.txt");
  write_text(out.report_path, "manifest=" + run.hash + "\n" + out.iss.to_string() + "\n" +
                                  out.ledger.report());
  write_text(join_path(cfg.out_dir, "manifest.json"), run.manifest.dump(2) + "\n");
  if (cfg.svg) detail::write_series_svgs(out.ledger.series, cfg.out_dir, run.hash);
  return out;
}

inline ExactRunOutput run_exact(const RunConfig& cfg) { return run_exact(prepare_run(cfg)); }

/// Quantum-vs-classical record-probability cross-check for conditionally
/// incoherent models with a diagonal initial system state.
struct ClassicalCrosscheckOutput {
  bool refused = false;
  std::string refusal;
  double max_diff = 0.0;
  double classical_total = 0.0;
  std::size_t n_records = 0;
  bool pass = false;
  std::string hash;
};

inline ClassicalCrosscheckOutput run_classical_crosscheck(const ResolvedRun& run) {
  const RunConfig& cfg = run.config;
  std::filesystem::create_directories(cfg.out_dir);
  ClassicalCrosscheckOutput out;
  out.hash = run.hash;

  const ConditionalIncoherence ci = check_conditionally_incoherent(run.model);
  if (!ci.ok) {
    out.refused = true;
    out.refusal = ci.violated;
  } else {
    CMatrix off = run.model.rho_x0.matrix;
    off.diagonal().setZero();
    if (max_abs(off) > 1e-12) {
      out.refused = true;
      out.refusal = "initial system state not diagonal";
    }
  }

  std::string report = "manifest=" + out.hash + "\n";
  if (!out.refused) {
    // Keep every branch with nonzero probability; pruning would show up as a
    // spurious quantum-classical mismatch.
    const std::vector<BranchEnsemble> ens =
        enumerate_exact(run.model, cfg.steps, 1e-300, cfg.max_branches);
    const TransitionW w = build_W(run.model);
    const Eigen::VectorXd p_x0 = run.model.rho_x0.matrix.diagonal().real();

    std::unordered_map<std::uint64_t, double> quantum;
    const int nz = w.n_outcomes();
    auto key_of = [nz](const std::vector<int>& outcomes) {
      std::uint64_t key = 0;
      for (int z : outcomes) key = key * static_cast<std::uint64_t>(nz) +
                                   static_cast<std::uint64_t>(z);
      return key;
    };
    for (const Branch& b : ens.back().branches) quantum[key_of(b.outcomes)] = b.prob;

    std::vector<int> record(static_cast<std::size_t>(cfg.steps), 0);
    bool done = false;
    while (!done) {
      const HmmResult h = hmm_forward(w, p_x0, record);
      out.classical_total += h.prob;
      const auto it = quantum.find(key_of(record));
      const double qp = it == quantum.end() ? 0.0 : it->second;
      out.max_diff = std::max(out.max_diff, std::abs(qp - h.prob));
      ++out.n_records;
      done = true;
      for (std::size_t k = record.size(); k-- > 0;) {
        if (++record[k] < nz) {
          done = false;
          break;
        }
        record[k] = 0;
      }
      if (record.empty()) break;
    }
    out.pass = out.max_diff < 1e-12;
    report += "records=" + std::to_string(out.n_records) + "\n";
    report += "max_abs_diff=" + fmt_g17(out.max_diff) + "\n";
    report += "classical_total=" + fmt_g17(out.classical_total) + "\n";
    report += std::string("verdict=") + (out.pass ? "PASS" : "FAIL") + "\n";
  } else {
    report += "refused: " + out.refusal + "\n";
  }
  write_text(join_path(cfg.out_dir, "classical_report.txt"), report);
  write_text(join_path(cfg.out_dir, "manifest.json"), run.manifest.dump(2) + "\n");
  return out;
}

inline ClassicalCrosscheckOutput run_classical_crosscheck(const RunConfig& cfg) {
  return run_classical_crosscheck(prepare_run(cfg));
}

}  // namespace cm2
