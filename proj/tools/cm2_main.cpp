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

// Command-line front end. Exit codes: 0 success, 1 invalid input or
// refusal (bad flags, model validation failure, cross-check preconditions
// not met), 2 numerical verification failure (exact-ledger verifier or
// quantum-vs-classical mismatch).

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "cm2/driver.hpp"

namespace {

struct CommonOpts {
  cm2::RunConfig cfg;
  std::string manifest;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* model_opt = nullptr;
  CLI::Option* preset_opt = nullptr;
};

void add_model_options(CLI::App* sub, CommonOpts& o) {
  o.model_opt = sub->add_option("--model", o.cfg.model_file, "model description JSON file");
  o.preset_opt = sub->add_option("--preset", o.cfg.preset, "built-in model family")
                     ->check(CLI::IsMember(cm2::preset_names()));
  sub->add_option("--f", o.cfg.params.f, "thermal qubit excited-state population");
  sub->add_option("--g", o.cfg.params.g, "partial-swap angle (single-qubit preset)");
  sub->add_option("--g1", o.cfg.params.g1, "first-unit swap angle (two-qubit presets)");
  sub->add_option("--g2", o.cfg.params.g2, "second-unit swap angle (two-qubit presets)");
  sub->add_option("--eps-mix", o.cfg.params.epsilon_mix,
                  "mix rank-deficient ancilla units with this much maximally mixed state");
}

void add_run_options(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--steps", o.cfg.steps, "number of collisions");
  sub->add_option("--out", o.cfg.out_dir, "output directory");
  sub->add_option("--prune", o.cfg.prune, "branch weight pruning threshold");
  sub->add_option("--threads", o.cfg.threads, "worker threads (default: CM2_THREADS env, else hardware)");
  sub->add_option("--max-branches", o.cfg.max_branches, "exact enumeration budget");
  sub->add_option("--manifest", o.manifest, "re-run an earlier run from its manifest.json");
}

cm2::ResolvedRun resolve(CommonOpts& o, const std::string& mode) {
  o.cfg.mode = mode;
  if (!o.manifest.empty()) {
    if (o.model_opt->count() || o.preset_opt->count())
      throw std::invalid_argument("--manifest replaces --model/--preset");
    return cm2::run_from_manifest(o.manifest, mode, o.cfg.out_dir);
  }
  if ((mode == "ensemble" || mode == "single-shot") && o.seed_opt->count() == 0)
    throw std::invalid_argument("--seed is required for " + mode + " runs");
  return cm2::prepare_run(o.cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cm2: stroboscopic collision models with per-collision ancilla readout"};
  app.set_version_flag("--version", std::string("cm2 ") + cm2::kVersion);
  app.require_subcommand(1);

  CommonOpts val, ens, ss, ex, cls;

  CLI::App* sub_validate = app.add_subcommand("validate", "check a model description and report");
  add_model_options(sub_validate, val);

  CLI::App* sub_ens = app.add_subcommand("ensemble", "trajectory-averaged ledger series");
  add_model_options(sub_ens, ens);
  add_run_options(sub_ens, ens);
  ens.seed_opt = sub_ens->add_option("--seed", ens.cfg.seed, "master RNG seed");
  sub_ens->add_option("--traj", ens.cfg.n_traj, "number of trajectories");
  sub_ens->add_flag("--svg", ens.cfg.svg, "emit SVG plots");
  sub_ens->add_option("--window", ens.cfg.iss_window, "steady-state detection window (steps)");
  sub_ens->add_option("--eps-i", ens.cfg.eps_i, "steady-state tolerance on |dI|");
  sub_ens->add_option("--eps-g", ens.cfg.eps_g, "activity threshold on G");

  CLI::App* sub_ss = app.add_subcommand("single-shot", "one measurement record with histograms");
  add_model_options(sub_ss, ss);
  add_run_options(sub_ss, ss);
  ss.seed_opt = sub_ss->add_option("--seed", ss.cfg.seed, "master RNG seed");
  sub_ss->add_option("--bins", ss.cfg.bins, "histogram bin count");
  sub_ss->add_flag("--svg", ss.cfg.svg, "emit SVG plots");

  CLI::App* sub_ex = app.add_subcommand("exact", "exact record enumeration with ledger verifier");
  add_model_options(sub_ex, ex);
  add_run_options(sub_ex, ex);
  sub_ex->add_flag("--svg", ex.cfg.svg, "emit SVG plots");
  sub_ex->add_option("--window", ex.cfg.iss_window, "steady-state detection window (steps)");
  sub_ex->add_option("--eps-i", ex.cfg.eps_i, "steady-state tolerance on |dI|");
  sub_ex->add_option("--eps-g", ex.cfg.eps_g, "activity threshold on G");

  CLI::App* sub_cls = app.add_subcommand("classical", "hidden-Markov cross-check of record statistics");
  add_model_options(sub_cls, cls);
  add_run_options(sub_cls, cls);

  CLI::App* sub_presets = app.add_subcommand("presets", "list built-in model families");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (sub_presets->parsed()) {
      for (const std::string& name : cm2::preset_names()) std::printf("%s\n", name.c_str());
      return 0;
    }
    if (sub_validate->parsed()) {
      val.cfg.mode = "validate";
      const cm2::CM2Model model = cm2::resolve_model_unchecked(val.cfg);
      const cm2::ValidationReport rep = cm2::validate(model);
      std::printf("%s", rep.to_string().c_str());
      return rep.pass() ? 0 : 1;
    }
    if (sub_ens->parsed()) {
      const cm2::ResolvedRun run = resolve(ens, "ensemble");
      const cm2::EnsembleRunOutput out = cm2::run_ensemble(run);
      const cm2::StepLedger& last = out.result.series.steps.back();
      std::printf("ensemble: %zu trajectories, %d steps -> %s\n", out.result.n_traj,
                  static_cast<int>(out.result.series.steps.size()), out.series_path.c_str());
      std::printf("manifest=%s\n", out.hash.c_str());
      std::printf("final: S_u=%.6f S_c=%.6f (SE %.2e) I=%.6f G=%.6f L=%.6f\n", last.s_u,
                  last.s_c, last.se_sc, last.info, last.gain, last.loss);
      std::printf("%s\n", out.result.iss.to_string().c_str());
      return 0;
    }
    if (sub_ss->parsed()) {
      const cm2::ResolvedRun run = resolve(ss, "single-shot");
      const cm2::SingleShotOutput out = cm2::run_single_shot(run);
      std::printf("single-shot: %zu steps -> %s\n", out.s_c.size(),
                  cm2::join_path(run.config.out_dir, "single_shot.csv").c_str());
      std::printf("manifest=%s\n", out.hash.c_str());
      std::printf("accumulated: S_c=%.6f G=%.6f dSigma_c=%.6f Z=%.6f\n", out.acc_sc.back(),
                  out.acc_gain.back(), out.acc_dsc.back(), out.acc_z.back());
      return 0;
    }
    if (sub_ex->parsed()) {
      const cm2::ResolvedRun run = resolve(ex, "exact");
      const cm2::ExactRunOutput out = cm2::run_exact(run);
      std::printf("exact: %d steps, %zu final branches -> %s\n",
                  static_cast<int>(out.ledger.series.steps.size()),
                  out.ledger.ensembles.back().branches.size(), out.report_path.c_str());
      std::printf("manifest=%s\n", out.hash.c_str());
      std::printf("%s\n", out.iss.to_string().c_str());
      std::printf("verifier: %s\n", out.verifier_pass ? "PASS" : "FAIL");
      return out.verifier_pass ? 0 : 2;
    }
    if (sub_cls->parsed()) {
      const cm2::ResolvedRun run = resolve(cls, "classical");
      const cm2::ClassicalCrosscheckOutput out = cm2::run_classical_crosscheck(run);
      std::printf("manifest=%s\n", out.hash.c_str());
      if (out.refused) {
        std::fprintf(stderr, "classical cross-check refused: %s\n", out.refusal.c_str());
        return 1;
      }
      std::printf("classical: %zu records, max |quantum - classical| = %.3e, total %.12f\n",
                  out.n_records, out.max_diff, out.classical_total);
      std::printf("cross-check: %s\n", out.pass ? "PASS" : "FAIL");
      return out.pass ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
