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

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cm2/dynamics.hpp"
#include "cm2/linalg.hpp"
#include "cm2/model.hpp"

// Information and entropy bookkeeping for the measured collision process.
// All entropic quantities are in nats. Relative entropies that diverge
// because a state leaves the support of the reference are reported as IEEE
// +infinity, never as large finite numbers.

namespace cm2 {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Thrown when a conditional entropy production is requested for a model
/// whose measurement moves population between ancilla eigenspaces; the
/// decomposition used here is only valid when it does not.
class MeasurementConditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Von Neumann entropy in nats; 0 ln 0 = 0.
inline double vn_entropy(const CMatrix& rho) {
  const HermitianSpectrum s = eig_hermitian(rho);
  double h = 0.0;
  for (Eigen::Index k = 0; k < s.eigenvalues.size(); ++k) {
    const double lam = s.eigenvalues(k);
    if (lam < -kNegativeEigTol)
      throw InvalidStateError("vn_entropy: eigenvalue " + std::to_string(lam));
    if (lam > kEigenvalueFloor) h -= lam * std::log(lam);
  }
  return std::max(h, 0.0);
}

/// Quantum relative entropy D(rho || sigma) = tr(rho ln rho - rho ln sigma).
/// Returns +inf when rho carries weight above 1e-10 outside the support of
/// sigma (sigma eigenvalue at or below the floor).
inline double rel_entropy(const CMatrix& rho, const CMatrix& sigma) {
  const HermitianSpectrum sr = eig_hermitian(rho);
  double rho_ln_rho = 0.0;
  for (Eigen::Index k = 0; k < sr.eigenvalues.size(); ++k) {
    const double lam = sr.eigenvalues(k);
    if (lam < -kNegativeEigTol)
      throw InvalidStateError("rel_entropy: eigenvalue " + std::to_string(lam));
    if (lam > kEigenvalueFloor) rho_ln_rho += lam * std::log(lam);
  }
  const HermitianSpectrum ss = eig_hermitian(sigma);
  double cross = 0.0;
  for (Eigen::Index k = 0; k < ss.eigenvalues.size(); ++k) {
    const double mu = ss.eigenvalues(k);
    const double w =
        (ss.eigenvectors.col(k).adjoint() * rho * ss.eigenvectors.col(k))(0, 0).real();
    if (mu <= kEigenvalueFloor) {
      if (w > 1e-10) return kInf;
      continue;
    }
    cross += w * std::log(mu);
  }
  return rho_ln_rho - cross;
}

/// Quantum mutual information of a bipartite state (slow factor dimension
/// da, fast factor db).
inline double mutual_information(const CMatrix& joint, Eigen::Index da, Eigen::Index db) {
  return vn_entropy(trace_out_second(joint, da, db)) +
         vn_entropy(trace_out_first(joint, da, db)) - vn_entropy(joint);
}

/// Holevo information of a state ensemble: S(mixture) - sum p S(state).
inline double holevo(const std::vector<double>& probs, const std::vector<CMatrix>& states) {
  if (probs.size() != states.size() || probs.empty())
    throw std::invalid_argument("holevo: ensemble shape mismatch");
  CMatrix mix = CMatrix::Zero(states.front().rows(), states.front().cols());
  double avg = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    mix += probs[i] * states[i];
    avg += probs[i] * vn_entropy(states[i]);
  }
  return vn_entropy(mix) - avg;
}

inline double holevo(const BranchEnsemble& ens) {
  std::vector<double> p;
  std::vector<CMatrix> s;
  p.reserve(ens.branches.size());
  s.reserve(ens.branches.size());
  for (const Branch& b : ens.branches) {
    p.push_back(b.prob);
    s.push_back(b.state);
  }
  return holevo(p, s);
}

namespace detail {

/// tr{(rho_ref - sigma) ln rho_ref} evaluated in the eigenbasis of the
/// reference; +inf when sigma puts weight above 1e-10 on the null space.
inline double entropy_flux_vs_ref(const CMatrix& sigma, const HermitianSpectrum& ref) {
  double flux = 0.0;
  for (Eigen::Index k = 0; k < ref.eigenvalues.size(); ++k) {
    const double lam = ref.eigenvalues(k);
    const double w =
        (ref.eigenvectors.col(k).adjoint() * sigma * ref.eigenvectors.col(k))(0, 0).real();
    if (lam <= kEigenvalueFloor) {
      if (w > 1e-10) return kInf;
      continue;
    }
    flux += (lam - w) * std::log(lam);
  }
  return flux;
}

}  // namespace detail

/// Unconditional per-collision entropy production and its decomposition.
struct FluxBreakdown {
  double d_sigma_u = 0.0;   // mutual_info + backaction; may be +inf
  double d_phi_u = 0.0;     // entropy flux to the full ancilla; may be +inf
  double d_s = 0.0;         // system entropy change
  double mutual_info = 0.0; // I(X_t : Y_t')
  double backaction = 0.0;  // D(Y_t' || Y_t); may be +inf
  std::vector<double> unit_fluxes;  // per-unit flux; entries may be +inf
  CMatrix rho_next;
  CMatrix rho_yprime;
  CMatrix joint;
};

/// Conditional entropy flux and the back-action condition at one state.
struct CondFlux {
  double d_phi_c = 0.0;  // may be +inf
  bool condition_holds = false;
  double residual = 0.0;
};

/// Cached spectral data for the flux functionals of one model.
class ThermoEngine {
 public:
  explicit ThermoEngine(const CM2Model& model)
      : model_(model),
        c_(model),
        cond_(check_measurement_condition(model)),
        y_spec_(eig_hermitian(c_.ancilla_state())),
        log_y_(log_on_support(c_.ancilla_state())) {
    for (const DensityMatrix& u : model_.ancilla.units)
      unit_specs_.push_back(eig_hermitian(u.matrix));
    null_proj_ = CMatrix::Zero(c_.ancilla_dim(), c_.ancilla_dim());
    for (Eigen::Index k = 0; k < y_spec_.eigenvalues.size(); ++k)
      if (y_spec_.eigenvalues(k) <= kEigenvalueFloor)
        null_proj_ += y_spec_.eigenvectors.col(k) * y_spec_.eigenvectors.col(k).adjoint();
  }

  const Collider& collider() const { return c_; }
  const CM2Model& model() const { return model_; }
  const MeasurementConditionReport& measurement_condition() const { return cond_; }

  /// Unconditional step bookkeeping from the pre-collision system state.
  FluxBreakdown delta_sigma_u(const CMatrix& rho_prev) const {
    FluxBreakdown out;
    out.joint = c_.joint_collide(rho_prev);
    out.rho_next = c_.reduce_system(out.joint);
    out.rho_yprime = c_.reduce_ancilla(out.joint);
    out.mutual_info = vn_entropy(out.rho_next) + vn_entropy(out.rho_yprime) -
                      vn_entropy(out.joint);
    out.backaction = rel_entropy(out.rho_yprime, c_.ancilla_state());
    out.d_sigma_u = out.mutual_info + out.backaction;
    out.d_s = vn_entropy(out.rho_next) - vn_entropy(rho_prev);
    out.d_phi_u = detail::entropy_flux_vs_ref(out.rho_yprime, y_spec_);
    for (std::size_t j = 0; j < c_.n_units(); ++j)
      out.unit_fluxes.push_back(
          detail::entropy_flux_vs_ref(c_.reduce_unit(out.joint, j), unit_specs_[j]));
    return out;
  }

  /// Conditional flux at a given post-collision ancilla state. The condition
  /// residual combines the support-restricted trace deviation with the
  /// null-space weight change, so it is finite even for pure units.
  CondFlux delta_phi_c(const CMatrix& rho_yprime) const {
    CondFlux out;
    const CMatrix dephased = measurement_dephase(rho_yprime, model_.measurement);
    out.d_phi_c = detail::entropy_flux_vs_ref(dephased, y_spec_);
    const CMatrix diff = dephased - rho_yprime;
    out.residual = std::max(std::abs((diff * log_y_).trace()),
                            std::abs((diff * null_proj_).trace()));
    out.condition_holds = out.residual < 1e-10;
    return out;
  }

 private:
  CM2Model model_;
  Collider c_;
  MeasurementConditionReport cond_;
  HermitianSpectrum y_spec_;
  std::vector<HermitianSpectrum> unit_specs_;
  CMatrix log_y_;
  CMatrix null_proj_;
};

inline FluxBreakdown delta_sigma_u(const CMatrix& rho_prev, const CM2Model& model) {
  return ThermoEngine(model).delta_sigma_u(rho_prev);
}

inline CondFlux delta_phi_c(const CMatrix& rho_yprime, const CM2Model& model) {
  return ThermoEngine(model).delta_phi_c(rho_yprime);
}

/// Conditional entropy production increment. Only defined when the
/// measurement back-action condition holds; refuses otherwise.
inline double delta_sigma_c(double d_sigma_u, double d_info, bool condition_holds) {
  if (!condition_holds)
    throw MeasurementConditionError(
        "delta_sigma_c: measurement moves population between ancilla eigenspaces; "
        "the conditional decomposition does not apply");
  return d_sigma_u - d_info;
}

/// Information gain, loss, and net rate for one collision starting from an
/// exactly enumerated record ensemble.
struct GainLoss {
  double gain = 0.0;
  double loss = 0.0;
  double d_info = 0.0;
};

inline GainLoss gain_loss(const BranchEnsemble& prev, const Collider& c,
                          double prune = 1e-14) {
  ExpandResult er = expand_ensemble(prev, c, prune);
  double s_int = 0.0;
  CMatrix mix_next = CMatrix::Zero(c.system_dim(), c.system_dim());
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    s_int += prev.branches[i].prob * vn_entropy(er.intermediates[i]);
    mix_next += prev.branches[i].prob * er.intermediates[i];
  }
  double s_c = 0.0;
  for (const Branch& b : er.next.branches) s_c += b.prob * vn_entropy(b.state);

  const CMatrix mix_prev = prev.mixture();
  double loss = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i)
    loss += prev.branches[i].prob * (rel_entropy(prev.branches[i].state, mix_prev) -
                                     rel_entropy(er.intermediates[i], mix_next));

  GainLoss out;
  out.gain = s_int - s_c;
  out.loss = loss;
  out.d_info = out.gain - out.loss;
  return out;
}

inline GainLoss gain_loss(const BranchEnsemble& prev, const CM2Model& model,
                          double prune = 1e-14) {
  return gain_loss(prev, Collider(model), prune);
}

/// Ancilla-side lower bound pieces for the conditional entropy production:
/// back-action D(Y'||Y) plus the record information held in the ancilla
/// posteriors, conditioned either on the pre-measurement record (value) or
/// on the record including the current outcome (value_with_outcome).
struct BoundTerms {
  double backaction = 0.0;           // D(Y_t' || Y_t); may be +inf
  double record_info = 0.0;          // I(Y_t' : record up to t-1)
  double record_info_outcome = 0.0;  // I(Y_t' : record up to t)
  double value = 0.0;                // backaction + record_info; may be +inf
  double value_with_outcome = 0.0;   // backaction + record_info_outcome
};

inline BoundTerms bound_rhs(const BranchEnsemble& prev, const Collider& c,
                            const MeasurementSet& meas, double prune = 1e-14) {
  ExpandResult er = expand_ensemble(prev, c, prune);
  const Eigen::Index dy = c.ancilla_dim();

  CMatrix mix = CMatrix::Zero(dy, dy);
  double avg = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i) {
    mix += prev.branches[i].prob * er.ancilla_posteriors[i];
    avg += prev.branches[i].prob * vn_entropy(er.ancilla_posteriors[i]);
  }

  // Post-measurement ancilla ensemble, resolved on the current outcome.
  CMatrix mix_post = CMatrix::Zero(dy, dy);
  double avg_post = 0.0;
  for (std::size_t i = 0; i < prev.branches.size(); ++i)
    for (std::size_t z = 0; z < meas.operators.size(); ++z) {
      const double p = prev.branches[i].prob * er.child_weights[i][z];
      if (p < prune) continue;
      const CMatrix post = meas.operators[z] * er.ancilla_posteriors[i] *
                           meas.operators[z].adjoint();
      mix_post += prev.branches[i].prob * post;
      avg_post += p * vn_entropy(post / er.child_weights[i][z]);
    }

  BoundTerms out;
  out.backaction = rel_entropy(mix, c.ancilla_state());
  out.record_info = vn_entropy(mix) - avg;
  out.record_info_outcome = vn_entropy(mix_post) - avg_post;
  out.value = out.backaction + out.record_info;
  out.value_with_outcome = out.backaction + out.record_info_outcome;
  return out;
}

inline BoundTerms bound_rhs(const BranchEnsemble& prev, const CM2Model& model,
                            double prune = 1e-14) {
  return bound_rhs(prev, Collider(model), model.measurement, prune);
}

/// Ledger entries for one collision. Standard-error fields are zero in exact
/// mode. Divergent production/flux entries are IEEE +inf.
struct StepLedger {
  int t = 0;
  double s_u = 0.0;
  double s_c = 0.0;
  double se_sc = 0.0;
  double info = 0.0;
  double d_info = 0.0;
  double se_dinfo = 0.0;
  double gain = 0.0;
  double se_gain = 0.0;
  double loss = 0.0;
  double d_sigma_u = 0.0;
  double d_sigma_c = 0.0;
  double d_phi_u = 0.0;
  double d_phi_c = 0.0;
  std::vector<double> unit_fluxes;
  double sigma_u_int = 0.0;
  double sigma_c_int = 0.0;
  double bound_rhs_prev = std::numeric_limits<double>::quiet_NaN();
  double bound_rhs_curr = std::numeric_limits<double>::quiet_NaN();
  bool iss_flag = false;
};

/// Per-run ledger series. sample_count == 0 means exact enumeration.
struct ThermoSeries {
  double s0 = 0.0;  // S(X_0)
  std::vector<StepLedger> steps;
  std::size_t sample_count = 0;
};

enum class SteadyStateVerdict { equilibrium, ness_unconditional_only, iss, transient };

inline std::string to_string(SteadyStateVerdict v) {
  switch (v) {
    case SteadyStateVerdict::equilibrium: return "equilibrium";
    case SteadyStateVerdict::ness_unconditional_only: return "NESS-unconditional-only";
    case SteadyStateVerdict::iss: return "ISS";
    case SteadyStateVerdict::transient: return "transient";
  }
  return "unknown";
}

/// Informational steady-state classification over a trailing window.
struct ISSReport {
  int window_start = 0;  // first t inside the window
  int window_len = 0;
  double mean_abs_d_info = 0.0;
  double mean_gain = 0.0;
  double mean_loss = 0.0;
  double mean_d_sigma_u = 0.0;
  double eps_i = 0.0;
  double eps_g = 0.0;
  SteadyStateVerdict verdict = SteadyStateVerdict::transient;

  std::string to_string() const {
    std::ostringstream os;
    os << "steady-state verdict: " << cm2::to_string(verdict) << " (window t=" << window_start
       << ".." << window_start + window_len - 1 << ", mean |dI|=" << mean_abs_d_info
       << ", mean G=" << mean_gain << ", mean L=" << mean_loss
       << ", mean dSigma_u=" << mean_d_sigma_u << ", eps_I=" << eps_i << ", eps_G=" << eps_g
       << ")";
    return os.str();
  }
};

/// Classify the trailing window: an informational steady state needs a
/// vanishing net rate with strictly positive gain; zero gain with positive
/// unconditional production is a plain nonequilibrium steady state; zero
/// gain and zero production is equilibrium. Defaults: window = last 25% of
/// steps, thresholds max(3 * windowed SE, 1e-3).
inline ISSReport iss_detect(const ThermoSeries& series, int window = 0, double eps_i = 0.0,
                            double eps_g = 0.0) {
  const int n = static_cast<int>(series.steps.size());
  if (n == 0) throw std::invalid_argument("iss_detect: empty series");
  int w = window > 0 ? window : std::max(1, n / 4);
  if (w > n) throw std::invalid_argument("iss_detect: window longer than series");

  ISSReport rep;
  rep.window_len = w;
  rep.window_start = series.steps[static_cast<std::size_t>(n - w)].t;
  double se_i = 0.0, se_g = 0.0;
  for (int i = n - w; i < n; ++i) {
    const StepLedger& s = series.steps[static_cast<std::size_t>(i)];
    rep.mean_abs_d_info += std::abs(s.d_info);
    rep.mean_gain += s.gain;
    rep.mean_loss += s.loss;
    rep.mean_d_sigma_u += s.d_sigma_u;
    se_i += s.se_dinfo;
    se_g += s.se_gain;
  }
  rep.mean_abs_d_info /= w;
  rep.mean_gain /= w;
  rep.mean_loss /= w;
  rep.mean_d_sigma_u /= w;
  se_i /= w;
  se_g /= w;
  // Conservative thresholds: the per-step SEs are not shrunk by the window
  // length, so correlated noise cannot fake a verdict.
  rep.eps_i = eps_i > 0.0 ? eps_i : std::max(3.0 * se_i, 1e-3);
  rep.eps_g = eps_g > 0.0 ? eps_g : std::max(3.0 * se_g, 1e-3);

  if (rep.mean_abs_d_info < rep.eps_i) {
    if (rep.mean_gain > rep.eps_g)
      rep.verdict = SteadyStateVerdict::iss;
    else if (rep.mean_d_sigma_u > rep.eps_g)
      rep.verdict = SteadyStateVerdict::ness_unconditional_only;
    else
      rep.verdict = SteadyStateVerdict::equilibrium;
  } else {
    rep.verdict = SteadyStateVerdict::transient;
  }
  return rep;
}

/// One verified relation at one step: pass iff margin >= -tol. Equality
/// checks store margin = -|deviation|.
struct InequalityCheck {
  std::string name;
  int t = 0;
  double margin = 0.0;
  double tol = 0.0;
  bool pass = false;
};

/// Full exact-enumeration ledger plus every verified identity/inequality.
struct ExactLedgerResult {
  ThermoSeries series;
  std::vector<BranchEnsemble> ensembles;
  std::vector<InequalityCheck> checks;

  bool all_pass() const {
    for (const InequalityCheck& c : checks)
      if (!c.pass) return false;
    return true;
  }

  std::string report() const {
    std::ostringstream os;
    int failed = 0;
    for (const InequalityCheck& c : checks)
      if (!c.pass) ++failed;
    os << "verifier: " << checks.size() - failed << "/" << checks.size() << " checks passed\n";
    for (const InequalityCheck& c : checks)
      os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << " t=" << c.t
         << " margin=" << c.margin << " tol=" << c.tol << "\n";
    return os.str();
  }
};

namespace detail {

inline void push_check(std::vector<InequalityCheck>& checks, const std::string& name, int t,
                       double margin, double tol) {
  checks.push_back({name, t, margin, tol, margin >= -tol || margin == kInf});
}

inline void push_equality(std::vector<InequalityCheck>& checks, const std::string& name,
                          int t, double a, double b, double tol) {
  // Two +inf flags agree; a flag against a finite value is a failure.
  double margin;
  if (std::isinf(a) || std::isinf(b))
    margin = (std::isinf(a) && std::isinf(b) && a == b) ? 0.0 : -kInf;
  else
    margin = -std::abs(a - b);
  checks.push_back({name, t, margin, tol, margin >= -tol});
}

}  // namespace detail

/// Exact conditional/unconditional ledger over `steps` collisions, with the
/// verifier evaluating every tracked identity and inequality at each step.
inline ExactLedgerResult exact_ledger(const CM2Model& model, int steps, double prune = 1e-14,
                                      std::size_t max_branches = (1u << 22)) {
  ExactLedgerResult out;
  const ThermoEngine eng(model);
  const Collider& c = eng.collider();
  const bool cond_holds = eng.measurement_condition().holds;

  {
    const double worst =
        static_cast<double>(steps) * std::log(static_cast<double>(c.n_outcomes()));
    if (worst > std::log(static_cast<double>(max_branches)))
      throw EnumerationBudgetError("exact_ledger: branch budget exceeded; up to " +
                                   std::to_string(c.n_outcomes()) + "^" +
                                   std::to_string(steps) + " branches");
  }

  BranchEnsemble ens;
  ens.t = 0;
  ens.branches.push_back(Branch{{}, 1.0, model.rho_x0.matrix});
  out.ensembles.push_back(ens);

  out.series.s0 = vn_entropy(model.rho_x0.matrix);
  out.series.sample_count = 0;

  CMatrix rho_u_prev = model.rho_x0.matrix;
  double info_prev = 0.0;
  double sigma_u_acc = 0.0, sigma_c_acc = 0.0, gain_acc = 0.0;
  const bool all_units_full_rank = [&] {
    for (const DensityMatrix& u : model.ancilla.units)
      if (eig_hermitian(u.matrix).eigenvalues.minCoeff() <= kEigenvalueFloor) return false;
    return true;
  }();

  for (int t = 1; t <= steps; ++t) {
    const BranchEnsemble& prev = out.ensembles.back();
    const FluxBreakdown flux = eng.delta_sigma_u(rho_u_prev);
    ExpandResult er = expand_ensemble(prev, c, prune);

    StepLedger led;
    led.t = t;
    led.s_u = vn_entropy(flux.rho_next);
    led.d_sigma_u = flux.d_sigma_u;
    led.d_phi_u = flux.d_phi_u;
    led.unit_fluxes = flux.unit_fluxes;

    // Conditional side: entropies, gain, Eq.-19 loss, record-side bounds.
    double s_int = 0.0, loss = 0.0, b2_cmi = 0.0;
    double b1_min_margin = kInf;
    const CMatrix mix_prev = prev.mixture();
    CMatrix mix_inter = CMatrix::Zero(c.system_dim(), c.system_dim());
    for (std::size_t i = 0; i < prev.branches.size(); ++i)
      mix_inter += prev.branches[i].prob * er.intermediates[i];
    for (std::size_t i = 0; i < prev.branches.size(); ++i) {
      const double p = prev.branches[i].prob;
      const double s_inter = vn_entropy(er.intermediates[i]);
      s_int += p * s_inter;
      loss += p * (rel_entropy(prev.branches[i].state, mix_prev) -
                   rel_entropy(er.intermediates[i], mix_inter));
      const double mi = mutual_information(er.joints[i], c.system_dim(), c.ancilla_dim());
      b2_cmi += p * mi;
      double s_children = 0.0;
      for (int z = 0; z < c.n_outcomes(); ++z) {
        const double w = er.child_weights[i][static_cast<std::size_t>(z)];
        if (w < 1e-14) continue;
        s_children += w * vn_entropy(c.cond_from_joint(er.joints[i], z) / w);
      }
      const double holevo_z = s_inter - s_children;  // I(X':z) given this record
      b1_min_margin = std::min(b1_min_margin, mi - holevo_z);
    }

    double s_c = 0.0;
    for (const Branch& b : er.next.branches) s_c += b.prob * vn_entropy(b.state);
    led.s_c = s_c;
    led.info = led.s_u - led.s_c;
    led.gain = s_int - led.s_c;
    led.loss = loss;
    led.d_info = led.info - info_prev;

    // Record-side bound terms from the same expansion.
    {
      const Eigen::Index dy = c.ancilla_dim();
      CMatrix mix = CMatrix::Zero(dy, dy);
      double avg = 0.0;
      CMatrix mix_post = CMatrix::Zero(dy, dy);
      double avg_post = 0.0;
      for (std::size_t i = 0; i < prev.branches.size(); ++i) {
        const double p = prev.branches[i].prob;
        mix += p * er.ancilla_posteriors[i];
        avg += p * vn_entropy(er.ancilla_posteriors[i]);
        for (std::size_t z = 0; z < model.measurement.operators.size(); ++z) {
          const double w = er.child_weights[i][z];
          if (p * w < 1e-14) continue;
          const CMatrix post = model.measurement.operators[z] * er.ancilla_posteriors[i] *
                               model.measurement.operators[z].adjoint();
          mix_post += p * post;
          avg_post += p * w * vn_entropy(post / w);
        }
      }
      const double backaction = rel_entropy(mix, c.ancilla_state());
      led.bound_rhs_prev = backaction + (vn_entropy(mix) - avg);
      led.bound_rhs_curr = backaction + (vn_entropy(mix_post) - avg_post);
    }

    const CondFlux cf = eng.delta_phi_c(flux.rho_yprime);
    led.d_phi_c = cf.d_phi_c;
    led.d_sigma_c = cond_holds ? led.d_sigma_u - led.d_info
                               : std::numeric_limits<double>::quiet_NaN();

    sigma_u_acc += led.d_sigma_u;
    sigma_c_acc += led.d_sigma_c;
    gain_acc += led.gain;
    led.sigma_u_int = sigma_u_acc;
    led.sigma_c_int = sigma_c_acc;

    // Verifier relations for this step.
    auto& ck = out.checks;
    double mass = er.next.discarded_mass;
    for (const Branch& b : er.next.branches) mass += b.prob;
    detail::push_equality(ck, "normalization", t, mass, 1.0, 1e-12);
    detail::push_check(ck, "marginalization", t,
                       1e-9 + er.next.discarded_mass -
                           max_abs(er.next.mixture() - flux.rho_next),
                       0.0);
    detail::push_check(ck, "gain_nonneg", t, led.gain, 1e-10);
    detail::push_check(ck, "loss_nonneg", t, led.loss, 1e-10);
    detail::push_check(ck, "holevo_nonneg", t, led.info, 1e-10);
    detail::push_check(ck, "sigma_u_nonneg", t, led.d_sigma_u, 1e-10);
    detail::push_equality(ck, "info_balance", t, led.d_info, led.gain - led.loss, 1e-10);
    {
      // Holevo as the average divergence from the mixture.
      const CMatrix mix_children = er.next.mixture();
      double avg_div = 0.0;
      for (const Branch& b : er.next.branches)
        avg_div += b.prob * rel_entropy(b.state, mix_children);
      detail::push_equality(ck, "holevo_divergence_route", t, led.info, avg_div, 1e-9);
    }
    if (std::isfinite(led.d_sigma_u)) {
      detail::push_equality(ck, "sigma_u_split", t, led.d_sigma_u,
                            flux.d_s + flux.d_phi_u, 1e-10);
    }
    if (all_units_full_rank) {
      double unit_sum = 0.0;
      for (double f : led.unit_fluxes) unit_sum += f;
      detail::push_equality(ck, "flux_additivity", t, unit_sum, led.d_phi_u, 1e-10);
    }
    if (cond_holds)
      detail::push_equality(ck, "phi_c_matches_phi_u", t, led.d_phi_c, led.d_phi_u, 1e-10);
    if (cond_holds) {
      if (std::isfinite(led.sigma_c_int) && std::isfinite(led.sigma_u_int))
        detail::push_equality(ck, "sigma_decomposition", t, led.sigma_c_int,
                              led.sigma_u_int - led.info, 1e-10);
      detail::push_check(ck, "gain_dominates_info", t, gain_acc - led.info, 1e-9);
      detail::push_check(ck, "conditional_second_law", t,
                         std::isinf(led.d_sigma_c) ? kInf
                                                   : led.d_sigma_c - led.bound_rhs_prev,
                         1e-9);
    }
    detail::push_check(ck, "bound_nonneg", t,
                       std::isinf(led.bound_rhs_prev) ? kInf : led.bound_rhs_prev, 1e-9);
    detail::push_check(ck, "record_holevo_bound", t, b1_min_margin, 1e-10);
    detail::push_check(ck, "gain_below_collision_mi", t, b2_cmi - led.gain, 1e-10);

    out.series.steps.push_back(std::move(led));
    out.ensembles.push_back(std::move(er.next));
    rho_u_prev = flux.rho_next;
    info_prev = out.series.steps.back().info;
  }
  return out;
}

}  // namespace cm2
