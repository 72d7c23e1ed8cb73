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

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "cm2/linalg.hpp"

// Model description for a stroboscopic collision process: a system state, a
// fresh multi-unit ancilla supplied identically at every step, a collision
// unitary given as an ordered list of two-body stages, and a generalized
// measurement read out on the full ancilla after each collision.

namespace cm2 {

namespace detail {

/// Empty string when `m` is a valid density matrix, else a description of the
/// worst violation. Tolerances: Hermiticity 1e-10, trace 1e-10, eigenvalue
/// negativity 1e-9.
inline std::string density_violation(const CMatrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return "matrix not square";
  const double herm = max_abs(m - m.adjoint());
  if (herm > kHermTol) return "Hermiticity deviation " + std::to_string(herm);
  const double tr_dev = std::abs(m.trace() - Complex(1.0, 0.0));
  if (tr_dev > 1e-10) return "trace deviation " + std::to_string(tr_dev);
  const HermitianSpectrum s = eig_hermitian(m);
  const double min_eig = s.eigenvalues.minCoeff();
  if (min_eig < -kNegativeEigTol) return "negative eigenvalue " + std::to_string(min_eig);
  return {};
}

}  // namespace detail

/// Validated quantum state. `checked` enforces the state invariants;
/// aggregate construction is for matrices already known to be valid.
struct DensityMatrix {
  CMatrix matrix;

  Eigen::Index dim() const { return matrix.rows(); }

  static DensityMatrix checked(CMatrix m) {
    const std::string why = detail::density_violation(m);
    if (!why.empty()) throw InvalidStateError("DensityMatrix: " + why);
    return DensityMatrix{std::move(m)};
  }
};

/// Fresh-ancilla specification: an ordered list of independent units whose
/// product forms the per-collision ancilla state. The same state is supplied
/// at every collision.
struct AncillaSpec {
  std::vector<DensityMatrix> units;

  std::size_t n_units() const { return units.size(); }

  std::vector<Eigen::Index> unit_dims() const {
    std::vector<Eigen::Index> d;
    d.reserve(units.size());
    for (const auto& u : units) d.push_back(u.dim());
    return d;
  }

  Eigen::Index total_dim() const {
    Eigen::Index d = 1;
    for (const auto& u : units) d *= u.dim();
    return d;
  }

  CMatrix product_state() const {
    std::vector<CMatrix> f;
    f.reserve(units.size());
    for (const auto& u : units) f.push_back(u.matrix);
    return tensor_all(f);
  }
};

/// One two-body stage of the collision: `unitary` acts on the system and on
/// ancilla unit `unit` (system index slow), identity elsewhere.
struct CollisionStage {
  std::size_t unit = 0;
  CMatrix unitary;
};

/// Ordered stage list; the full collision applies stages first to last.
struct CollisionUnitary {
  std::vector<CollisionStage> stages;
};

/// Generalized measurement {M_z} on the full ancilla, sum_z M_z^dag M_z = 1.
struct MeasurementSet {
  std::vector<CMatrix> operators;
  std::vector<std::string> labels;  // outcome names; autogenerated if empty

  std::size_t n_outcomes() const { return operators.size(); }

  std::string label(std::size_t z) const {
    if (z < labels.size()) return labels[z];
    return std::to_string(z);
  }
};

/// Complete model: initial system state, ancilla, collision, measurement.
struct CM2Model {
  Eigen::Index system_dim = 0;
  DensityMatrix rho_x0;
  AncillaSpec ancilla;
  CollisionUnitary collision;
  MeasurementSet measurement;

  Eigen::Index ancilla_dim() const { return ancilla.total_dim(); }
  Eigen::Index joint_dim() const { return system_dim * ancilla.total_dim(); }

  /// Subsystem dimensions of the joint space: system first, then units.
  std::vector<Eigen::Index> joint_dims() const {
    std::vector<Eigen::Index> d{system_dim};
    for (Eigen::Index ud : ancilla.unit_dims()) d.push_back(ud);
    return d;
  }
};

/// Embed a two-body stage unitary (system x unit, system slow) into the full
/// joint space, acting as identity on the remaining units.
inline CMatrix embed_stage(const CMatrix& u, Eigen::Index system_dim,
                           const std::vector<Eigen::Index>& unit_dims, std::size_t unit) {
  if (unit >= unit_dims.size()) throw std::invalid_argument("embed_stage: unit out of range");
  const Eigen::Index du = unit_dims[unit];
  if (u.rows() != system_dim * du || u.cols() != system_dim * du)
    throw std::invalid_argument("embed_stage: stage dimension mismatch");

  std::vector<Eigen::Index> dims{system_dim};
  dims.insert(dims.end(), unit_dims.begin(), unit_dims.end());
  const auto active = detail::subsystem_offsets(dims, {0, unit + 1});
  std::vector<std::size_t> rest_subs;
  for (std::size_t s = 1; s < dims.size(); ++s)
    if (s != unit + 1) rest_subs.push_back(s);
  const auto rest = detail::subsystem_offsets(dims, rest_subs);

  Eigen::Index total = 1;
  for (Eigen::Index d : dims) total *= d;
  CMatrix out = CMatrix::Zero(total, total);
  const auto na = static_cast<Eigen::Index>(active.size());
  for (Eigen::Index r = 0; r < na; ++r)
    for (Eigen::Index c = 0; c < na; ++c) {
      const Complex v = u(r, c);
      if (v == Complex(0, 0)) continue;
      for (Eigen::Index off : rest)
        out(active[static_cast<std::size_t>(r)] + off,
            active[static_cast<std::size_t>(c)] + off) = v;
    }
  return out;
}

/// Product of all embedded stages, first stage rightmost (applied first).
inline CMatrix full_collision_unitary(const CM2Model& model) {
  const auto unit_dims = model.ancilla.unit_dims();
  CMatrix u = identity(model.joint_dim());
  for (const CollisionStage& st : model.collision.stages)
    u = embed_stage(st.unitary, model.system_dim, unit_dims, st.unit) * u;
  return u;
}

/// Measurement dephasing on the ancilla: rho -> sum_z M_z rho M_z^dag.
inline CMatrix measurement_dephase(const CMatrix& rho_y, const MeasurementSet& meas) {
  CMatrix out = CMatrix::Zero(rho_y.rows(), rho_y.cols());
  for (const CMatrix& m : meas.operators) out += m * rho_y * m.adjoint();
  return out;
}

/// Report of the measurement back-action condition: the measurement must not
/// move population between eigenspaces of the fresh ancilla state, evaluated
/// on post-collision ancilla states for a full operator basis of system
/// inputs. `residual` is the worst support-restricted trace deviation
/// |tr{(dephased - raw) ln rho_Y}| combined with the worst null-space weight
/// change; both vanish within 1e-10 iff the condition holds.
struct MeasurementConditionReport {
  bool holds = false;
  double residual = 0.0;
};

inline MeasurementConditionReport check_measurement_condition(const CM2Model& model) {
  const Eigen::Index dx = model.system_dim;
  const Eigen::Index dy = model.ancilla_dim();
  const CMatrix u = full_collision_unitary(model);
  const CMatrix rho_y = model.ancilla.product_state();
  const CMatrix log_y = log_on_support(rho_y);
  const HermitianSpectrum sy = eig_hermitian(rho_y);
  CMatrix null_proj = CMatrix::Zero(dy, dy);
  for (Eigen::Index k = 0; k < dy; ++k)
    if (sy.eigenvalues(k) <= kEigenvalueFloor)
      null_proj += sy.eigenvectors.col(k) * sy.eigenvectors.col(k).adjoint();

  // Hermitian operator basis on the system; linearity makes this exhaustive.
  std::vector<CMatrix> basis;
  for (Eigen::Index j = 0; j < dx; ++j) basis.push_back(basis_projector(dx, j));
  for (Eigen::Index j = 0; j < dx; ++j)
    for (Eigen::Index k = j + 1; k < dx; ++k) {
      CMatrix sym = CMatrix::Zero(dx, dx);
      sym(j, k) = sym(k, j) = 1.0;
      basis.push_back(sym);
      CMatrix asym = CMatrix::Zero(dx, dx);
      asym(j, k) = Complex(0, -1);
      asym(k, j) = Complex(0, 1);
      basis.push_back(asym);
    }

  double worst = 0.0;
  for (const CMatrix& b : basis) {
    const CMatrix joint = u * tensor(b, rho_y) * u.adjoint();
    const CMatrix post = trace_out_first(joint, dx, dy);
    const CMatrix diff = measurement_dephase(post, model.measurement) - post;
    worst = std::max(worst, std::abs((diff * log_y).trace()));
    worst = std::max(worst, std::abs((diff * null_proj).trace()));
  }
  return {worst < 1e-10, worst};
}

/// Structural and numerical validation outcome for a model.
struct ValidationReport {
  std::vector<std::string> issues;
  std::vector<bool> pure_units;  // rank-deficient units; flux terms may be +inf
  MeasurementConditionReport measurement_condition;

  bool pass() const { return issues.empty(); }

  std::string to_string() const {
    std::ostringstream os;
    os << (pass() ? "model valid" : "model INVALID") << "\n";
    for (const std::string& s : issues) os << "  issue: " << s << "\n";
    for (std::size_t j = 0; j < pure_units.size(); ++j)
      if (pure_units[j])
        os << "  note: ancilla unit " << j
           << " is rank-deficient; relative entropies and fluxes may be +inf\n";
    os << "  measurement condition: " << (measurement_condition.holds ? "holds" : "violated")
       << " (residual " << measurement_condition.residual << ")\n";
    return os.str();
  }
};

/// Check every model invariant: state validity of rho_x0 and each unit,
/// stage dimensions and unitarity (1e-12), full-collision unitarity,
/// measurement completeness (1e-10), and label consistency. Pure ancilla
/// units are flagged, not rejected.
inline ValidationReport validate(const CM2Model& model) {
  ValidationReport rep;
  auto add = [&rep](const std::string& s) { rep.issues.push_back(s); };

  if (model.system_dim < 1) add("system_dim must be >= 1");
  if (model.rho_x0.dim() != model.system_dim)
    add("rho_x0 dimension does not match system_dim");
  {
    const std::string why = detail::density_violation(model.rho_x0.matrix);
    if (!why.empty()) add("rho_x0: " + why);
  }

  if (model.ancilla.units.empty()) add("ancilla must have at least one unit");
  rep.pure_units.assign(model.ancilla.n_units(), false);
  for (std::size_t j = 0; j < model.ancilla.n_units(); ++j) {
    const CMatrix& m = model.ancilla.units[j].matrix;
    const std::string why = detail::density_violation(m);
    if (!why.empty()) {
      add("ancilla unit " + std::to_string(j) + ": " + why);
      continue;
    }
    rep.pure_units[j] = eig_hermitian(m).eigenvalues.minCoeff() <= kEigenvalueFloor;
  }
  if (!rep.issues.empty()) return rep;  // downstream checks need valid shapes

  const auto unit_dims = model.ancilla.unit_dims();
  if (model.collision.stages.empty()) add("collision must have at least one stage");
  for (std::size_t k = 0; k < model.collision.stages.size(); ++k) {
    const CollisionStage& st = model.collision.stages[k];
    if (st.unit >= unit_dims.size()) {
      add("stage " + std::to_string(k) + ": unit index out of range");
      continue;
    }
    const Eigen::Index want = model.system_dim * unit_dims[st.unit];
    if (st.unitary.rows() != want || st.unitary.cols() != want) {
      add("stage " + std::to_string(k) + ": dimension mismatch");
      continue;
    }
    if (!is_unitary(st.unitary, kUnitaryTol))
      add("stage " + std::to_string(k) + ": not unitary within 1e-12");
  }
  if (rep.issues.empty() && !is_unitary(full_collision_unitary(model), kUnitaryTol))
    add("full collision unitary fails unitarity within 1e-12");

  const Eigen::Index dy = model.ancilla.total_dim();
  if (model.measurement.operators.empty()) add("measurement must have at least one operator");
  CMatrix completeness = CMatrix::Zero(dy, dy);
  for (std::size_t z = 0; z < model.measurement.n_outcomes(); ++z) {
    const CMatrix& m = model.measurement.operators[z];
    if (m.rows() != dy || m.cols() != dy) {
      add("measurement operator " + std::to_string(z) + ": dimension mismatch");
      continue;
    }
    completeness += m.adjoint() * m;
  }
  if (rep.issues.empty()) {
    const double dev = max_abs(completeness - identity(dy));
    if (dev > 1e-10)
      add("measurement completeness deviation " + std::to_string(dev) + " exceeds 1e-10");
  }
  if (!model.measurement.labels.empty() &&
      model.measurement.labels.size() != model.measurement.n_outcomes())
    add("label count does not match outcome count");

  if (rep.issues.empty()) rep.measurement_condition = check_measurement_condition(model);
  return rep;
}

}  // namespace cm2
