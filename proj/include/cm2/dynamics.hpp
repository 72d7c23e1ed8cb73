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
#include <cstdint>
#include <string>
#include <vector>

#include "cm2/linalg.hpp"
#include "cm2/model.hpp"
#include "cm2/rng.hpp"

// Conditional and unconditional dynamics of the collision process. One step:
// couple the system to a fresh ancilla, apply the collision unitary, measure
// the ancilla, and either keep the outcome-resolved system state (conditional
// maps) or discard the record (unconditional channel).

namespace cm2 {

/// Thrown when exact enumeration would exceed the branch budget.
class EnumerationBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the eigenvalue-1 subspace of the channel is degenerate.
class NonUniqueFixedPointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precompiled collision machinery for one model: the full unitary, the
/// product ancilla state, and measurement operators embedded on the joint
/// space. All maps act on (possibly unnormalized) system operators.
class Collider {
 public:
  explicit Collider(const CM2Model& model)
      : dx_(model.system_dim),
        dy_(model.ancilla.total_dim()),
        unit_dims_(model.ancilla.unit_dims()),
        rho_y_(model.ancilla.product_state()),
        u_(full_collision_unitary(model)),
        u_dag_(u_.adjoint()),
        labels_() {
    const CMatrix ix = identity(dx_);
    for (std::size_t z = 0; z < model.measurement.n_outcomes(); ++z) {
      const CMatrix& m = model.measurement.operators[z];
      m_full_.push_back(tensor(ix, m));
      effect_t_.push_back(tensor(ix, CMatrix(m.adjoint() * m)).transpose());
      labels_.push_back(model.measurement.label(z));
    }
    joint_dims_.push_back(dx_);
    for (Eigen::Index d : unit_dims_) joint_dims_.push_back(d);
  }

  Eigen::Index system_dim() const { return dx_; }
  Eigen::Index ancilla_dim() const { return dy_; }
  std::size_t n_units() const { return unit_dims_.size(); }
  int n_outcomes() const { return static_cast<int>(m_full_.size()); }
  const CMatrix& unitary() const { return u_; }
  const CMatrix& ancilla_state() const { return rho_y_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Joint post-collision state U (rho (x) rho_Y) U^dag.
  CMatrix joint_collide(const CMatrix& rho_x) const {
    return u_ * tensor(rho_x, rho_y_) * u_dag_;
  }

  CMatrix reduce_system(const CMatrix& joint) const {
    return trace_out_second(joint, dx_, dy_);
  }

  CMatrix reduce_ancilla(const CMatrix& joint) const {
    return trace_out_first(joint, dx_, dy_);
  }

  /// Post-collision marginal of ancilla unit j.
  CMatrix reduce_unit(const CMatrix& joint, std::size_t j) const {
    return partial_trace(joint, joint_dims_, {j + 1});
  }

  /// Unconditional channel: collide, then trace the ancilla out.
  CMatrix uncond_step(const CMatrix& rho_x) const {
    return reduce_system(joint_collide(rho_x));
  }

  /// Unnormalized conditional map for outcome z applied to a precomputed
  /// joint state; its trace is the outcome probability.
  CMatrix cond_from_joint(const CMatrix& joint, int z) const {
    const CMatrix filtered = m_full_[static_cast<std::size_t>(z)] * joint *
                             m_full_[static_cast<std::size_t>(z)].adjoint();
    return reduce_system(filtered);
  }

  /// Outcome weight tr{(1 (x) M_z^dag M_z) joint} without forming the map.
  double weight_from_joint(const CMatrix& joint, int z) const {
    return effect_t_[static_cast<std::size_t>(z)].cwiseProduct(joint).sum().real();
  }

  std::vector<double> outcome_weights(const CMatrix& joint) const {
    std::vector<double> w(static_cast<std::size_t>(n_outcomes()));
    for (int z = 0; z < n_outcomes(); ++z)
      w[static_cast<std::size_t>(z)] = weight_from_joint(joint, z);
    return w;
  }

 private:
  Eigen::Index dx_, dy_;
  std::vector<Eigen::Index> unit_dims_;
  std::vector<Eigen::Index> joint_dims_;
  CMatrix rho_y_, u_, u_dag_;
  std::vector<CMatrix> m_full_;
  std::vector<CMatrix> effect_t_;  // transposed effects, for trace pairing
  std::vector<std::string> labels_;
};

inline CMatrix joint_collide(const CMatrix& rho_x, const CM2Model& model) {
  return Collider(model).joint_collide(rho_x);
}

inline CMatrix uncond_step(const CMatrix& rho_x, const CM2Model& model) {
  return Collider(model).uncond_step(rho_x);
}

/// Unnormalized conditional map E_z on a (possibly unnormalized) input.
inline CMatrix cond_apply(const CMatrix& rho_x, int z, const CM2Model& model) {
  const Collider c(model);
  return c.cond_from_joint(c.joint_collide(rho_x), z);
}

/// One sampled measurement step.
struct SampleStep {
  int outcome = 0;
  double weight = 0.0;       // P(z | state)
  CMatrix state;             // normalized post-outcome system state
  CMatrix intermediate;      // pre-measurement system marginal E(rho)
};

inline SampleStep sample_step(const CMatrix& rho_x, const Collider& c, SplitMix64& rng) {
  const CMatrix joint = c.joint_collide(rho_x);
  const std::vector<double> w = c.outcome_weights(joint);
  const int z = sample_index(w, rng.uniform());
  SampleStep out;
  out.outcome = z;
  out.weight = w[static_cast<std::size_t>(z)];
  out.state = c.cond_from_joint(joint, z) / out.weight;
  out.intermediate = c.reduce_system(joint);
  return out;
}

inline SampleStep sample_step(const CMatrix& rho_x, const CM2Model& model, SplitMix64& rng) {
  const Collider c(model);
  return sample_step(rho_x, c, rng);
}

/// One sampled measurement record. Index convention: outcomes[t-1],
/// weights[t-1], intermediates[t-1] belong to step t; states[t] is the
/// conditional state after step t with states[0] the initial state.
struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<int> outcomes;
  std::vector<double> weights;
  std::vector<CMatrix> states;
  std::vector<CMatrix> intermediates;

  double record_probability() const {
    double p = 1.0;
    for (double w : weights) p *= w;
    return p;
  }
};

inline TrajectoryRecord run_trajectory(const CM2Model& model, int steps, std::uint64_t seed) {
  const Collider c(model);
  SplitMix64 rng(seed);
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.states.reserve(static_cast<std::size_t>(steps) + 1);
  rec.states.push_back(model.rho_x0.matrix);
  for (int t = 1; t <= steps; ++t) {
    SampleStep s = sample_step(rec.states.back(), c, rng);
    rec.outcomes.push_back(s.outcome);
    rec.weights.push_back(s.weight);
    rec.intermediates.push_back(std::move(s.intermediate));
    rec.states.push_back(std::move(s.state));
  }
  return rec;
}

/// Unconditional evolution with the post-collision joint and ancilla
/// marginals retained for thermodynamic bookkeeping. system[t] is rho_{X_t};
/// joint[t-1], ancilla_post[t-1], unit_post[t-1] belong to step t.
struct UnconditionalRun {
  std::vector<CMatrix> system;
  std::vector<CMatrix> joint;
  std::vector<CMatrix> ancilla_post;
  std::vector<std::vector<CMatrix>> unit_post;
};

inline UnconditionalRun run_unconditional(const CM2Model& model, int steps) {
  const Collider c(model);
  UnconditionalRun run;
  run.system.reserve(static_cast<std::size_t>(steps) + 1);
  run.system.push_back(model.rho_x0.matrix);
  for (int t = 1; t <= steps; ++t) {
    CMatrix joint = c.joint_collide(run.system.back());
    run.system.push_back(c.reduce_system(joint));
    run.ancilla_post.push_back(c.reduce_ancilla(joint));
    std::vector<CMatrix> units;
    for (std::size_t j = 0; j < c.n_units(); ++j) units.push_back(c.reduce_unit(joint, j));
    run.unit_post.push_back(std::move(units));
    run.joint.push_back(std::move(joint));
  }
  return run;
}

/// One branch of the exactly enumerated record ensemble: the outcome string,
/// its probability, and the normalized conditional state.
struct Branch {
  std::vector<int> outcomes;
  double prob = 0.0;
  CMatrix state;
};

/// All surviving branches at a fixed time, with the probability mass removed
/// by pruning accumulated separately. sum(prob) + discarded_mass == 1.
struct BranchEnsemble {
  int t = 0;
  std::vector<Branch> branches;
  double discarded_mass = 0.0;

  /// Probability-weighted mixture of the branch states.
  CMatrix mixture() const {
    CMatrix m = CMatrix::Zero(branches.front().state.rows(), branches.front().state.cols());
    for (const Branch& b : branches) m += b.prob * b.state;
    return m;
  }
};

/// Per-parent byproducts of expanding an ensemble by one collision, used by
/// the thermodynamic ledger.
struct ExpandResult {
  BranchEnsemble next;
  std::vector<CMatrix> intermediates;       // E(rho_parent), one per parent
  std::vector<CMatrix> ancilla_posteriors;  // tr_X of the parent joint
  std::vector<CMatrix> joints;              // parent joint states
  std::vector<std::vector<double>> child_weights;  // P(z | parent)
};

inline ExpandResult expand_ensemble(const BranchEnsemble& prev, const Collider& c,
                                    double prune) {
  ExpandResult out;
  out.next.t = prev.t + 1;
  out.next.discarded_mass = prev.discarded_mass;
  for (const Branch& parent : prev.branches) {
    CMatrix joint = c.joint_collide(parent.state);
    out.intermediates.push_back(c.reduce_system(joint));
    out.ancilla_posteriors.push_back(c.reduce_ancilla(joint));
    std::vector<double> weights(static_cast<std::size_t>(c.n_outcomes()));
    for (int z = 0; z < c.n_outcomes(); ++z) {
      const double w = c.weight_from_joint(joint, z);
      weights[static_cast<std::size_t>(z)] = w;
      const double p_child = parent.prob * w;
      if (p_child < prune) {
        out.next.discarded_mass += p_child;
        continue;
      }
      Branch child;
      child.outcomes = parent.outcomes;
      child.outcomes.push_back(z);
      child.prob = p_child;
      child.state = c.cond_from_joint(joint, z) / w;
      out.next.branches.push_back(std::move(child));
    }
    out.child_weights.push_back(std::move(weights));
    out.joints.push_back(std::move(joint));
  }
  return out;
}

/// Exact enumeration of every outcome record up to `steps` collisions.
/// Branches with probability below `prune` are dropped and their mass is
/// tracked. Refuses up front when the worst case exceeds `max_branches`.
inline std::vector<BranchEnsemble> enumerate_exact(const CM2Model& model, int steps,
                                                   double prune = 1e-14,
                                                   std::size_t max_branches = (1u << 22)) {
  const Collider c(model);
  const double worst = static_cast<double>(steps) * std::log(static_cast<double>(c.n_outcomes()));
  if (worst > std::log(static_cast<double>(max_branches)))
    throw EnumerationBudgetError(
        "enumerate_exact: up to " + std::to_string(c.n_outcomes()) + "^" +
        std::to_string(steps) + " branches exceed the budget of " +
        std::to_string(max_branches) + "; lower steps or raise the budget");

  std::vector<BranchEnsemble> out;
  BranchEnsemble root;
  root.t = 0;
  root.branches.push_back(Branch{{}, 1.0, model.rho_x0.matrix});
  out.push_back(std::move(root));
  for (int t = 1; t <= steps; ++t)
    out.push_back(expand_ensemble(out.back(), c, prune).next);
  return out;
}

/// Matrix of the unconditional channel in the column-stacking convention:
/// vec(E(rho)) = K vec(rho).
inline CMatrix channel_matrix(const CM2Model& model) {
  const Collider c(model);
  const Eigen::Index d = model.system_dim;
  CMatrix k(d * d, d * d);
  for (Eigen::Index col = 0; col < d; ++col)
    for (Eigen::Index row = 0; row < d; ++row) {
      CMatrix e = CMatrix::Zero(d, d);
      e(row, col) = 1.0;
      const CMatrix image = c.uncond_step(e);
      k.col(col * d + row) = Eigen::Map<const Eigen::VectorXcd>(image.data(), d * d);
    }
  return k;
}

/// Unique fixed point of the unconditional channel, found as the eigenvalue-1
/// eigenvector of the channel matrix and polished by repeated application of
/// the channel. Throws NonUniqueFixedPointError when the eigenvalue-1
/// subspace is degenerate within 1e-8.
inline DensityMatrix fixed_point(const CM2Model& model) {
  const Eigen::Index d = model.system_dim;
  const CMatrix k = channel_matrix(model);
  Eigen::ComplexEigenSolver<CMatrix> solver(k);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("fixed_point: eigensolver failed to converge");

  int hits = 0;
  Eigen::Index which = -1;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
    if (std::abs(solver.eigenvalues()(i) - Complex(1.0, 0.0)) < 1e-8) {
      ++hits;
      which = i;
    }
  if (hits == 0) throw std::runtime_error("fixed_point: no eigenvalue-1 subspace found");
  if (hits > 1)
    throw NonUniqueFixedPointError("fixed_point: eigenvalue-1 subspace has dimension " +
                                   std::to_string(hits) + "; fixed point not unique");

  Eigen::VectorXcd v = solver.eigenvectors().col(which);
  CMatrix rho = Eigen::Map<const CMatrix>(v.data(), d, d);
  rho = 0.5 * (rho + CMatrix(rho.adjoint()));
  const double tr = rho.trace().real();
  if (std::abs(tr) < 1e-10)
    throw std::runtime_error("fixed_point: eigenvector has vanishing trace");
  rho /= tr;

  const Collider c(model);
  for (int i = 0; i < 64; ++i) rho = c.uncond_step(rho);
  rho = 0.5 * (rho + CMatrix(rho.adjoint()));
  rho /= rho.trace().real();
  const double residual = trace_norm_hermitian(c.uncond_step(rho) - rho);
  if (residual > 1e-12)
    throw std::runtime_error("fixed_point: residual " + std::to_string(residual) +
                             " exceeds 1e-12 after polishing");
  return DensityMatrix::checked(rho);
}

}  // namespace cm2
