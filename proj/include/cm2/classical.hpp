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

// Classical reduction of incoherent collision models: when every collision
// maps basis states to basis states (up to phases) and both the ancilla
// state and the measurement are diagonal, the outcome process is a hidden
// Markov chain. This module builds that chain independently of the quantum
// engine so the two can cross-validate each other.

namespace cm2 {

/// Outcome of the basis-preservation check; (x, y, yprime) is the first
/// violating triple when ok is false.
struct IncoherenceWitness {
  bool ok = true;
  Eigen::Index x = -1;
  Eigen::Index y = -1;
  Eigen::Index yprime = -1;

  std::string to_string() const {
    if (ok) return "unconditionally incoherent";
    return "incoherence violated at (x=" + std::to_string(x) + ", y=" + std::to_string(y) +
           ", y'=" + std::to_string(yprime) + ")";
  }
};

/// A unitary is unconditionally incoherent in the given product bases when
/// U|x,y> restricted to any ancilla column y' with weight above 1e-12 is a
/// single system basis state up to phase (overlap >= 1 - 1e-10). Bases are
/// given as column-vector matrices; identity means computational.
inline IncoherenceWitness check_unconditionally_incoherent(const CMatrix& u, Eigen::Index dx,
                                                           Eigen::Index dy,
                                                           const CMatrix& x_basis,
                                                           const CMatrix& y_basis) {
  if (u.rows() != dx * dy || u.cols() != dx * dy)
    throw std::invalid_argument("check_unconditionally_incoherent: dimension mismatch");
  const CMatrix b = tensor(x_basis, y_basis);
  const CMatrix w = b.adjoint() * u * b;  // unitary expressed in the given bases
  for (Eigen::Index x = 0; x < dx; ++x)
    for (Eigen::Index y = 0; y < dy; ++y) {
      const Eigen::Index col = x * dy + y;
      for (Eigen::Index yp = 0; yp < dy; ++yp) {
        double weight = 0.0, peak = 0.0;
        for (Eigen::Index xp = 0; xp < dx; ++xp) {
          const double a = std::norm(w(xp * dy + yp, col));
          weight += a;
          peak = std::max(peak, a);
        }
        if (weight <= 1e-12) continue;
        if (peak / weight < 1.0 - 1e-10) return {false, x, y, yp};
      }
    }
  return {true, -1, -1, -1};
}

inline IncoherenceWitness check_unconditionally_incoherent(const CMatrix& u, Eigen::Index dx,
                                                           Eigen::Index dy) {
  return check_unconditionally_incoherent(u, dx, dy, identity(dx), identity(dy));
}

/// Verdict for the full classical reduction; `violated` names the first
/// failing requirement when ok is false.
struct ConditionalIncoherence {
  bool ok = true;
  std::string violated;
};

/// A model is conditionally incoherent in the computational bases when the
/// collision is unconditionally incoherent, every ancilla unit is diagonal
/// (1e-12), and every measurement operator is diagonal (1e-12).
inline ConditionalIncoherence check_conditionally_incoherent(const CM2Model& model) {
  for (std::size_t j = 0; j < model.ancilla.n_units(); ++j) {
    const CMatrix& m = model.ancilla.units[j].matrix;
    CMatrix off = m;
    off.diagonal().setZero();
    if (max_abs(off) > 1e-12)
      return {false, "ancilla unit " + std::to_string(j) + " not diagonal"};
  }
  for (std::size_t z = 0; z < model.measurement.n_outcomes(); ++z) {
    CMatrix off = model.measurement.operators[z];
    off.diagonal().setZero();
    if (max_abs(off) > 1e-12)
      return {false, "measurement operator " + std::to_string(z) + " not diagonal"};
  }
  const IncoherenceWitness w = check_unconditionally_incoherent(
      full_collision_unitary(model), model.system_dim, model.ancilla_dim());
  if (!w.ok) return {false, w.to_string()};
  return {true, {}};
}

/// Collision transition probabilities Q(x'y'|xy) = |<x'y'|U|xy>|^2, indexed
/// q(x'*dy + y', x*dy + y). Unistochastic, hence doubly stochastic.
struct TransitionQ {
  Eigen::MatrixXd q;
  Eigen::Index dx = 0;
  Eigen::Index dy = 0;
};

inline TransitionQ build_Q(const CMatrix& u, Eigen::Index dx, Eigen::Index dy) {
  if (u.rows() != dx * dy || u.cols() != dx * dy)
    throw std::invalid_argument("build_Q: dimension mismatch");
  TransitionQ out;
  out.dx = dx;
  out.dy = dy;
  out.q = u.cwiseAbs2();
  return out;
}

inline TransitionQ build_Q(const CM2Model& model) {
  return build_Q(full_collision_unitary(model), model.system_dim, model.ancilla_dim());
}

/// Measurement post-processing M(z|y') = (M_z^dag M_z)_{y'y'}, indexed
/// m(z, y'). Columns sum to 1 by completeness.
struct NoiseM {
  Eigen::MatrixXd m;
};

inline NoiseM build_M(const MeasurementSet& meas, Eigen::Index dy) {
  NoiseM out;
  out.m.resize(static_cast<Eigen::Index>(meas.n_outcomes()), dy);
  for (std::size_t z = 0; z < meas.n_outcomes(); ++z) {
    const CMatrix eff = meas.operators[z].adjoint() * meas.operators[z];
    for (Eigen::Index yp = 0; yp < dy; ++yp)
      out.m(static_cast<Eigen::Index>(z), yp) = eff(yp, yp).real();
  }
  return out;
}

/// Joint outcome-and-state transition W(x', z | x) = sum_{y,y'} M(z|y')
/// Q(x'y'|xy) p(y), stored as one x' <- x matrix per outcome z.
struct TransitionW {
  std::vector<Eigen::MatrixXd> w;
  Eigen::Index dx = 0;

  int n_outcomes() const { return static_cast<int>(w.size()); }
};

inline TransitionW build_W(const TransitionQ& q, const NoiseM& m, const Eigen::VectorXd& p_y) {
  if (p_y.size() != q.dy) throw std::invalid_argument("build_W: p_y dimension mismatch");
  TransitionW out;
  out.dx = q.dx;
  const Eigen::Index nz = m.m.rows();
  for (Eigen::Index z = 0; z < nz; ++z) {
    Eigen::MatrixXd wz = Eigen::MatrixXd::Zero(q.dx, q.dx);
    for (Eigen::Index x = 0; x < q.dx; ++x)
      for (Eigen::Index xp = 0; xp < q.dx; ++xp) {
        double acc = 0.0;
        for (Eigen::Index y = 0; y < q.dy; ++y) {
          if (p_y(y) == 0.0) continue;
          for (Eigen::Index yp = 0; yp < q.dy; ++yp)
            acc += m.m(z, yp) * q.q(xp * q.dy + yp, x * q.dy + y) * p_y(y);
        }
        wz(xp, x) = acc;
      }
    out.w.push_back(std::move(wz));
  }
  return out;
}

/// Assemble the classical chain of a conditionally incoherent model; the
/// ancilla distribution is the diagonal of the product state.
inline TransitionW build_W(const CM2Model& model) {
  const TransitionQ q = build_Q(model);
  const NoiseM m = build_M(model.measurement, model.ancilla_dim());
  const Eigen::VectorXd p_y = model.ancilla.product_state().diagonal().real();
  return build_W(q, m, p_y);
}

/// Forward-filtered unnormalized distribution p(x_t, record) and the record
/// probability P(record).
struct HmmResult {
  Eigen::VectorXd joint;
  double prob = 0.0;
};

inline HmmResult hmm_forward(const TransitionW& w, const Eigen::VectorXd& p_x0,
                             const std::vector<int>& record) {
  if (p_x0.size() != w.dx) throw std::invalid_argument("hmm_forward: p_x0 dimension mismatch");
  HmmResult out;
  out.joint = p_x0;
  for (int z : record) {
    if (z < 0 || z >= w.n_outcomes())
      throw std::invalid_argument("hmm_forward: outcome index out of range");
    out.joint = w.w[static_cast<std::size_t>(z)] * out.joint;
  }
  out.prob = out.joint.sum();
  return out;
}

/// One sampled classical trajectory: states[t] is the chain state after t
/// steps (states[0] initial), outcomes[t-1] the step-t outcome.
struct ClassicalTrajectory {
  std::vector<int> states;
  std::vector<int> outcomes;
};

inline ClassicalTrajectory classical_sample(const TransitionW& w, const Eigen::VectorXd& p_x0,
                                            int steps, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ClassicalTrajectory out;
  std::vector<double> init(static_cast<std::size_t>(p_x0.size()));
  for (Eigen::Index i = 0; i < p_x0.size(); ++i) init[static_cast<std::size_t>(i)] = p_x0(i);
  int x = sample_index(init, rng.uniform());
  out.states.push_back(x);
  const int nz = w.n_outcomes();
  std::vector<double> joint(static_cast<std::size_t>(nz * w.dx));
  for (int t = 0; t < steps; ++t) {
    for (int z = 0; z < nz; ++z)
      for (Eigen::Index xp = 0; xp < w.dx; ++xp)
        joint[static_cast<std::size_t>(z * w.dx + xp)] =
            w.w[static_cast<std::size_t>(z)](xp, x);
    const int pick = sample_index(joint, rng.uniform());
    const int z = pick / static_cast<int>(w.dx);
    x = pick % static_cast<int>(w.dx);
    out.outcomes.push_back(z);
    out.states.push_back(x);
  }
  return out;
}

}  // namespace cm2
