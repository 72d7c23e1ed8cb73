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
#include <string>
#include <vector>

#include "cm2/dynamics.hpp"
#include "cm2/linalg.hpp"
#include "cm2/model.hpp"

// Ready-made qubit models: thermal and coherent single-qubit states, the
// partial-SWAP collision, a single-qubit measured collision model, and a
// two-unit variant where only the first unit is read out.

namespace cm2 {

/// Parameters shared by the built-in models. epsilon_mix > 0 mixes any
/// rank-deficient ancilla unit with the maximally mixed state so that all
/// flux terms stay finite; 0 keeps the states exactly as specified.
struct PresetParams {
  double f = 0.3;
  double g = 0.3;
  double g1 = 0.3;
  double g2 = 0.1;
  double epsilon_mix = 0.0;
};

/// diag(f, 1 - f): a qubit thermal state with ground population f.
inline DensityMatrix thermal_qubit(double f) {
  if (!(f >= 0.0 && f <= 1.0))
    throw std::invalid_argument("thermal_qubit: f must lie in [0, 1]");
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = f;
  m(1, 1) = 1.0 - f;
  return DensityMatrix{m};
}

/// |x+><x+|, the +1 eigenstate of sigma_x.
inline DensityMatrix xplus() {
  CMatrix m(2, 2);
  m << 0.5, 0.5, 0.5, 0.5;
  return DensityMatrix{m};
}

/// Partial-SWAP collision on two qubits: identity on {|00>, |11>} and a
/// rotation by angle g mixing |01> and |10> with amplitude -i sin g.
inline CMatrix partial_swap(double g) {
  CMatrix u = CMatrix::Identity(4, 4);
  const Complex c(std::cos(g), 0.0);
  const Complex s(0.0, -std::sin(g));
  u(1, 1) = c;
  u(1, 2) = s;
  u(2, 1) = s;
  u(2, 2) = c;
  return u;
}

namespace detail {

inline DensityMatrix mix_if_deficient(const DensityMatrix& rho, double eps) {
  if (eps <= 0.0) return rho;
  const double min_eig = eig_hermitian(rho.matrix).eigenvalues.minCoeff();
  if (min_eig > kEigenvalueFloor) return rho;
  const Eigen::Index d = rho.dim();
  CMatrix mixed = (1.0 - eps) * rho.matrix +
                  eps * CMatrix::Identity(d, d) / static_cast<double>(d);
  return DensityMatrix{mixed};
}

inline MeasurementSet computational_measurement(Eigen::Index dy) {
  MeasurementSet meas;
  for (Eigen::Index z = 0; z < dy; ++z) {
    meas.operators.push_back(basis_projector(dy, z));
    meas.labels.push_back(std::to_string(z));
  }
  return meas;
}

}  // namespace detail

/// One thermal qubit ancilla, partial SWAP, computational readout of the
/// ancilla; the system starts in |x+>.
inline CM2Model single_qubit_model(double f, double g, double epsilon_mix = 0.0) {
  CM2Model m;
  m.system_dim = 2;
  m.rho_x0 = xplus();
  m.ancilla.units.push_back(detail::mix_if_deficient(thermal_qubit(f), epsilon_mix));
  m.collision.stages.push_back(CollisionStage{0, partial_swap(g)});
  m.measurement = detail::computational_measurement(2);
  return m;
}

/// Two ancilla units, a thermal qubit then |x+>, hit sequentially by partial
/// SWAPs with angles g1 and g2; only the first unit is read out.
inline CM2Model two_qubit_model(double f, double g1, double g2, double epsilon_mix = 0.0) {
  CM2Model m;
  m.system_dim = 2;
  m.rho_x0 = xplus();
  m.ancilla.units.push_back(detail::mix_if_deficient(thermal_qubit(f), epsilon_mix));
  m.ancilla.units.push_back(detail::mix_if_deficient(xplus(), epsilon_mix));
  m.collision.stages.push_back(CollisionStage{0, partial_swap(g1)});
  m.collision.stages.push_back(CollisionStage{1, partial_swap(g2)});
  MeasurementSet meas;
  meas.operators.push_back(tensor(basis_projector(2, 0), identity(2)));
  meas.operators.push_back(tensor(basis_projector(2, 1), identity(2)));
  meas.labels = {"0", "1"};
  m.measurement = meas;
  return m;
}

/// Same model, started from the unique fixed point of its unconditional
/// channel; the unconditional series is then constant.
inline CM2Model fixed_point_start(const CM2Model& model) {
  CM2Model m = model;
  m.rho_x0 = fixed_point(model);
  return m;
}

inline std::vector<std::string> preset_names() {
  return {"single-qubit", "two-qubit", "two-qubit-fp"};
}

inline CM2Model make_preset(const std::string& name, const PresetParams& p = {}) {
  if (name == "single-qubit") return single_qubit_model(p.f, p.g, p.epsilon_mix);
  if (name == "two-qubit") return two_qubit_model(p.f, p.g1, p.g2, p.epsilon_mix);
  if (name == "two-qubit-fp")
    return fixed_point_start(two_qubit_model(p.f, p.g1, p.g2, p.epsilon_mix));
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace cm2
