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

#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "cm2/presets.hpp"
#include "cm2/thermo.hpp"

using cm2::CMatrix;
using cm2::Complex;

TEST_CASE("thermal qubit populations and range checks") {
  CHECK(cm2::thermal_qubit(0.0).matrix(1, 1).real() == doctest::Approx(1.0));
  CHECK(cm2::thermal_qubit(1.0).matrix(0, 0).real() == doctest::Approx(1.0));
  const CMatrix half = cm2::thermal_qubit(0.5).matrix;
  CHECK(cm2::max_abs(half - CMatrix::Identity(2, 2) * 0.5) < 1e-15);
  CHECK(cm2::thermal_qubit(0.3).matrix(0, 0).real() == doctest::Approx(0.3));
  CHECK_THROWS_AS(cm2::thermal_qubit(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(cm2::thermal_qubit(1.1), std::invalid_argument);
}

TEST_CASE("transverse pure state") {
  const CMatrix rho = cm2::xplus().matrix;
  CMatrix sx(2, 2);
  sx << 0, 1, 1, 0;
  CHECK(cm2::max_abs(sx * rho - rho) < 1e-15);  // +1 eigenstate of sigma_x
  CHECK(std::abs((rho * rho - rho).trace()) < 1e-15);
  CHECK(cm2::vn_entropy(rho) < 1e-12);
}

TEST_CASE("partial swap inverts, vanishes at zero, and has the stated entries") {
  const double g = 0.437;
  CHECK(cm2::max_abs(cm2::partial_swap(g) * cm2::partial_swap(-g) - cm2::identity(4)) <
        1e-12);
  CHECK(cm2::max_abs(cm2::partial_swap(0.0) - cm2::identity(4)) < 1e-15);
  const CMatrix u = cm2::partial_swap(g);
  CHECK(std::abs(u(1, 1) - Complex(std::cos(g), 0)) < 1e-15);
  CHECK(std::abs(u(1, 2) - Complex(0, -std::sin(g))) < 1e-15);
  CHECK(std::abs(u(2, 1) - Complex(0, -std::sin(g))) < 1e-15);
  CHECK(std::abs(u(0, 0) - Complex(1, 0)) < 1e-15);
  CHECK(cm2::is_unitary(u, 1e-12));
}

TEST_CASE("single-qubit model relaxes to its ancilla and satisfies the dephasing condition") {
  const cm2::CM2Model m = cm2::single_qubit_model(0.3, 0.3);
  CHECK(cm2::validate(m).pass());
  CHECK(cm2::max_abs(cm2::fixed_point(m).matrix - cm2::thermal_qubit(0.3).matrix) < 1e-10);
  CHECK(cm2::check_measurement_condition(m).holds);
}

TEST_CASE("decoupled second unit reduces to the single-qubit model") {
  const cm2::CM2Model one = cm2::single_qubit_model(0.3, 0.3);
  const cm2::CM2Model two = cm2::two_qubit_model(0.3, 0.3, 0.0);
  const cm2::ExactLedgerResult r1 = cm2::exact_ledger(one, 5);
  const cm2::ExactLedgerResult r2 = cm2::exact_ledger(two, 5);
  for (std::size_t t = 0; t < 5; ++t) {
    const cm2::StepLedger& a = r1.series.steps[t];
    const cm2::StepLedger& b = r2.series.steps[t];
    CHECK(std::abs(a.s_u - b.s_u) < 1e-12);
    CHECK(std::abs(a.s_c - b.s_c) < 1e-12);
    CHECK(std::abs(a.info - b.info) < 1e-12);
    CHECK(std::abs(a.gain - b.gain) < 1e-12);
    CHECK(std::abs(a.loss - b.loss) < 1e-12);
    CHECK(std::abs(a.d_phi_u - b.d_phi_u) < 1e-12);
    CHECK(std::abs(a.d_sigma_u - b.d_sigma_u) < 1e-12);
    // The idle pure unit contributes no flux of its own.
    CHECK(std::abs(b.unit_fluxes[1]) < 1e-12);
  }
}

TEST_CASE("balanced ancilla drives zero flux through the maximally mixed state") {
  cm2::CM2Model m = cm2::two_qubit_model(0.5, 0.3, 0.0);
  m.rho_x0 = cm2::DensityMatrix::checked(CMatrix::Identity(2, 2) * 0.5);
  const cm2::FluxBreakdown f = cm2::delta_sigma_u(m.rho_x0.matrix, m);
  CHECK(std::abs(f.d_phi_u) < 1e-12);
  CHECK(std::abs(f.d_s) < 1e-12);
}

TEST_CASE("fixed-point start keeps the unconditional entropy constant") {
  const cm2::CM2Model m = cm2::make_preset("two-qubit-fp", {});
  const cm2::Collider c(m);
  const double s0 = cm2::vn_entropy(m.rho_x0.matrix);
  CMatrix rho = m.rho_x0.matrix;
  for (int t = 0; t < 10; ++t) {
    rho = c.uncond_step(rho);
    CHECK(std::abs(cm2::vn_entropy(rho) - s0) < 1e-12);
  }
}

TEST_CASE("reading the first unit builds record correlations at the fixed point") {
  const cm2::CM2Model m = cm2::make_preset("two-qubit-fp", {});
  const cm2::ExactLedgerResult res = cm2::exact_ledger(m, 3);
  CHECK(res.all_pass());
  for (const cm2::StepLedger& led : res.series.steps) {
    CHECK(led.info > 0.0);
    CHECK(led.gain > 0.0);
  }
}

TEST_CASE("single-qubit chain started at the fixed point is fully stationary") {
  const cm2::CM2Model m = cm2::fixed_point_start(cm2::single_qubit_model(0.3, 0.3));
  const cm2::ExactLedgerResult res = cm2::exact_ledger(m, 4);
  CHECK(res.all_pass());
  for (const cm2::StepLedger& led : res.series.steps) {
    CHECK(std::abs(led.gain) < 1e-12);
    CHECK(std::abs(led.loss) < 1e-12);
    CHECK(std::abs(led.info) < 1e-12);
    CHECK(std::abs(led.d_sigma_u) < 1e-12);
    CHECK(std::abs(led.d_phi_u) < 1e-12);
  }
}

TEST_CASE("all presets validate and unknown names are rejected") {
  for (const std::string& name : cm2::preset_names()) {
    const cm2::CM2Model m = cm2::make_preset(name, {});
    CHECK(cm2::validate(m).pass());
  }
  CHECK_THROWS_AS(cm2::make_preset("no-such-preset", {}), std::invalid_argument);
  const std::vector<std::string> names = cm2::preset_names();
  CHECK(std::find(names.begin(), names.end(), "two-qubit") != names.end());
  CHECK(names.size() == 3);
}

TEST_CASE("epsilon mixing only touches rank-deficient units") {
  const cm2::CM2Model m = cm2::two_qubit_model(0.3, 0.3, 0.1, 1e-6);
  // Thermal unit is full rank and untouched.
  CHECK(cm2::max_abs(m.ancilla.units[0].matrix - cm2::thermal_qubit(0.3).matrix) < 1e-15);
  // Pure unit picks up exactly the requested admixture.
  const CMatrix expect =
      (1.0 - 1e-6) * cm2::xplus().matrix + 1e-6 * CMatrix::Identity(2, 2) * 0.5;
  CHECK(cm2::max_abs(m.ancilla.units[1].matrix - expect) < 1e-15);
  CHECK(cm2::validate(m).pass());
}
