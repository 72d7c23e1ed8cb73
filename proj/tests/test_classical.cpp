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

#include <cmath>
#include <cstdint>

#include <doctest.h>

#include "cm2/classical.hpp"
#include "cm2/dynamics.hpp"
#include "cm2/presets.hpp"
#include "test_util.hpp"

using cm2::CMatrix;
using cm2::Complex;

namespace {

CMatrix hadamard() {
  CMatrix h(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  h << s, s, s, -s;
  return h;
}

}  // namespace

TEST_CASE("partial-swap transition probabilities are mixtures of keep and swap") {
  const double g = 0.3;
  const double keep = std::cos(g) * std::cos(g);
  CHECK(keep == doctest::Approx(0.9126678074548391).epsilon(1e-14));
  const cm2::TransitionQ q = cm2::build_Q(cm2::partial_swap(g), 2, 2);
  Eigen::MatrixXd expect(4, 4);
  expect << 1, 0, 0, 0,
      0, keep, 1 - keep, 0,
      0, 1 - keep, keep, 0,
      0, 0, 0, 1;
  CHECK((q.q - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unistochastic transition matrices are doubly stochastic") {
  cm2::SplitMix64 rng(77);
  const cm2::TransitionQ q = cm2::build_Q(cm2test::haar_unitary(4, rng), 2, 2);
  for (Eigen::Index k = 0; k < 4; ++k) {
    CHECK(q.q.col(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.q.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("full swap reduces to the exchange permutation") {
  const cm2::TransitionQ q =
      cm2::build_Q(cm2::partial_swap(3.14159265358979323846 / 2), 2, 2);
  for (Eigen::Index x = 0; x < 2; ++x)
    for (Eigen::Index y = 0; y < 2; ++y)
      for (Eigen::Index xp = 0; xp < 2; ++xp)
        for (Eigen::Index yp = 0; yp < 2; ++yp) {
          const double expect = (xp == y && yp == x) ? 1.0 : 0.0;
          CHECK(std::abs(q.q(xp * 2 + yp, x * 2 + y) - expect) < 1e-12);
        }
}

TEST_CASE("incoherence witness localizes coherent transitions") {
  const CMatrix u = cm2::tensor(hadamard(), cm2::identity(2));
  const cm2::IncoherenceWitness w = cm2::check_unconditionally_incoherent(u, 2, 2);
  CHECK_FALSE(w.ok);
  CHECK(w.x == 0);
  CHECK(w.y == 0);
  CHECK(w.yprime == 0);
  CHECK(w.to_string().find("x=0") != std::string::npos);

  CHECK(cm2::check_unconditionally_incoherent(cm2::identity(4), 2, 2).ok);
  CHECK(cm2::check_unconditionally_incoherent(cm2::partial_swap(0.7), 2, 2).ok);

  // The same unitary is diagonal, hence incoherent, in its own eigenbasis.
  const CMatrix v = cm2::eig_hermitian(hadamard()).eigenvectors;
  CHECK(cm2::check_unconditionally_incoherent(u, 2, 2, v, cm2::identity(2)).ok);
}

TEST_CASE("conditional incoherence verdicts name the broken requirement") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const cm2::CM2Model m = cm2test::random_incoherent_model(seed);
    const cm2::ConditionalIncoherence ci = cm2::check_conditionally_incoherent(m);
    CHECK(ci.ok);
  }

  cm2::CM2Model bad_meas = cm2::single_qubit_model(0.3, 0.3);
  CMatrix plus(2, 2), minus(2, 2);
  plus << 0.5, 0.5, 0.5, 0.5;
  minus << 0.5, -0.5, -0.5, 0.5;
  bad_meas.measurement.operators = {plus, minus};
  const cm2::ConditionalIncoherence ci_meas = cm2::check_conditionally_incoherent(bad_meas);
  CHECK_FALSE(ci_meas.ok);
  CHECK(ci_meas.violated.find("measurement operator") != std::string::npos);

  const cm2::ConditionalIncoherence ci_unit =
      cm2::check_conditionally_incoherent(cm2::two_qubit_model(0.3, 0.3, 0.1));
  CHECK_FALSE(ci_unit.ok);
  CHECK(ci_unit.violated.find("ancilla unit 1") != std::string::npos);

  cm2::CM2Model bad_u = cm2::single_qubit_model(0.3, 0.3);
  bad_u.collision.stages[0].unitary = cm2::tensor(hadamard(), cm2::identity(2));
  const cm2::ConditionalIncoherence ci_u = cm2::check_conditionally_incoherent(bad_u);
  CHECK_FALSE(ci_u.ok);
  CHECK(ci_u.violated.find("incoherence violated") != std::string::npos);
}

TEST_CASE("chain transitions conserve probability") {
  for (std::uint64_t seed : {21u, 22u}) {
    const cm2::CM2Model m = cm2test::random_incoherent_model(seed);
    const cm2::TransitionW w = cm2::build_W(m);
    for (Eigen::Index x = 0; x < w.dx; ++x) {
      double tot = 0.0;
      for (const Eigen::MatrixXd& wz : w.w) tot += wz.col(x).sum();
      CHECK(tot == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("projective readout of the swapped qubit has closed-form statistics") {
  cm2::CM2Model m = cm2::single_qubit_model(0.3, 0.3);
  CMatrix excited = CMatrix::Zero(2, 2);
  excited(1, 1) = 1.0;
  m.rho_x0 = cm2::DensityMatrix::checked(excited);

  const cm2::NoiseM noise = cm2::build_M(m.measurement, 2);
  CHECK((noise.m - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

  const cm2::TransitionW w = cm2::build_W(m);
  Eigen::VectorXd p_x0(2);
  p_x0 << 0.0, 1.0;
  const double s2 = std::sin(0.3) * std::sin(0.3);
  const double expect = 0.7 + 0.3 * s2;  // stay weight plus swapped-in excitation
  CHECK(cm2::hmm_forward(w, p_x0, {1}).prob == doctest::Approx(expect).epsilon(1e-12));
  CHECK(cm2::hmm_forward(w, p_x0, {0}).prob == doctest::Approx(1 - expect).epsilon(1e-12));

  // Quantum side agrees step for step.
  const cm2::Collider c(m);
  const CMatrix joint = c.joint_collide(m.rho_x0.matrix);
  CHECK(c.weight_from_joint(joint, 1) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("uninformative readout makes every record equally likely") {
  cm2::CM2Model m = cm2::single_qubit_model(0.3, 0.3);
  const double s = 1.0 / std::sqrt(2.0);
  m.measurement.operators = {CMatrix::Identity(2, 2) * s, CMatrix::Identity(2, 2) * s};
  m.measurement.labels = {"a", "b"};
  const cm2::TransitionW w = cm2::build_W(m);
  Eigen::VectorXd p_x0(2);
  p_x0 << 0.5, 0.5;
  CHECK(cm2::hmm_forward(w, p_x0, {0, 1, 1, 0}).prob ==
        doctest::Approx(1.0 / 16.0).epsilon(1e-12));
  CHECK(cm2::hmm_forward(w, p_x0, {1, 1, 1, 1}).prob ==
        doctest::Approx(1.0 / 16.0).epsilon(1e-12));
}

TEST_CASE("quantum branches and the classical chain agree record by record") {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const cm2::CM2Model m = cm2test::random_incoherent_model(seed);
    const int steps = 4;
    const std::vector<cm2::BranchEnsemble> ens = cm2::enumerate_exact(m, steps, 1e-300);
    const cm2::TransitionW w = cm2::build_W(m);
    const Eigen::VectorXd p_x0 = m.rho_x0.matrix.diagonal().real();

    double total_q = 0.0;
    for (const cm2::Branch& b : ens.back().branches) {
      const cm2::HmmResult h = cm2::hmm_forward(w, p_x0, b.outcomes);
      CHECK(std::abs(b.prob - h.prob) < 1e-12);
      total_q += b.prob;
      if (h.prob > 1e-9) {
        const Eigen::VectorXd post = h.joint / h.prob;
        const Eigen::VectorXd diag_q = b.state.diagonal().real();
        CHECK((post - diag_q).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(cm2::max_abs(b.state - b.state.diagonal().asDiagonal().toDenseMatrix()) <
              1e-10);
      }
    }
    CHECK(total_q == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("classical sampling is seeded and unbiased") {
  cm2::CM2Model m = cm2::single_qubit_model(0.3, 0.3);
  CMatrix excited = CMatrix::Zero(2, 2);
  excited(1, 1) = 1.0;
  m.rho_x0 = cm2::DensityMatrix::checked(excited);
  const cm2::TransitionW w = cm2::build_W(m);
  Eigen::VectorXd p_x0(2);
  p_x0 << 0.0, 1.0;

  const cm2::ClassicalTrajectory a = cm2::classical_sample(w, p_x0, 20, 4242);
  const cm2::ClassicalTrajectory b = cm2::classical_sample(w, p_x0, 20, 4242);
  CHECK(a.outcomes == b.outcomes);
  CHECK(a.states == b.states);
  CHECK(a.states.size() == 21);
  CHECK(a.outcomes.size() == 20);

  std::size_t clicks = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const cm2::ClassicalTrajectory t =
        cm2::classical_sample(w, p_x0, 1, cm2::derive_seed(777, i));
    if (t.outcomes[0] == 1) ++clicks;
  }
  const double freq = static_cast<double>(clicks) / static_cast<double>(n);
  const double expect = 0.7 + 0.3 * std::sin(0.3) * std::sin(0.3);
  CHECK(std::abs(freq - expect) < 0.005);
}
