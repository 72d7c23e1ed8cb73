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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

// Dense complex linear algebra for finite-dimensional composite quantum
// systems. Convention used throughout: in any tensor product the LEFTMOST
// factor carries the most significant (slowest-varying) index, so for
// A (x) B the composite index is i = a * dim(B) + b.

namespace cm2 {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;

/// Numerical floor below which an eigenvalue is treated as zero (outside the
/// support of a state).
inline constexpr double kEigenvalueFloor = 1e-12;

/// Most negative eigenvalue a positive-semidefinite operator may show before
/// it is rejected as an invalid state rather than clamped as roundoff.
inline constexpr double kNegativeEigTol = 1e-9;

/// Default tolerance for Hermiticity checks.
inline constexpr double kHermTol = 1e-10;

/// Default tolerance for unitarity checks.
inline constexpr double kUnitaryTol = 1e-12;

/// Thrown when a matrix that must represent a physical state fails
/// positivity, Hermiticity, or normalization beyond roundoff tolerances.
class InvalidStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline CMatrix identity(Eigen::Index d) { return CMatrix::Identity(d, d); }

inline CMatrix dagger(const CMatrix& m) { return m.adjoint(); }

/// Largest entry magnitude; 0 for an empty matrix.
inline double max_abs(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const CMatrix& m, double tol = kHermTol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

inline bool is_unitary(const CMatrix& m, double tol = kUnitaryTol) {
  if (m.rows() != m.cols()) return false;
  return max_abs(m * m.adjoint() - identity(m.rows())) <= tol;
}

/// Column vector |i> in dimension d.
inline CMatrix ket(Eigen::Index d, Eigen::Index i) {
  CMatrix v = CMatrix::Zero(d, 1);
  v(i, 0) = 1.0;
  return v;
}

/// Rank-one projector |i><i| in dimension d.
inline CMatrix basis_projector(Eigen::Index d, Eigen::Index i) {
  CMatrix p = CMatrix::Zero(d, d);
  p(i, i) = 1.0;
  return p;
}

inline CMatrix pauli_x() {
  CMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline CMatrix pauli_y() {
  CMatrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

inline CMatrix pauli_z() {
  CMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

/// Kronecker product with the left operand on the slow index.
inline CMatrix tensor(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

/// Left-to-right Kronecker product of a factor list; the first factor is the
/// most significant index.
inline CMatrix tensor_all(const std::vector<CMatrix>& factors) {
  if (factors.empty()) throw std::invalid_argument("tensor_all: empty factor list");
  CMatrix out = factors.front();
  for (std::size_t k = 1; k < factors.size(); ++k) out = tensor(out, factors[k]);
  return out;
}

namespace detail {

// Mixed-radix offsets for the listed subsystems: offsets[i] is the global
// row/column offset contributed by the i-th joint configuration of exactly
// those subsystems (all other digits zero).
inline std::vector<Eigen::Index> subsystem_offsets(const std::vector<Eigen::Index>& dims,
                                                   const std::vector<std::size_t>& subs) {
  std::vector<Eigen::Index> stride(dims.size(), 1);
  for (std::size_t k = dims.size(); k-- > 1;) stride[k - 1] = stride[k] * dims[k];
  Eigen::Index count = 1;
  for (std::size_t s : subs) count *= dims[s];
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(count), 0);
  Eigen::Index repeat = count;
  for (std::size_t s : subs) {
    repeat /= dims[s];
    Eigen::Index period = repeat * dims[s];
    for (Eigen::Index i = 0; i < count; ++i)
      offsets[static_cast<std::size_t>(i)] += ((i % period) / repeat) * stride[s];
  }
  return offsets;
}

}  // namespace detail

/// Partial trace over the complement of `keep`. `dims` lists subsystem
/// dimensions from most to least significant; kept subsystems preserve their
/// relative order. The result trace equals the input trace exactly.
inline CMatrix partial_trace(const CMatrix& m, const std::vector<Eigen::Index>& dims,
                             std::vector<std::size_t> keep) {
  if (m.rows() != m.cols()) throw std::invalid_argument("partial_trace: matrix not square");
  Eigen::Index total = 1;
  for (Eigen::Index d : dims) {
    if (d <= 0) throw std::invalid_argument("partial_trace: nonpositive subsystem dimension");
    total *= d;
  }
  if (total != m.rows())
    throw std::invalid_argument("partial_trace: dims product " + std::to_string(total) +
                                " != matrix dimension " + std::to_string(m.rows()));
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  if (keep.empty()) throw std::invalid_argument("partial_trace: keep set empty");
  if (keep.back() >= dims.size())
    throw std::invalid_argument("partial_trace: keep index out of range");

  std::vector<std::size_t> traced;
  for (std::size_t s = 0; s < dims.size(); ++s)
    if (!std::binary_search(keep.begin(), keep.end(), s)) traced.push_back(s);

  const auto kept_off = detail::subsystem_offsets(dims, keep);
  const auto traced_off = detail::subsystem_offsets(dims, traced);
  const auto dk = static_cast<Eigen::Index>(kept_off.size());

  CMatrix out = CMatrix::Zero(dk, dk);
  for (Eigen::Index a = 0; a < dk; ++a)
    for (Eigen::Index b = 0; b < dk; ++b) {
      Complex acc(0, 0);
      for (Eigen::Index t : traced_off)
        acc += m(kept_off[static_cast<std::size_t>(a)] + t,
                 kept_off[static_cast<std::size_t>(b)] + t);
      out(a, b) = acc;
    }
  return out;
}

/// Trace out the second factor of a bipartite operator on d_a * d_b.
inline CMatrix trace_out_second(const CMatrix& m, Eigen::Index da, Eigen::Index db) {
  return partial_trace(m, {da, db}, {0});
}

/// Trace out the first factor of a bipartite operator on d_a * d_b.
inline CMatrix trace_out_first(const CMatrix& m, Eigen::Index da, Eigen::Index db) {
  return partial_trace(m, {da, db}, {1});
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the matching orthonormal column eigenvectors.
struct HermitianSpectrum {
  Eigen::VectorXd eigenvalues;
  CMatrix eigenvectors;
};

inline HermitianSpectrum eig_hermitian(const CMatrix& h, double herm_tol = kHermTol) {
  if (h.rows() != h.cols()) throw std::invalid_argument("eig_hermitian: matrix not square");
  const double dev = max_abs(h - h.adjoint());
  if (dev > herm_tol)
    throw InvalidStateError("eig_hermitian: Hermiticity deviation " + std::to_string(dev) +
                            " exceeds tolerance");
  // Symmetrize before solving so roundoff asymmetry cannot leak into results.
  CMatrix hs = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(hs);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eig_hermitian: eigensolver failed to converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Matrix logarithm restricted to the support: eigenvalues at or below
/// `floor` contribute nothing. Eigenvalues below -kNegativeEigTol are
/// rejected as an invalid state.
inline CMatrix log_on_support(const CMatrix& rho, double floor = kEigenvalueFloor) {
  const HermitianSpectrum s = eig_hermitian(rho);
  const Eigen::Index d = rho.rows();
  CMatrix out = CMatrix::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lam = s.eigenvalues(k);
    if (lam < -kNegativeEigTol)
      throw InvalidStateError("log_on_support: eigenvalue " + std::to_string(lam) +
                              " below negativity tolerance");
    if (lam <= floor) continue;
    out += std::log(lam) * (s.eigenvectors.col(k) * s.eigenvectors.col(k).adjoint());
  }
  return out;
}

/// Sum of absolute eigenvalues of a Hermitian matrix (its trace norm).
inline double trace_norm_hermitian(const CMatrix& h) {
  const HermitianSpectrum s = eig_hermitian(h);
  return s.eigenvalues.cwiseAbs().sum();
}

}  // namespace cm2
