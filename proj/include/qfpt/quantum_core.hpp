#pragma once

// Dense complex linear algebra for small Hilbert spaces (dim <= 64).
//
// Qubit convention used throughout the library: |0> is the ground state and
// |1> the excited state, with sigma_z |0> = -|0> and sigma_z |1> = +|1>.
// In the computational basis sigma_z = diag(+1, -1), so basis index 0 holds
// the excited state and index 1 the ground state. Multi-qubit states are
// ordered with site 0 as the leftmost tensor factor.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qfpt/config.hpp"
#include "qfpt/error.hpp"

namespace qfpt {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

inline double max_abs(const ComplexMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_finite(const ComplexMatrix& a) {
  return a.allFinite();
}

inline bool is_hermitian(const ComplexMatrix& a, double tol = kTol.hermitian) {
  return a.rows() == a.cols() && max_abs(a - a.adjoint()) <= tol;
}

inline void require_square(const ComplexMatrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DomainError(std::string(what) + ": matrix must be square and non-empty, got " +
                      std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError(std::string(what) + ": dimension mismatch " + std::to_string(a.rows()) +
                      " vs " + std::to_string(b.rows()));
  }
}

/// Normalized pure state. Construction rescales to unit norm.
class StateVector {
 public:
  explicit StateVector(ComplexVector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() == 0 || static_cast<std::size_t>(amps_.size()) > kTol.max_dim) {
      throw DomainError("StateVector: dimension must be in [1, " +
                        std::to_string(kTol.max_dim) + "]");
    }
    if (!amps_.allFinite()) throw DomainError("StateVector: non-finite amplitude");
    const double norm = amps_.norm();
    if (norm == 0.0) throw DomainError("StateVector: zero vector cannot be normalized");
    amps_ /= norm;
  }

  static StateVector basis(std::size_t dim, std::size_t index) {
    if (index >= dim) throw DomainError("StateVector::basis: index out of range");
    ComplexVector v = ComplexVector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(index)) = 1.0;
    return StateVector(std::move(v));
  }

  const ComplexVector& amplitudes() const { return amps_; }
  std::size_t dim() const { return static_cast<std::size_t>(amps_.size()); }

  ComplexMatrix outer() const { return amps_ * amps_.adjoint(); }

 private:
  ComplexVector amps_;
};

/// Validated density operator: Hermitian, unit trace, positive semidefinite
/// (all within the tolerances in kTol).
class DensityOperator {
 public:
  explicit DensityOperator(ComplexMatrix m) : m_(std::move(m)) {
    require_square(m_, "DensityOperator");
    if (static_cast<std::size_t>(m_.rows()) > kTol.max_dim) {
      throw DomainError("DensityOperator: dimension exceeds " + std::to_string(kTol.max_dim));
    }
    if (!is_finite(m_)) throw DomainError("DensityOperator: non-finite entry");
    const double herm_dev = max_abs(m_ - m_.adjoint());
    if (herm_dev > kTol.hermitian) {
      throw DomainError("DensityOperator: not Hermitian (deviation " + std::to_string(herm_dev) +
                        ")");
    }
    const Complex tr = m_.trace();
    if (std::abs(tr - 1.0) > kTol.trace) {
      throw DomainError("DensityOperator: trace " + std::to_string(tr.real()) + " != 1");
    }
    const ComplexMatrix h = 0.5 * (m_ + m_.adjoint());
    const double min_eig = Eigen::SelfAdjointEigenSolver<ComplexMatrix>(h, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -kTol.psd) {
      throw DomainError("DensityOperator: negative eigenvalue " + std::to_string(min_eig));
    }
  }

  static DensityOperator pure(const StateVector& psi) { return DensityOperator(psi.outer()); }

  static DensityOperator maximally_mixed(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return DensityOperator(ComplexMatrix::Identity(d, d) / static_cast<double>(dim));
  }

  const ComplexMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

 private:
  ComplexMatrix m_;
};

/// Kronecker product a (x) b. Entry (i*db + k, j*db + l) = a(i,j) * b(k,l).
inline ComplexMatrix tensor(const ComplexMatrix& a, const ComplexMatrix& b,
                            std::size_t max_dim = kTol.max_dim) {
  require_square(a, "tensor");
  require_square(b, "tensor");
  const auto da = a.rows();
  const auto db = b.rows();
  if (static_cast<std::size_t>(da) * static_cast<std::size_t>(db) > max_dim) {
    throw DomainError("tensor: product dimension " + std::to_string(da * db) +
                      " exceeds maximum " + std::to_string(max_dim));
  }
  ComplexMatrix out(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i) {
    for (Eigen::Index j = 0; j < da; ++j) {
      out.block(i * db, j * db, db, db) = a(i, j) * b;
    }
  }
  return out;
}

/// Left fold: ((f0 (x) f1) (x) f2) ...
inline ComplexMatrix tensor_all(std::span<const ComplexMatrix> factors,
                                std::size_t max_dim = kTol.max_dim) {
  if (factors.empty()) throw DomainError("tensor_all: no factors");
  ComplexMatrix out = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) out = tensor(out, factors[i], max_dim);
  return out;
}

/// I (x) ... (x) op (x) ... (x) I with op at position `site`.
inline ComplexMatrix site_operator(const ComplexMatrix& op, std::size_t site, std::size_t n_sites) {
  require_square(op, "site_operator");
  if (site >= n_sites) {
    throw DomainError("site_operator: site " + std::to_string(site) + " out of range for " +
                      std::to_string(n_sites) + " sites");
  }
  const auto d = op.rows();
  std::vector<ComplexMatrix> factors(n_sites, ComplexMatrix::Identity(d, d));
  factors[site] = op;
  return tensor_all(factors);
}

/// tr(a rho).
inline Complex expectation(const DensityOperator& rho, const ComplexMatrix& a) {
  require_same_dim(rho.matrix(), a, "expectation");
  // tr(a rho) = sum_ij a_ij rho_ji
  return (a.array() * rho.matrix().transpose().array()).sum();
}

inline ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_dim(a, b, "commutator");
  return a * b - b * a;
}

inline ComplexMatrix dagger(const ComplexMatrix& a) { return a.adjoint(); }

/// (A + A^dagger) / 2
inline ComplexMatrix hermitize(const ComplexMatrix& a) {
  require_square(a, "hermitize");
  return 0.5 * (a + a.adjoint());
}

/// Columns of the returned matrix are the basis vectors.
inline ComplexMatrix basis_matrix(std::span<const StateVector> basis) {
  if (basis.empty()) throw DomainError("basis_matrix: empty basis");
  const auto d = static_cast<Eigen::Index>(basis.front().dim());
  ComplexMatrix b(d, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (static_cast<Eigen::Index>(basis[i].dim()) != d) {
      throw DomainError("basis_matrix: basis vectors have different dimensions");
    }
    b.col(static_cast<Eigen::Index>(i)) = basis[i].amplitudes();
  }
  return b;
}

/// Worst |G - I| over the Gram matrix of the basis.
inline double gram_deviation(std::span<const StateVector> basis) {
  const ComplexMatrix b = basis_matrix(basis);
  const ComplexMatrix g = b.adjoint() * b;
  return max_abs(g - ComplexMatrix::Identity(g.rows(), g.cols()));
}

/// P = sum_q |q><q| over an orthonormal basis.
inline ComplexMatrix projector(std::span<const StateVector> basis) {
  const ComplexMatrix b = basis_matrix(basis);
  const ComplexMatrix g = b.adjoint() * b;
  const double dev = max_abs(g - ComplexMatrix::Identity(g.rows(), g.cols()));
  if (dev > kTol.gram) {
    throw DomainError("projector: basis is not orthonormal (worst Gram deviation " +
                      std::to_string(dev) + ")");
  }
  return b * b.adjoint();
}

namespace pauli {

inline ComplexMatrix identity() { return ComplexMatrix::Identity(2, 2); }

inline ComplexMatrix sigma_z() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

inline ComplexMatrix sigma_x() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  return m;
}

/// |1><0|: raises ground to excited.
inline ComplexMatrix sigma_plus() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

inline ComplexMatrix sigma_minus() { return sigma_plus().adjoint(); }

inline constexpr Eigen::Index kExcitedIndex = 0;
inline constexpr Eigen::Index kGroundIndex = 1;

}  // namespace pauli

/// Product state over n qubits; `excited[i]` selects |1> on site i.
inline StateVector product_state(const std::vector<bool>& excited) {
  std::size_t index = 0;
  for (bool e : excited) {
    index = 2 * index + static_cast<std::size_t>(e ? pauli::kExcitedIndex : pauli::kGroundIndex);
  }
  return StateVector::basis(std::size_t{1} << excited.size(), index);
}

// Serialization: nested arrays of [re, im] pairs, row-major.

inline nlohmann::json matrix_to_json(const ComplexMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Complex complex_from_json(const nlohmann::json& e) {
  if (e.is_number()) return {e.get<double>(), 0.0};
  if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
    throw ModelError("matrix entry must be [re, im], got " + e.dump());
  }
  return {e[0].get<double>(), e[1].get<double>()};
}

inline ComplexMatrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ModelError("matrix must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  if (static_cast<std::size_t>(n) > kTol.max_dim) {
    throw ModelError("matrix dimension " + std::to_string(n) + " exceeds maximum " +
                     std::to_string(kTol.max_dim));
  }
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw ModelError("matrix must be square: row " + std::to_string(i) + " has wrong length");
    }
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = complex_from_json(row[static_cast<std::size_t>(k)]);
  }
  if (!m.allFinite()) throw ModelError("matrix has non-finite entries");
  return m;
}

inline nlohmann::json vector_to_json(const ComplexVector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back({v(i).real(), v(i).imag()});
  return out;
}

inline ComplexVector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ModelError("vector must be a non-empty array");
  ComplexVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_from_json(j[i]);
  return v;
}

}  // namespace qfpt
