#pragma once

// Decoherence-free subspace (DFS) detection and Q1/Q2/P bipartitions.
//
// A DFS block is a maximal subspace on which every measurement operator L_k
// acts as a scalar c_k and which is invariant under H. Detection intersects
// the eigenspaces of all L_k (grouped by joint eigenvalue tuple) and shrinks
// each joint eigenspace E to its largest H-invariant subspace with
//   S_0 = E,  S_{m+1} = S_m  intersected with  {v : H v in S_m}.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qfpt/quantum_core.hpp"

namespace qfpt {

/// Hamiltonian, measurement operators and per-channel detector efficiencies.
struct QuantumModel {
  ComplexMatrix H;
  std::vector<ComplexMatrix> Ls;
  std::vector<double> zetas;

  std::size_t dim() const { return static_cast<std::size_t>(H.rows()); }

  void validate() const {
    if (H.rows() == 0 || H.rows() != H.cols()) throw ModelError("model: H must be square");
    if (dim() > kTol.max_dim) {
      throw ModelError("model: dimension " + std::to_string(dim()) + " exceeds maximum " +
                       std::to_string(kTol.max_dim));
    }
    if (!H.allFinite()) throw ModelError("model: H has non-finite entries");
    const double herm = max_abs(H - H.adjoint());
    if (herm > kTol.hermitian) {
      throw ModelError("model: H is not Hermitian (deviation " + std::to_string(herm) + ")");
    }
    if (Ls.size() != zetas.size()) {
      throw ModelError("model: " + std::to_string(Ls.size()) + " measurement operators but " +
                       std::to_string(zetas.size()) + " efficiencies");
    }
    for (std::size_t k = 0; k < Ls.size(); ++k) {
      if (Ls[k].rows() != H.rows() || Ls[k].cols() != H.cols()) {
        throw ModelError("model: L_" + std::to_string(k) + " has inconsistent dimension");
      }
      if (!Ls[k].allFinite()) throw ModelError("model: L_" + std::to_string(k) + " non-finite");
      if (!(zetas[k] >= 0.0 && zetas[k] <= 1.0)) {
        throw ModelError("model: efficiency zeta_" + std::to_string(k) + " outside [0,1]");
      }
    }
  }
};

struct DfsBlock {
  ComplexMatrix basis;     // orthonormal columns spanning the block
  std::vector<Complex> c;  // eigenvalue of each L_k on the block

  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
  ComplexMatrix projector() const { return basis * basis.adjoint(); }

  std::vector<StateVector> states() const {
    std::vector<StateVector> out;
    out.reserve(dim());
    for (Eigen::Index i = 0; i < basis.cols(); ++i) out.emplace_back(basis.col(i));
    return out;
  }
};

/// An empty block list is a valid outcome (no DFS), distinct from an error.
struct DfsSearchResult {
  std::vector<DfsBlock> blocks;
  bool found() const { return !blocks.empty(); }
};

namespace detail {

/// Orthonormal basis of the right null space of m, singular values <= threshold.
inline ComplexMatrix null_space(const ComplexMatrix& m, double threshold) {
  if (m.cols() == 0) return ComplexMatrix(m.rows(), 0);
  Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > threshold) ++rank;
  }
  return svd.matrixV().rightCols(m.cols() - rank);
}

inline double operator_scale(const ComplexMatrix& a) {
  return std::max(1.0, a.cwiseAbs().rowwise().sum().maxCoeff());
}

/// Distinct eigenvalues of a normal matrix, clustered within `tol`; each
/// cluster is represented by its mean.
inline std::vector<Complex> eigenvalue_clusters(const ComplexMatrix& l, double tol) {
  std::vector<Complex> ev;
  if (is_hermitian(l)) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(l, Eigen::EigenvaluesOnly);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.emplace_back(es.eigenvalues()(i), 0.0);
  } else {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(l, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()(i));
  }
  std::sort(ev.begin(), ev.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  std::vector<Complex> reps;
  std::vector<std::size_t> counts;
  Complex anchor{};
  for (Complex v : ev) {
    if (!reps.empty() && std::abs(v - anchor) <= tol) {
      reps.back() += v;
      ++counts.back();
    } else {
      anchor = v;
      reps.push_back(v);
      counts.push_back(1);
    }
  }
  for (std::size_t i = 0; i < reps.size(); ++i) reps[i] /= static_cast<double>(counts[i]);
  return reps;
}

/// Largest subspace of span(b) that H maps into itself.
inline ComplexMatrix largest_invariant_subspace(const ComplexMatrix& h, ComplexMatrix b,
                                                double threshold) {
  const auto d = h.rows();
  for (Eigen::Index iter = 0; iter <= d && b.cols() > 0; ++iter) {
    const ComplexMatrix leak = (ComplexMatrix::Identity(d, d) - b * b.adjoint()) * h * b;
    const ComplexMatrix coeffs = null_space(leak, threshold);
    if (coeffs.cols() == b.cols()) return b;
    b = b * coeffs;
  }
  return b;
}

}  // namespace detail

inline double normality_defect(const ComplexMatrix& l) {
  return max_abs(l * l.adjoint() - l.adjoint() * l);
}

/// Maximal decoherence-free subspaces of `model`, ordered lexicographically by
/// their eigenvalue tuples (real part first).
inline DfsSearchResult find_dfs(const QuantumModel& model) {
  model.validate();
  const auto d = static_cast<Eigen::Index>(model.dim());
  for (std::size_t k = 0; k < model.Ls.size(); ++k) {
    const double defect = normality_defect(model.Ls[k]);
    if (defect > kTol.normality) {
      throw ModelError("find_dfs: measurement operator L_" + std::to_string(k) +
                       " is not normal (max |[L, L^dagger]| = " + std::to_string(defect) +
                       "); only normal operators are supported");
    }
  }

  struct Joint {
    std::vector<Complex> c;
    ComplexMatrix basis;
  };
  std::vector<Joint> spaces{{{}, ComplexMatrix::Identity(d, d)}};
  for (const auto& l : model.Ls) {
    const double thr = kTol.dfs_residual * detail::operator_scale(l);
    const auto clusters = detail::eigenvalue_clusters(l, kTol.degeneracy);
    std::vector<Joint> next;
    for (const auto& js : spaces) {
      for (Complex c : clusters) {
        const ComplexMatrix shifted = (l - c * ComplexMatrix::Identity(d, d)) * js.basis;
        const ComplexMatrix coeffs = detail::null_space(shifted, thr);
        if (coeffs.cols() == 0) continue;
        Joint j{js.c, js.basis * coeffs};
        j.c.push_back(c);
        next.push_back(std::move(j));
      }
    }
    spaces = std::move(next);
  }

  DfsSearchResult result;
  const double h_thr = kTol.dfs_residual * detail::operator_scale(model.H);
  for (auto& js : spaces) {
    ComplexMatrix b = detail::largest_invariant_subspace(model.H, js.basis, h_thr);
    if (b.cols() == 0) continue;
    result.blocks.push_back(DfsBlock{std::move(b), std::move(js.c)});
  }
  return result;
}

/// Wraps an explicit basis as a DFS block after checking that every L_k acts
/// as a scalar on it and that H leaves it invariant.
inline DfsBlock make_dfs_block(const QuantumModel& model, std::span<const StateVector> basis) {
  model.validate();
  const double dev = gram_deviation(basis);
  if (dev > kTol.gram) {
    throw ModelError("make_dfs_block: basis not orthonormal (worst Gram deviation " +
                     std::to_string(dev) + ")");
  }
  DfsBlock block{basis_matrix(basis), {}};
  if (static_cast<std::size_t>(block.basis.rows()) != model.dim()) {
    throw ModelError("make_dfs_block: basis dimension does not match model");
  }
  const auto d = block.basis.rows();
  const ComplexMatrix off = ComplexMatrix::Identity(d, d) - block.projector();
  for (const auto& l : model.Ls) {
    const ComplexMatrix lb = l * block.basis;
    const Complex c = (block.basis.adjoint() * lb).trace() / static_cast<double>(block.dim());
    const double resid = (lb - c * block.basis).colwise().norm().maxCoeff();
    if (resid > kTol.dfs_residual) {
      throw ModelError("make_dfs_block: measurement operator is not scalar on the block (residual " +
                       std::to_string(resid) + ")");
    }
    block.c.push_back(c);
  }
  const double leak = (off * model.H * block.basis).colwise().norm().maxCoeff();
  if (leak > kTol.dfs_residual) {
    throw ModelError("make_dfs_block: block is not H-invariant (leak " + std::to_string(leak) + ")");
  }
  return block;
}

/// Q1 / Q2 / P bipartition of a DFS collection. When a side aggregates
/// sub-blocks with different eigenvalues the overlap SDE is not closed;
/// such partitions keep `closed == false` and `gamma` is NaN.
struct SubspacePartition {
  ComplexMatrix q1_basis, q2_basis;
  ComplexMatrix P_Q1, P_Q2, P_P;
  std::vector<std::array<Complex, 2>> c;  // c[k][0] on Q1, c[k][1] on Q2
  std::vector<double> zetas;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  bool closed = false;

  std::size_t dim() const { return static_cast<std::size_t>(P_Q1.rows()); }

  void require_closed() const {
    if (!closed) {
      throw ClosureViolated(
          "closure violated: a side of the bipartition aggregates DFS blocks with different "
          "measurement eigenvalues, so the overlap does not follow a closed SDE");
    }
  }
};

/// gamma = sqrt(sum_k zeta_k Re(c_k1 - c_k2)^2)
inline double effective_gamma(std::span<const std::array<Complex, 2>> c, std::span<const double> zetas) {
  double sum = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double delta = (c[k][0] - c[k][1]).real();
    sum += zetas[k] * delta * delta;
  }
  return std::sqrt(sum);
}

inline SubspacePartition build_partition(const QuantumModel& model, std::span<const DfsBlock> blocks,
                                         std::span<const std::size_t> group1,
                                         std::span<const std::size_t> group2) {
  model.validate();
  if (group1.empty() || group2.empty()) throw DomainError("build_partition: empty index set");
  for (std::size_t i : group1) {
    if (std::find(group2.begin(), group2.end(), i) != group2.end()) {
      throw DomainError("build_partition: block " + std::to_string(i) + " selected on both sides");
    }
  }
  auto gather = [&](std::span<const std::size_t> group) {
    std::vector<const DfsBlock*> out;
    for (std::size_t i : group) {
      if (i >= blocks.size()) throw DomainError("build_partition: block index out of range");
      if (std::find(out.begin(), out.end(), &blocks[i]) != out.end()) {
        throw DomainError("build_partition: duplicate block index");
      }
      out.push_back(&blocks[i]);
    }
    return out;
  };
  const auto side1 = gather(group1);
  const auto side2 = gather(group2);

  auto stack = [&](const std::vector<const DfsBlock*>& side) {
    Eigen::Index cols = 0;
    for (const auto* b : side) cols += b->basis.cols();
    ComplexMatrix out(static_cast<Eigen::Index>(model.dim()), cols);
    Eigen::Index at = 0;
    for (const auto* b : side) {
      out.middleCols(at, b->basis.cols()) = b->basis;
      at += b->basis.cols();
    }
    return out;
  };

  SubspacePartition p;
  p.q1_basis = stack(side1);
  p.q2_basis = stack(side2);
  p.P_Q1 = p.q1_basis * p.q1_basis.adjoint();
  p.P_Q2 = p.q2_basis * p.q2_basis.adjoint();
  const auto d = static_cast<Eigen::Index>(model.dim());
  p.P_P = ComplexMatrix::Identity(d, d) - p.P_Q1 - p.P_Q2;
  p.zetas = model.zetas;

  bool closed = true;
  auto uniform = [&](const std::vector<const DfsBlock*>& side, std::size_t k) {
    const Complex c0 = side.front()->c.at(k);
    for (const auto* b : side) {
      if (std::abs(b->c.at(k) - c0) > kTol.degeneracy) closed = false;
    }
    return c0;
  };
  for (std::size_t k = 0; k < model.Ls.size(); ++k) {
    p.c.push_back({uniform(side1, k), uniform(side2, k)});
  }
  p.closed = closed;
  if (closed) p.gamma = effective_gamma(p.c, p.zetas);
  return p;
}

struct Overlap {
  double x = 0.0;             // tr(rho P_Q1), clamped to [0,1]
  double p_complement = 0.0;  // tr(rho P_P)
};

inline double trace_product(const ComplexMatrix& rho, const ComplexMatrix& p) {
  return (p.array() * rho.transpose().array()).sum().real();
}

inline Overlap overlap(const ComplexMatrix& rho, const SubspacePartition& partition) {
  require_same_dim(rho, partition.P_Q1, "overlap");
  const double x = trace_product(rho, partition.P_Q1);
  if (!(x >= -kTol.overlap_slack && x <= 1.0 + kTol.overlap_slack)) {
    throw NumericalError("overlap: tr(rho P_Q1) = " + std::to_string(x) +
                         " outside [0,1]; the integrator diverged (reduce dt)");
  }
  return {std::clamp(x, 0.0, 1.0), trace_product(rho, partition.P_P)};
}

inline Overlap overlap(const DensityOperator& rho, const SubspacePartition& partition) {
  return overlap(rho.matrix(), partition);
}

/// Combined Wiener increment driving the overlap:
///   dW = sum_k sqrt(zeta_k) Re(c_k1 - c_k2) dW_k / gamma
inline double reduced_increment(const SubspacePartition& partition, std::span<const double> dws) {
  partition.require_closed();
  if (dws.size() != partition.c.size()) throw DomainError("reduced_increment: channel count mismatch");
  if (partition.gamma == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < dws.size(); ++k) {
    sum += std::sqrt(partition.zetas[k]) * (partition.c[k][0] - partition.c[k][1]).real() * dws[k];
  }
  return sum / partition.gamma;
}

}  // namespace qfpt
