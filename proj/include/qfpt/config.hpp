#pragma once

#include <cstddef>

namespace qfpt {

/// Numerical tolerances shared by all modules. One record so that every
/// threshold that decides validity lives in a single place.
struct Tolerances {
  std::size_t max_dim = 64;

  double hermitian = 1e-10;   // max |A - A^dagger| elementwise
  double trace = 1e-10;       // |tr rho - 1| for DensityOperator
  double psd = 1e-8;          // smallest admissible eigenvalue is -psd
  double unit_norm = 1e-12;   // StateVector norm after construction
  double gram = 1e-10;        // orthonormality of projector bases

  double degeneracy = 1e-8;   // eigenvalues closer than this are one cluster
  double normality = 1e-8;    // max |[L, L^dagger]| for the DFS detector
  double dfs_residual = 1e-8; // null-space threshold in DFS detection

  double overlap_slack = 1e-9;       // allowed excursion of tr(rho P) outside [0,1]
  double divergence = 1e-3;          // |tr rho - 1| before renormalization
  double initial_support = 1e-9;     // max tr(rho_0 P_P)
  double threshold_slack = 1e-12;    // exit thresholds compare against eps -/+ slack
};

inline constexpr Tolerances kTol{};

}  // namespace qfpt
