#pragma once

// Independent reference implementations used as test oracles.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "qfpt/subspace.hpp"

namespace qfpt::test {

/// Euler-Maruyama step of the SME written term by term from the textbook
/// form, with dense products only:
///   d rho = -i[H, rho] dt + sum_k (L rho L^+ - {L^+ L, rho}/2) dt
///           + sum_k sqrt(zeta_k) (L rho + rho L^+ - tr(L rho + rho L^+) rho) dW_k
inline ComplexMatrix reference_step(const QuantumModel& m, const ComplexMatrix& rho, double dt,
                                    std::span<const double> dws) {
  const Complex i{0.0, 1.0};
  ComplexMatrix d = -i * (m.H * rho - rho * m.H) * dt;
  for (std::size_t k = 0; k < m.Ls.size(); ++k) {
    const ComplexMatrix& l = m.Ls[k];
    const ComplexMatrix ld = l.adjoint();
    d += (l * rho * ld - 0.5 * (ld * l * rho + rho * ld * l)) * dt;
    const ComplexMatrix h = l * rho + rho * ld;
    d += std::sqrt(m.zetas[k]) * (h - h.trace() * rho) * dws[k];
  }
  ComplexMatrix next = rho + d;
  next = 0.5 * (next + next.adjoint()).eval();
  return next / next.trace().real();
}

/// Random Hermitian matrix with entries of order `scale`.
inline ComplexMatrix random_hermitian(std::mt19937_64& g, Eigen::Index d, double scale = 1.0) {
  std::normal_distribution<double> n;
  ComplexMatrix a(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = Complex(n(g), n(g));
  return scale * 0.5 * (a + a.adjoint());
}

/// Random density matrix (Wishart-type, full rank).
inline ComplexMatrix random_density(std::mt19937_64& g, Eigen::Index d) {
  std::normal_distribution<double> n;
  ComplexMatrix a(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = Complex(n(g), n(g));
  ComplexMatrix rho = a * a.adjoint();
  return rho / rho.trace().real();
}

/// Exit density of the overlap through 1 - eps (upper) or eps (lower) from the
/// method of images. In logit coordinates y = ln(x / (1 - x)) the overlap is a
/// Doob transform of Brownian motion with variance 4 gamma^2 per unit time by
/// h(y, t) = cosh(y / 2) exp(-gamma^2 t / 2); the Brownian exit density on
/// [-l, l] is an image sum. Shares no code with the eigenfunction series.
inline double image_exit_density(double tau, bool upper, double gamma, double eps, double x0, int images = 60) {
  const double l = std::log((1.0 - eps) / eps);
  const double y0 = std::log(x0 / (1.0 - x0));
  const double a = 2.0 * l;                   // interval length
  const double z = upper ? y0 + l : l - y0;   // distance from the far end
  const double s = 4.0 * gamma * gamma * tau; // Brownian clock
  double sum = 0.0;
  for (int k = -images; k <= images; ++k) {
    const double r = a - z + 2.0 * k * a;
    sum += r / std::sqrt(2.0 * M_PI * s * s * s) * std::exp(-r * r / (2.0 * s));
  }
  const double bm = 4.0 * gamma * gamma * sum;
  const double h_ratio = std::cosh(0.5 * (upper ? l : -l)) / std::cosh(0.5 * y0);
  return bm * h_ratio * std::exp(-0.5 * gamma * gamma * tau);
}

}  // namespace qfpt::test
