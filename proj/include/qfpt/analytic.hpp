#pragma once

// Spectral solution of the first-passage problem for the degenerate diffusion
//
//   dx = 2 gamma x (1 - x) dW,   D(x) = 2 gamma^2 x^2 (1 - x)^2,   d_t p = d_x^2 (D p)
//
// on [eps, 1 - eps] with absorbing ends. With L = ln((1 - eps) / eps),
// w = x - x^2 and u = ln((1 - x) / x):
//
//   lambda_n = (1 + (pi n / L)^2) / 4
//   F_n(x)   = (-1)^ceil(n/2) L^(-1/2) w^(-3/2) sin(n pi (1 - u / L) / 2)
//
// and every mode decays at rate a_n = 2 gamma^2 lambda_n.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "qfpt/error.hpp"
#include "qfpt/subspace.hpp"

namespace qfpt {

enum class Side { Upper, Lower, Both };

inline const char* to_string(Side side) {
  switch (side) {
    case Side::Upper: return "upper";
    case Side::Lower: return "lower";
    case Side::Both: return "both";
  }
  return "?";
}

struct DiffusionParams {
  double gamma = 2.0;
  double epsilon = 0.003;
  double x0 = 0.1;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be positive and finite");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("epsilon must lie in (0, 1/2)");
    if (!(x0 >= epsilon && x0 <= 1.0 - epsilon)) {
      throw DomainError("x0 = " + std::to_string(x0) + " outside [eps, 1 - eps]");
    }
  }
};

inline double log_ratio(double epsilon) { return std::log((1.0 - epsilon) / epsilon); }

inline double lambda_n(int n, double epsilon) {
  if (n < 1) throw DomainError("lambda_n: n must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("lambda_n: epsilon must lie in (0, 1/2)");
  const double r = std::numbers::pi * n / log_ratio(epsilon);
  return 0.25 * (1.0 + r * r);
}

namespace detail {

inline int mode_sign(int n) { return ((n + 1) / 2) % 2 == 0 ? 1 : -1; }

inline void check_mode_args(double x, int n, double epsilon, const char* what) {
  if (n < 1) throw DomainError(std::string(what) + ": n must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError(std::string(what) + ": epsilon must lie in (0, 1/2)");
  if (!(x > 0.0 && x < 1.0)) throw DomainError(std::string(what) + ": x must lie in (0, 1)");
}

}  // namespace detail

namespace detail {

/// sin and cos of theta = (n pi / 2)(1 - u / L), reduced by the quadrant of
/// n pi / 2 so that x = 1/2 (u = 0) gives exact zeros and the mode parity
/// F_n(1 - x) = (-1)^(n+1) F_n(x) holds to rounding of u.
inline std::pair<double, double> mode_phase(double x, int n, double L) {
  const double phi = 0.5 * n * std::numbers::pi * std::log((1.0 - x) / x) / L;
  const double s = std::sin(phi), c = std::cos(phi);
  switch (n % 4) {
    case 0: return {-s, c};
    case 1: return {c, s};
    case 2: return {s, -c};
    default: return {-c, -s};
  }
}

}  // namespace detail

inline double F_n(double x, int n, double epsilon) {
  detail::check_mode_args(x, n, epsilon, "F_n");
  if (x == epsilon || x == 1.0 - epsilon) return 0.0;
  const double L = log_ratio(epsilon);
  const double w = x - x * x;
  return detail::mode_sign(n) / std::sqrt(L) * std::pow(w, -1.5) * detail::mode_phase(x, n, L).first;
}

inline double F_n_prime(double x, int n, double epsilon) {
  detail::check_mode_args(x, n, epsilon, "F_n_prime");
  const double L = log_ratio(epsilon);
  const double w = x - x * x;
  const auto [sin_t, cos_t] = detail::mode_phase(x, n, L);
  const double dtheta = n * std::numbers::pi / (2.0 * L * w);
  const double s = (x == epsilon || x == 1.0 - epsilon) ? 0.0 : sin_t;
  return detail::mode_sign(n) / std::sqrt(L) *
         (-1.5 * std::pow(w, -2.5) * (1.0 - 2.0 * x) * s + std::pow(w, -1.5) * cos_t * dtheta);
}

/// eta(x) = (x - 1/2) ln(1/x - 1) / gamma^2
inline double eta(double x, double gamma) { return (x - 0.5) * std::log(1.0 / x - 1.0) / (gamma * gamma); }

/// Mean exit time from [eps, 1 - eps]: eta(x0) - eta(eps).
inline double mean_fpt(const DiffusionParams& p) {
  p.validate();
  if (p.x0 == p.epsilon || p.x0 == 1.0 - p.epsilon) return 0.0;
  return std::max(0.0, eta(p.x0, p.gamma) - eta(p.epsilon, p.gamma));
}

/// Mean exit time from a general interval [a, b] inside (0, 1).
inline double mean_fpt_general(const DiffusionParams& p, double a, double b) {
  if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) throw DomainError("gamma must be positive and finite");
  if (!(a > 0.0 && a < b && b < 1.0)) throw DomainError("mean_fpt_general: need 0 < a < b < 1");
  if (!(p.x0 >= a && p.x0 <= b)) throw DomainError("mean_fpt_general: x0 outside [a, b]");
  if (p.x0 == a || p.x0 == b) return 0.0;
  const double ea = eta(a, p.gamma);
  const double eb = eta(b, p.gamma);
  const double slope = (eb - ea) / (b - a);
  const double offset = (a * eb - b * ea) / (b - a);
  return std::max(0.0, eta(p.x0, p.gamma) - slope * p.x0 + offset);
}

/// Variance of the exit time, solving D m2'' = -2 m1 with m2(eps) = m2(1 - eps) = 0:
///   Var = E/gamma^2 + eta(eps)^2 - eta(x0)^2 + (ln^2(1/x0 - 1) - ln^2(1/eps - 1)) / (4 gamma^4)
inline double variance_fpt(const DiffusionParams& p) {
  p.validate();
  if (p.x0 == p.epsilon || p.x0 == 1.0 - p.epsilon) return 0.0;
  const double g2 = p.gamma * p.gamma;
  const double mean = mean_fpt(p);
  const double e0 = eta(p.x0, p.gamma);
  const double ee = eta(p.epsilon, p.gamma);
  const double l0 = std::log(1.0 / p.x0 - 1.0);
  const double le = std::log(1.0 / p.epsilon - 1.0);
  return std::max(0.0, mean / g2 + ee * ee - e0 * e0 + (l0 * l0 - le * le) / (4.0 * g2 * g2));
}

/// Probability of leaving through 1 - eps first (x is a martingale).
inline double splitting_upper(const DiffusionParams& p) {
  p.validate();
  return (p.x0 - p.epsilon) / (1.0 - 2.0 * p.epsilon);
}

struct FptMoments {
  double mean = 0.0;
  double variance = 0.0;
  double splitting_upper = 0.0;
};

inline FptMoments moments(const DiffusionParams& p) {
  return {mean_fpt(p), variance_fpt(p), splitting_upper(p)};
}

struct WeightedPoint {
  double x0;
  double weight;
};

/// Moments of the exit time when x0 is itself drawn from p0.
inline FptMoments averaged_moments(std::span<const WeightedPoint> p0, double gamma, double epsilon) {
  if (p0.empty()) throw DomainError("averaged_moments: empty distribution");
  double total = 0.0;
  for (const auto& pt : p0) {
    if (!(pt.weight >= 0.0)) throw DomainError("averaged_moments: negative weight");
    if (!(pt.x0 >= epsilon && pt.x0 <= 1.0 - epsilon)) {
      throw DomainError("averaged_moments: support point " + std::to_string(pt.x0) + " outside [eps, 1 - eps]");
    }
    total += pt.weight;
  }
  if (std::abs(total - 1.0) > 1e-10) throw DomainError("averaged_moments: weights sum to " + std::to_string(total));
  double m1 = 0.0, m2 = 0.0, split = 0.0;
  for (const auto& pt : p0) {
    const FptMoments m = moments({gamma, epsilon, pt.x0});
    m1 += pt.weight * m.mean;
    m2 += pt.weight * (m.variance + m.mean * m.mean);
    split += pt.weight * m.splitting_upper;
  }
  return {m1, std::max(0.0, m2 - m1 * m1), split};
}

struct TradeOff {
  double bound;            // eta(x0) + (F - 1/2) ln(F / (1 - F)) / gamma^2
  double achievable_mean;  // mean exit time with gamma~ = sqrt(zeta) gamma and eps = 1 - F
};

/// Lower bound on the mean time to reach fidelity F with a unit-efficiency detector.
inline TradeOff fidelity_time_bound(double F, double x0, double gamma, double zeta) {
  if (!(F > 0.5 && F < 1.0)) throw DomainError("fidelity_time_bound: F must lie in (1/2, 1)");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw DomainError("fidelity_time_bound: zeta must lie in (0, 1]");
  if (!(gamma > 0.0)) throw DomainError("fidelity_time_bound: gamma must be positive");
  const double bound = eta(x0, gamma) + (F - 0.5) / (gamma * gamma) * std::log(F / (1.0 - F));
  const double achievable = mean_fpt({std::sqrt(zeta) * gamma, 1.0 - F, x0});
  return {bound, achievable};
}

/// Truncated eigenfunction expansion with remainder control.
///
/// Series are only evaluated at times where the bound on the discarded
/// modes n > n_max is below tail_tol; t_min() reports that threshold.
class SpectralSolution {
 public:
  enum class Series { Density, Flux, Cdf };

  explicit SpectralSolution(DiffusionParams params, int n_max = 200, double tail_tol = 1e-10)
      : params_(params), n_max_(n_max), tail_tol_(tail_tol) {
    params_.validate();
    if (n_max < 1) throw DomainError("SpectralSolution: n_max must be >= 1");
    if (!(tail_tol > 0.0)) throw DomainError("SpectralSolution: tail_tol must be positive");
    L_ = log_ratio(params_.epsilon);
    const double g2 = params_.gamma * params_.gamma;
    const double eps = params_.epsilon;
    const double d0 = diffusion(params_.x0);
    const double d_lo = diffusion(eps);
    rate_.resize(n_max + 1);
    fx0_.resize(n_max + 1);
    upper_.resize(n_max + 1);
    lower_.resize(n_max + 1);
    for (int n = 1; n <= n_max; ++n) {
      rate_[n] = 2.0 * g2 * lambda_n(n, eps);
      fx0_[n] = F_n(params_.x0, n, eps);
      const double a = d0 / (2.0 * g2) * fx0_[n];
      // D and F_n' at 1 - eps follow from the values at eps by parity,
      // which keeps f1 = f2 exact at x0 = 1/2
      lower_[n] = d_lo * a * F_n_prime(eps, n, eps);
      upper_[n] = n % 2 == 1 ? lower_[n] : -lower_[n];
    }
    const double w0 = params_.x0 * (1.0 - params_.x0);
    const double we = eps * (1.0 - eps);
    flux_scale_ = g2 * std::numbers::pi / (L_ * L_) * std::sqrt(w0 / we);
    density_scale_ = std::sqrt(w0) / (L_ * std::pow(we, 1.5));
    t_min_density_ = solve_t_min(Series::Density);
    t_min_flux_ = solve_t_min(Series::Flux);
    t_min_cdf_ = solve_t_min(Series::Cdf);
  }

  /// Refuses partitions whose overlap is not a closed diffusion.
  static SpectralSolution from_partition(const SubspacePartition& partition, double epsilon, double x0,
                                         int n_max = 200, double tail_tol = 1e-10) {
    partition.require_closed();
    return SpectralSolution({partition.gamma, epsilon, x0}, n_max, tail_tol);
  }

  const DiffusionParams& params() const { return params_; }
  int n_max() const { return n_max_; }
  double tail_tol() const { return tail_tol_; }
  double rate(int n) const { return rate_.at(n); }

  double t_min(Series s = Series::Flux) const {
    switch (s) {
      case Series::Density: return t_min_density_;
      case Series::Flux: return t_min_flux_;
      case Series::Cdf: return t_min_cdf_;
    }
    return t_min_flux_;
  }

  /// Coefficient c_n of e^{-a_n tau} in the exit-time density for `side`.
  double flux_coefficient(int n, Side side) const {
    switch (side) {
      case Side::Upper: return upper_.at(n);
      case Side::Lower: return lower_.at(n);
      case Side::Both: return n % 2 == 1 ? 2.0 * lower_.at(n) : 0.0;
    }
    return 0.0;
  }

  /// p(x, t). Raw truncated value; may dip below zero by at most tail_tol.
  double density(double x, double t) const {
    require_time(t, t_min_density_, "density");
    const double eps = params_.epsilon;
    if (!(x >= eps && x <= 1.0 - eps)) throw DomainError("density: x outside [eps, 1 - eps]");
    const double a = diffusion(params_.x0) / (2.0 * params_.gamma * params_.gamma);
    double sum = 0.0;
    for (int n = n_max_; n >= 1; --n) sum += fx0_[n] * F_n(x, n, eps) * std::exp(-rate_[n] * t);
    return a * sum;
  }

  /// Probability that neither threshold has been reached by time t.
  double survival(double t) const { return 1.0 - fpt_cdf(t, Side::Both); }

  /// Exit-time density through `side`.
  double fpt_density(double tau, Side side) const {
    require_time(tau, t_min_flux_, "fpt_density");
    double sum = 0.0;
    for (int n = n_max_; n >= 1; --n) sum += flux_coefficient(n, side) * std::exp(-rate_[n] * tau);
    return sum;
  }

  /// Total probability of leaving through `side`, by resummation of the mode
  /// series with sum_n n sin(n y) / (n^2 + k^2) = (pi/2) sinh(k (pi - y)) / sinh(k pi).
  double splitting(Side side) const {
    const double eps = params_.epsilon;
    const double x0 = params_.x0;
    switch (side) {
      case Side::Upper: return (x0 - eps) / (1.0 - 2.0 * eps);
      case Side::Lower: return (1.0 - eps - x0) / (1.0 - 2.0 * eps);
      case Side::Both: return 1.0;
    }
    return 1.0;
  }

  /// P(exit through `side` by tau). The infinite-time mass comes from the
  /// closed form, the decaying remainder from the truncated series.
  double fpt_cdf(double tau, Side side) const {
    if (tau <= 0.0) return 0.0;
    require_time(tau, t_min_cdf_, "fpt_cdf");
    return cdf_unchecked(tau, side);
  }

  /// As fpt_cdf, but 0 below t_min instead of an error (used by goodness-of-fit).
  double fpt_cdf_extended(double tau, Side side) const {
    if (tau <= 0.0 || tau < t_min_cdf_) return 0.0;
    return cdf_unchecked(tau, side);
  }

  /// sum_{n <= n_terms} c_n / a_n: the term-wise time integral of the density.
  double termwise_integral(Side side, long n_terms) const { return termwise(side, n_terms, 1); }
  /// sum c_n / a_n^2: term-wise first moment.
  double termwise_mean(Side side, long n_terms) const { return termwise(side, n_terms, 2); }
  /// sum 2 c_n / a_n^3: term-wise second moment.
  double termwise_second_moment(Side side, long n_terms) const { return 2.0 * termwise(side, n_terms, 3); }

 private:
  double diffusion(double x) const {
    const double w = x * (1.0 - x);
    return 2.0 * params_.gamma * params_.gamma * w * w;
  }

  void require_time(double t, double t_min, const char* what) const {
    if (!(t >= t_min) || !std::isfinite(t)) {
      throw DomainError(std::string(what) + ": t = " + std::to_string(t) + " below t_min = " +
                        std::to_string(t_min) + " for n_max = " + std::to_string(n_max_) +
                        "; raise n_max or tail_tol");
    }
  }

  double cdf_unchecked(double tau, Side side) const {
    double sum = 0.0;
    for (int n = n_max_; n >= 1; --n) sum += flux_coefficient(n, side) * std::exp(-rate_[n] * tau) / rate_[n];
    return std::clamp(splitting(side) - sum, 0.0, splitting(side));
  }

  double termwise(Side side, long n_terms, int power) const {
    if (n_terms < 1) throw DomainError("termwise: n_terms must be >= 1");
    const double eps = params_.epsilon;
    const double g2 = params_.gamma * params_.gamma;
    const double a = diffusion(params_.x0) / (2.0 * g2);
    const double d_hi = diffusion(1.0 - eps);
    const double d_lo = diffusion(eps);
    long double sum = 0.0L;
    for (long n = n_terms; n >= 1; --n) {
      double c;
      if (n <= n_max_) {
        c = flux_coefficient(static_cast<int>(n), side);
      } else {
        const int k = static_cast<int>(n);
        const double base = a * F_n(params_.x0, k, eps);
        const double up = -d_hi * base * F_n_prime(1.0 - eps, k, eps);
        const double lo = d_lo * base * F_n_prime(eps, k, eps);
        c = side == Side::Upper ? up : side == Side::Lower ? lo : up + lo;
      }
      const double r = 2.0 * g2 * lambda_n(static_cast<int>(n), eps);
      sum += static_cast<long double>(c) / std::pow(static_cast<long double>(r), power);
    }
    return static_cast<double>(sum);
  }

  /// Bound on sum_{n > n_max} n^p e^{-a_n t} times the coefficient scale.
  double tail_bound(Series s, double t) const {
    if (t <= 0.0) return std::numeric_limits<double>::infinity();
    const double g2 = params_.gamma * params_.gamma;
    const double b = g2 * std::numbers::pi * std::numbers::pi * t / (2.0 * L_ * L_);
    const double m = n_max_ + 1.0;
    double scale = 0.0;
    int p = 0;
    switch (s) {
      case Series::Density: scale = density_scale_; p = 0; break;
      case Series::Flux: scale = 2.0 * flux_scale_; p = 1; break;
      case Series::Cdf: scale = 2.0 * flux_scale_ * 2.0 * L_ * L_ / (g2 * std::numbers::pi * std::numbers::pi); p = -1; break;
    }
    // n^p e^{-b n^2} must already be decreasing at n = m for the integral bound
    if (p == 1 && 2.0 * b * m * m < 1.0) return std::numeric_limits<double>::infinity();
    const double head = std::pow(m, p) * std::exp(-b * m * m);
    const double integral = std::exp(-b * m * m) / (2.0 * b * std::pow(m, 1 - p));
    return scale * std::exp(-0.5 * g2 * t) * (head + integral);
  }

  double solve_t_min(Series s) const {
    double hi = 1e-6;
    while (tail_bound(s, hi) > tail_tol_) {
      hi *= 2.0;
      if (hi > 1e6) throw NumericalError("SpectralSolution: cannot bound the series tail");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (tail_bound(s, mid) > tail_tol_ ? lo : hi) = mid;
    }
    return hi;
  }

  DiffusionParams params_;
  int n_max_;
  double tail_tol_;
  double L_ = 0.0;
  double flux_scale_ = 0.0;
  double density_scale_ = 0.0;
  double t_min_density_ = 0.0, t_min_flux_ = 0.0, t_min_cdf_ = 0.0;
  std::vector<double> rate_, fx0_, upper_, lower_;
};

}  // namespace qfpt
