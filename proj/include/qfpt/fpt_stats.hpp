#pragma once

// Empirical exit-time statistics and Kolmogorov-Smirnov distances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qfpt/analytic.hpp"
#include "qfpt/error.hpp"
#include "qfpt/records.hpp"

namespace qfpt {

/// Streaming central moments up to fourth order; merge() combines disjoint
/// batches exactly (pairwise update formulas).
class MomentAccumulator {
 public:
  void add(double v) {
    MomentAccumulator one;
    one.n_ = 1;
    one.mean_ = v;
    merge(one);
  }

  void merge(const MomentAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = n_, nb = o.n_, n = na + nb;
    const double d = o.mean_ - mean_;
    const double d2 = d * d, d3 = d2 * d, d4 = d2 * d2;
    const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
    const double m3 = m3_ + o.m3_ + d3 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2_ - nb * m2_) / n;
    const double m4 = m4_ + o.m4_ + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                      6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) + 4.0 * d * (na * o.m3_ - nb * m3_) / n;
    mean_ += d * nb / n;
    m2_ = m2;
    m3_ = m3;
    m4_ = m4;
    n_ += o.n_;
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance.
  double variance() const { return n_ > 1 ? m2_ / (n_ - 1.0) : 0.0; }
  double central_moment(int k) const {
    if (n_ == 0) return 0.0;
    switch (k) {
      case 2: return m2_ / n_;
      case 3: return m3_ / n_;
      case 4: return m4_ / n_;
      default: return 0.0;
    }
  }
  double mean_se() const { return n_ > 1 ? std::sqrt(variance() / n_) : 0.0; }
  /// Large-sample standard error of the sample variance: sqrt((mu4 - s^4 (n-3)/(n-1)) / n).
  double variance_se() const {
    if (n_ < 4) return 0.0;
    const double n = n_;
    const double s2 = variance();
    return std::sqrt(std::max(0.0, (central_moment(4) - s2 * s2 * (n - 3.0) / (n - 1.0)) / n));
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0, m2_ = 0.0, m3_ = 0.0, m4_ = 0.0;
};

/// Mergeable per-batch tally of hitting records.
struct RecordAccumulator {
  MomentAccumulator times;  // uncensored hit times
  std::size_t n = 0, upper = 0, lower = 0, censored = 0;

  void add(const HittingRecord& r) {
    ++n;
    if (r.censored) {
      ++censored;
      return;
    }
    times.add(r.hit_time);
    if (r.side == ExitSide::Upper) ++upper;
    if (r.side == ExitSide::Lower) ++lower;
  }

  void merge(const RecordAccumulator& o) {
    times.merge(o.times);
    n += o.n;
    upper += o.upper;
    lower += o.lower;
    censored += o.censored;
  }
};

inline RecordAccumulator accumulate(std::span<const HittingRecord> records) {
  RecordAccumulator acc;
  for (const auto& r : records) acc.add(r);
  return acc;
}

inline constexpr double kCensorLimit = 0.01;

struct EnsembleSummary {
  std::size_t n = 0;
  std::size_t n_upper = 0, n_lower = 0, n_censored = 0;
  double mean = 0.0, mean_se = 0.0;
  double variance = 0.0, variance_se = 0.0;
  double splitting_upper = 0.0, splitting_se = 0.0;
  double censored_fraction = 0.0;
};

inline EnsembleSummary summarize(const RecordAccumulator& acc, double censor_limit = kCensorLimit) {
  if (acc.n < 2) throw DomainError("summarize: need at least 2 records");
  EnsembleSummary s;
  s.n = acc.n;
  s.n_upper = acc.upper;
  s.n_lower = acc.lower;
  s.n_censored = acc.censored;
  s.censored_fraction = static_cast<double>(acc.censored) / acc.n;
  if (!(s.censored_fraction < censor_limit)) {
    throw NumericalError("summarize: censored fraction " + std::to_string(s.censored_fraction) +
                         " exceeds limit " + std::to_string(censor_limit) + "; raise t_max");
  }
  s.mean = acc.times.mean();
  s.mean_se = acc.times.mean_se();
  s.variance = acc.times.variance();
  s.variance_se = acc.times.variance_se();
  s.splitting_upper = static_cast<double>(acc.upper) / acc.n;
  s.splitting_se = std::sqrt(s.splitting_upper * (1.0 - s.splitting_upper) / acc.n);
  return s;
}

inline EnsembleSummary summarize(std::span<const HittingRecord> records, double censor_limit = kCensorLimit) {
  return summarize(accumulate(records), censor_limit);
}

inline bool side_matches(const HittingRecord& r, Side side) {
  if (r.censored) return false;
  switch (side) {
    case Side::Upper: return r.side == ExitSide::Upper;
    case Side::Lower: return r.side == ExitSide::Lower;
    case Side::Both: return r.side != ExitSide::None;
  }
  return false;
}

inline std::vector<double> exit_times(std::span<const HittingRecord> records, Side side) {
  std::vector<double> out;
  for (const auto& r : records) {
    if (side_matches(r, side)) out.push_back(r.hit_time);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Right-continuous empirical CDF of the side-filtered times, normalized by
/// the total record count.
class Ecdf {
 public:
  Ecdf(std::span<const HittingRecord> records, Side side) : total_(records.size()) {
    times_ = exit_times(records, side);
    if (times_.empty()) throw DomainError(std::string("ecdf: no uncensored records on side ") + to_string(side));
  }

  double operator()(double t) const {
    const auto k = std::upper_bound(times_.begin(), times_.end(), t) - times_.begin();
    return static_cast<double>(k) / static_cast<double>(total_);
  }

  const std::vector<double>& times() const { return times_; }
  std::size_t total() const { return total_; }
  double plateau() const { return static_cast<double>(times_.size()) / static_cast<double>(total_); }

 private:
  std::vector<double> times_;
  std::size_t total_;
};

/// P(sup_{u <= s} |B(u)| < x) for a standard Brownian bridge B on [0, 1].
/// Conditioned on B(s) = y, the path on [0, s] is a bridge of length s from
/// 0 to y, whose probability of staying inside (-x, x) is an image sum; the
/// remaining integral over y ~ N(0, s (1 - s)) uses composite Simpson.
inline double bridge_sup_cdf(double x, double s) {
  if (!(s > 0.0 && s <= 1.0)) throw DomainError("bridge_sup_cdf: s must lie in (0, 1]");
  if (x <= 0.0) return 0.0;
  constexpr int kImages = 6;
  const double var = s * (1.0 - s);
  if (var < 1e-12) {  // Kolmogorov
    double sum = 0.0;
    for (int j = -kImages; j <= kImages; ++j) sum += (j % 2 == 0 ? 1.0 : -1.0) * std::exp(-2.0 * j * j * x * x);
    return std::clamp(sum, 0.0, 1.0);
  }
  auto stay = [&](double y) {
    double sum = 0.0;
    for (int k = -kImages; k <= kImages; ++k) {
      const double a = y + 4.0 * k * x, b = 2.0 * x - y + 4.0 * k * x;
      sum += std::exp(-(a * a - y * y) / (2.0 * s)) - std::exp(-(b * b - y * y) / (2.0 * s));
    }
    return sum;
  };
  const double sd = std::sqrt(var);
  const double lo = std::max(-x, -12.0 * sd), hi = std::min(x, 12.0 * sd);
  constexpr int kIntervals = 2000;
  const double h = (hi - lo) / kIntervals;
  double sum = 0.0;
  for (int i = 0; i <= kIntervals; ++i) {
    const double y = lo + i * h;
    const double w = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * std::exp(-y * y / (2.0 * var)) * stay(y);
  }
  return std::clamp(sum * h / 3.0 / std::sqrt(2.0 * std::numbers::pi * var), 0.0, 1.0);
}

/// p-quantile of sup_{u <= s} |B(u)| by bisection.
inline double bridge_sup_quantile(double s, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("bridge_sup_quantile: p must lie in (0, 1)");
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (bridge_sup_cdf(mid, s) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct KsResult {
  double statistic = 0.0;
  std::size_t n = 0;        // records entering the ECDF
  std::size_t n_total = 0;  // normalization count
  std::size_t below_t_min = 0;
  double splitting = 1.0;   // analytic mass of the side (1 for both sides)
  double threshold_95() const { return n ? 1.36 / std::sqrt(static_cast<double>(n)) : 0.0; }
  double threshold_99() const { return n ? 1.63 / std::sqrt(static_cast<double>(n)) : 0.0; }

  /// Large-sample 99% point of the statistic under the null. N_total ECDF(t)
  /// is binomial with success probability F(t) <= s, so sqrt(N_total) times
  /// the unnormalized distance tends to sup_{u <= s} |B(u)|; the statistic
  /// divides that by s. For s = 1 this is the Kolmogorov limit.
  double null_limit_99() const {
    if (n_total == 0) return 0.0;
    const double s = std::min(splitting, 1.0);
    return bridge_sup_quantile(s, 0.99) / (s * std::sqrt(static_cast<double>(n_total)));
  }
};

/// sup_t |ECDF(t) - cdf(t)| / norm, with ECDF(t) = #{times <= t} / n_total.
/// `sorted` must be ascending. The sup includes the plateau at infinity
/// against cdf_inf.
inline double ks_distance(std::span<const double> sorted, std::size_t n_total,
                          const std::function<double(double)>& cdf, double cdf_inf, double norm = 1.0) {
  const double total = static_cast<double>(n_total);
  double d = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double t = sorted[i];
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == t) ++j;
    const double c = cdf(t);
    d = std::max({d, std::abs(static_cast<double>(i) / total - c), std::abs(static_cast<double>(j) / total - c)});
    i = j;
  }
  d = std::max(d, std::abs(static_cast<double>(sorted.size()) / total - cdf_inf));
  return d / norm;
}

/// One-sample KS against the analytic exit-time law. One-sided comparisons
/// divide both curves by the analytic splitting probability.
inline KsResult ks_one_sample(std::span<const HittingRecord> records, Side side, const SpectralSolution& sol) {
  if (records.empty()) throw DomainError("ks_one_sample: no records");
  const std::vector<double> times = exit_times(records, side);
  if (times.empty()) throw DomainError(std::string("ks_one_sample: no records on side ") + to_string(side));
  KsResult out;
  out.n = times.size();
  out.n_total = records.size();
  const double t_min = sol.t_min(SpectralSolution::Series::Cdf);
  out.below_t_min = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t_min) - times.begin());
  const double s = sol.splitting(side);
  out.splitting = s;
  out.statistic = ks_distance(times, records.size(), [&](double t) { return sol.fpt_cdf_extended(t, side); }, s, s);
  return out;
}

/// One-sample KS of plain samples against any CDF.
inline KsResult ks_one_sample(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw DomainError("ks_one_sample: no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  KsResult out;
  out.n = out.n_total = sorted.size();
  out.statistic = ks_distance(sorted, sorted.size(), cdf, 1.0);
  return out;
}

struct KsTwoSample {
  double statistic = 0.0;
  std::size_t n = 0, m = 0;
  double threshold_95() const { return 1.36 * std::sqrt((n + m) / (static_cast<double>(n) * m)); }
};

inline KsTwoSample ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = x.size(), m = y.size();
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t) ++i;
    while (j < y.size() && y[j] == t) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  return {d, x.size(), y.size()};
}

inline KsTwoSample ks_two_sample(std::span<const HittingRecord> a, std::span<const HittingRecord> b, Side side) {
  const auto x = exit_times(a, side);
  const auto y = exit_times(b, side);
  return ks_two_sample(x, y);
}

struct Histogram {
  std::vector<double> edges;
  std::vector<double> density;  // count / (n_total * width)
  std::vector<std::size_t> counts;
  std::size_t n_total = 0;
};

/// Equal-width bins on [lo, hi]; the default range is [0, largest time].
/// Densities integrate to the side's share of all records.
inline Histogram histogram(std::span<const HittingRecord> records, std::size_t bins, Side side, double lo = 0.0,
                           double hi = -1.0) {
  if (bins == 0) throw DomainError("histogram: bins must be >= 1");
  if (records.empty()) throw DomainError("histogram: no records");
  const auto times = exit_times(records, side);
  if (times.empty()) throw DomainError("histogram: no records on the requested side");
  if (hi <= lo) hi = times.back();
  if (hi <= lo) hi = lo + 1.0;
  Histogram h;
  h.n_total = records.size();
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / bins;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + b * width);
  h.edges.back() = hi;
  for (double t : times) {
    if (t < lo || t > hi) continue;
    auto b = static_cast<std::size_t>((t - lo) / width);
    h.counts[std::min(b, bins - 1)] += 1;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    h.density.push_back(static_cast<double>(h.counts[b]) / (h.n_total * (h.edges[b + 1] - h.edges[b])));
  }
  return h;
}

/// Exit side and time drawn from the analytic law by inverse transform:
/// u_side picks the side by its splitting probability, u_time inverts the
/// side's normalized CDF by bisection.
inline HittingRecord sample_exit(const SpectralSolution& sol, double u_side, double u_time,
                                 std::uint64_t trajectory_id = 0) {
  HittingRecord r;
  r.trajectory_id = trajectory_id;
  const double s_up = sol.splitting(Side::Upper);
  const Side side = u_side < s_up ? Side::Upper : Side::Lower;
  r.side = side == Side::Upper ? ExitSide::Upper : ExitSide::Lower;
  const double s = sol.splitting(side);
  auto g = [&](double t) { return sol.fpt_cdf_extended(t, side) / s; };
  double hi = 1.0;
  while (g(hi) < u_time) {
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("sample_exit: cannot bracket quantile");
  }
  double lo = 0.0;
  for (int it = 0; it < 100 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < u_time ? lo : hi) = mid;
  }
  r.hit_time = hi;
  return r;
}

}  // namespace qfpt
