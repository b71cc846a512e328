#pragma once

// Euler-Maruyama integration of the diffusive stochastic master equation
//
//   d rho = -i[H, rho] dt + sum_k D[L_k] rho dt
//           + sum_k sqrt(zeta_k) (L_k rho + rho L_k^dagger - <L_k + L_k^dagger> rho) dW_k
//
// and of the reduced overlap SDE dx = 2 gamma x (1 - x) dW used as an oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qfpt/records.hpp"
#include "qfpt/rng.hpp"
#include "qfpt/subspace.hpp"

namespace qfpt {

enum class Scheme { EulerMaruyama };

struct IntegratorConfig {
  double dt = 1e-3;
  double t_max = 25.0;
  Scheme scheme = Scheme::EulerMaruyama;
  std::size_t renormalize_every = 1;
  std::uint64_t seed = 20250101;
  std::size_t trace_stride = 1;  // record every n-th step when tracing

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("integrator: dt must be positive");
    if (!(t_max >= dt) || !std::isfinite(t_max)) throw DomainError("integrator: need dt <= t_max");
    if (renormalize_every == 0) throw DomainError("integrator: renormalize_every must be >= 1");
    if (trace_stride == 0) throw DomainError("integrator: trace_stride must be >= 1");
  }

  std::size_t max_steps() const {
    return static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
  }
};

/// Operator stored in the cheapest form for the products the stepper needs.
class CompiledOperator {
 public:
  enum class Kind { Zero, Diagonal, Sparse, Dense };

  CompiledOperator() = default;

  static CompiledOperator compile(const ComplexMatrix& a) {
    CompiledOperator op;
    const auto d = a.rows();
    Eigen::Index nnz = 0;
    bool diagonal = true;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) {
        if (a(i, j) != Complex{}) {
          ++nnz;
          if (i != j) diagonal = false;
        }
      }
    }
    if (nnz == 0) {
      op.kind_ = Kind::Zero;
    } else if (diagonal) {
      op.kind_ = Kind::Diagonal;
      op.diag_ = a.diagonal();
    } else if (d >= 8 && 4 * nnz <= d * d) {
      op.kind_ = Kind::Sparse;
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          if (a(i, j) != Complex{}) op.entries_.push_back({i, j, a(i, j)});
        }
      }
    } else {
      op.kind_ = Kind::Dense;
    }
    op.dense_ = a;
    op.dense_adj_ = a.adjoint();
    return op;
  }

  Kind kind() const { return kind_; }

  /// out += alpha x A^dagger
  void add_right_adjoint(const ComplexMatrix& x, ComplexMatrix& out, Complex alpha) const {
    switch (kind_) {
      case Kind::Zero: break;
      case Kind::Diagonal: {
        // column j scaled by alpha conj(d_j)
        const Eigen::Index n = x.rows();
        for (Eigen::Index j = 0; j < n; ++j) {
          axpy_column(alpha * std::conj(diag_(j)), x.col(j).data(), out.col(j).data(), n);
        }
        break;
      }
      case Kind::Sparse: {
        // column `row` of x A^dagger collects conj(a(row, col)) x(:, col)
        const Eigen::Index n = x.rows();
        for (const Entry& e : entries_) {
          axpy_column(alpha * std::conj(e.value), x.col(e.col).data(), out.col(e.row).data(), n);
        }
        break;
      }
      case Kind::Dense: out.noalias() += alpha * (x * dense_adj_); break;
    }
  }

  /// out += alpha A x
  void add_left(const ComplexMatrix& x, ComplexMatrix& out, Complex alpha) const {
    switch (kind_) {
      case Kind::Zero: break;
      case Kind::Diagonal: {
        const Eigen::Index n = x.rows();
        bool real = alpha.imag() == 0.0 && diag_.imag().isZero(0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
          const double* __restrict c = reinterpret_cast<const double*>(x.col(j).data());
          double* __restrict o = reinterpret_cast<double*>(out.col(j).data());
          if (real) {
            for (Eigen::Index i = 0; i < n; ++i) {
              const double w = alpha.real() * diag_(i).real();
              o[2 * i] += w * c[2 * i];
              o[2 * i + 1] += w * c[2 * i + 1];
            }
          } else {
            for (Eigen::Index i = 0; i < n; ++i) {
              const Complex w = alpha * diag_(i);
              o[2 * i] += w.real() * c[2 * i] - w.imag() * c[2 * i + 1];
              o[2 * i + 1] += w.real() * c[2 * i + 1] + w.imag() * c[2 * i];
            }
          }
        }
        break;
      }
      case Kind::Sparse:
      case Kind::Dense: out.noalias() += alpha * (dense_ * x); break;
    }
  }

  /// Re tr(A x)
  double re_trace_product(const ComplexMatrix& x) const {
    double sum = 0.0;
    switch (kind_) {
      case Kind::Zero: break;
      case Kind::Diagonal:
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          sum += diag_(i).real() * x(i, i).real() - diag_(i).imag() * x(i, i).imag();
        }
        break;
      case Kind::Sparse:
        for (const Entry& e : entries_) {
          const Complex v = x(e.col, e.row);
          sum += e.value.real() * v.real() - e.value.imag() * v.imag();
        }
        break;
      case Kind::Dense: sum = (dense_.array() * x.transpose().array()).sum().real(); break;
    }
    return sum;
  }

 private:
  /// o += w c for one column of n complex entries; raw loops because
  /// std::complex arithmetic on short vectors does not vectorize.
  static void axpy_column(Complex w, const Complex* src, Complex* dst, Eigen::Index n) {
    const double* __restrict c = reinterpret_cast<const double*>(src);
    double* __restrict o = reinterpret_cast<double*>(dst);
    const double wr = w.real(), wi = w.imag();
    if (wi == 0.0) {
      for (Eigen::Index k = 0; k < 2 * n; ++k) o[k] += wr * c[k];
    } else {
      for (Eigen::Index k = 0; k < n; ++k) {
        o[2 * k] += wr * c[2 * k] - wi * c[2 * k + 1];
        o[2 * k + 1] += wr * c[2 * k + 1] + wi * c[2 * k];
      }
    }
  }

  struct Entry {
    Eigen::Index row, col;
    Complex value;
  };
  Kind kind_ = Kind::Zero;
  ComplexVector diag_;
  std::vector<Entry> entries_;
  ComplexMatrix dense_, dense_adj_;
};

/// Scratch matrices reused across steps of one trajectory.
struct SmeWorkspace {
  ComplexMatrix G, next;
};

class SmeIntegrator {
 public:
  explicit SmeIntegrator(const QuantumModel& model) : dim_(model.dim()) {
    model.validate();
    H_ = CompiledOperator::compile(model.H);
    for (std::size_t k = 0; k < model.Ls.size(); ++k) {
      const ComplexMatrix& l = model.Ls[k];
      channels_.push_back({CompiledOperator::compile(l), CompiledOperator::compile(l.adjoint() * l),
                           std::sqrt(model.zetas[k])});
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t channels() const { return channels_.size(); }

  /// One Euler-Maruyama step in place. `rho` must be Hermitian with unit trace.
  /// Returns the trace after the update and before renormalization.
  double step(ComplexMatrix& rho, double dt, std::span<const double> dws, SmeWorkspace& ws,
              bool renormalize) const {
    if (dws.size() != channels_.size()) {
      throw DomainError("step_sme: expected " + std::to_string(channels_.size()) +
                        " Wiener increments, got " + std::to_string(dws.size()));
    }
    const auto d = rho.rows();
    // Only the Hermitian part Herm(X) = (X + X^dagger)/2 of the update is
    // kept, and for Hermitian rho
    //   -i[H, rho] dt          = Herm(2i dt rho H^dagger)
    //   L rho + rho L^dagger   = Herm(2 rho L^dagger)
    //   {L^dagger L, rho}      = Herm(2 rho L^dagger L)
    //   L rho L^dagger         = L (rho L^dagger)
    // so every term is a right product and a single adjoint pass closes the step.
    double scale = 1.0;
    for (std::size_t k = 0; k < channels_.size(); ++k) {
      scale -= 2.0 * channels_[k].sqrt_zeta * dws[k] * channels_[k].L.re_trace_product(rho);
    }
    // H goes through G first: real sparse coefficients keep the axpys vectorized
    ws.G.setZero(d, d);
    H_.add_right_adjoint(rho, ws.G, 1.0);
    {
      // next = scale rho + 2i dt G, written out to avoid complex-scalar products
      ws.next.resize(d, d);
      const double* __restrict r = reinterpret_cast<const double*>(rho.data());
      const double* __restrict g = reinterpret_cast<const double*>(ws.G.data());
      double* __restrict o = reinterpret_cast<double*>(ws.next.data());
      for (Eigen::Index k = 0; k < d * d; ++k) {
        o[2 * k] = scale * r[2 * k] - 2.0 * dt * g[2 * k + 1];
        o[2 * k + 1] = scale * r[2 * k + 1] + 2.0 * dt * g[2 * k];
      }
    }
    for (std::size_t k = 0; k < channels_.size(); ++k) {
      const Channel& ch = channels_[k];
      ws.G.setZero(d, d);
      ch.L.add_right_adjoint(rho, ws.G, 1.0);
      ws.next += (2.0 * ch.sqrt_zeta * dws[k]) * ws.G;
      ch.LdL.add_right_adjoint(rho, ws.next, -dt);
      ch.L.add_left(ws.G, ws.next, dt);
    }
    rho = 0.5 * (ws.next + ws.next.adjoint());

    const double tr = rho.trace().real();
    if (!std::isfinite(tr) || std::abs(tr - 1.0) > kTol.divergence) {
      throw NumericalError("step_sme: trace drifted to " + std::to_string(tr) +
                           " before renormalization; reduce dt");
    }
    if (renormalize) rho /= tr;
    return tr;
  }

 private:
  struct Channel {
    CompiledOperator L;
    CompiledOperator LdL;
    double sqrt_zeta;
  };
  std::size_t dim_;
  CompiledOperator H_;
  std::vector<Channel> channels_;
};

struct TrajectoryState {
  ComplexMatrix rho;
  double t = 0.0;
  std::size_t steps = 0;
};

/// One step of the stochastic master equation with explicit increments dW_k.
inline TrajectoryState step_sme(TrajectoryState state, const QuantumModel& model, double dt,
                                std::span<const double> dws, bool renormalize = true) {
  const SmeIntegrator integrator(model);
  SmeWorkspace ws;
  integrator.step(state.rho, dt, dws, ws, renormalize);
  state.t += dt;
  ++state.steps;
  return state;
}

struct ReducedStep {
  double x;
  bool clamped;  // the unclamped update left [0, 1]
};

/// x <- clamp(x + 2 gamma x (1 - x) dW, 0, 1)
inline ReducedStep step_reduced(double x, double gamma, double dw) {
  const double next = x + 2.0 * gamma * x * (1.0 - x) * dw;
  if (next < 0.0) return {0.0, true};
  if (next > 1.0) return {1.0, true};
  return {next, false};
}

struct OverlapTrace {
  std::vector<double> times;
  std::vector<double> x;
  std::vector<std::string> names;
  std::vector<std::vector<double>> observables;  // observables[j][i] at times[i]
};

struct Observable {
  std::string name;
  ComplexMatrix op;
};

struct TrajectoryOutcome {
  HittingRecord record;
  bool immediate = false;  // initial overlap already outside (eps, 1 - eps)
  std::optional<OverlapTrace> trace;
};

inline void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("epsilon must lie in (0, 1/2)");
}

inline ExitSide exit_side(double x, double epsilon) {
  if (x >= 1.0 - epsilon - kTol.threshold_slack) return ExitSide::Upper;
  if (x <= epsilon + kTol.threshold_slack) return ExitSide::Lower;
  return ExitSide::None;
}

/// tr(rho P_Q1) from the nonzero entries of the projector only.
class OverlapProbe {
 public:
  explicit OverlapProbe(const SubspacePartition& partition) {
    const ComplexMatrix& p = partition.P_Q1;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (p(i, j) != Complex{}) entries_.push_back({i, j, p(i, j)});
      }
    }
  }

  double operator()(const ComplexMatrix& rho) const {
    double x = 0.0;
    for (const auto& e : entries_) {
      const Complex r = rho(e.col, e.row);
      x += e.value.real() * r.real() - e.value.imag() * r.imag();
    }
    if (!(x >= -kTol.overlap_slack && x <= 1.0 + kTol.overlap_slack)) {
      throw NumericalError("overlap: tr(rho P_Q1) = " + std::to_string(x) +
                           " outside [0,1]; the integrator diverged (reduce dt)");
    }
    return std::clamp(x, 0.0, 1.0);
  }

 private:
  struct Entry {
    Eigen::Index row, col;
    Complex value;
  };
  std::vector<Entry> entries_;
};

namespace detail {

inline void record_point(OverlapTrace& trace, double t, double x, const ComplexMatrix& rho,
                         std::span<const Observable> observables) {
  trace.times.push_back(t);
  trace.x.push_back(x);
  for (std::size_t j = 0; j < observables.size(); ++j) {
    trace.observables[j].push_back(trace_product(rho, observables[j].op));
  }
}

}  // namespace detail

/// Integrates one trajectory until the overlap with Q1 reaches 1 - eps (upper),
/// eps (lower) or t_max (censored). Hits are detected on the time grid.
inline TrajectoryOutcome simulate_trajectory(const SmeIntegrator& integrator,
                                             const SubspacePartition& partition,
                                             const StateVector& psi0, const IntegratorConfig& cfg,
                                             double epsilon, std::uint64_t trajectory_id,
                                             bool record = false,
                                             std::span<const Observable> observables = {}) {
  cfg.validate();
  check_epsilon(epsilon);
  if (psi0.dim() != integrator.dim() || partition.dim() != integrator.dim()) {
    throw DomainError("simulate_trajectory: dimension mismatch between state, model and partition");
  }
  ComplexMatrix rho = psi0.outer();
  const Overlap ov0 = overlap(rho, partition);
  if (ov0.p_complement >= kTol.initial_support) {
    throw DomainError("simulate_trajectory: initial state has weight " +
                      std::to_string(ov0.p_complement) + " outside Q1 + Q2");
  }

  TrajectoryOutcome out;
  out.record.trajectory_id = trajectory_id;
  if (record) {
    out.trace.emplace();
    for (const auto& o : observables) out.trace->names.push_back(o.name);
    out.trace->observables.resize(observables.size());
    detail::record_point(*out.trace, 0.0, ov0.x, rho, observables);
  }
  if (const ExitSide side = exit_side(ov0.x, epsilon); side != ExitSide::None) {
    out.record.side = side;
    out.record.hit_time = 0.0;
    out.immediate = true;
    return out;
  }

  NormalStream rng(cfg.seed, trajectory_id);
  SmeWorkspace ws;
  const OverlapProbe probe(partition);
  std::vector<double> dws(integrator.channels());
  const double sqrt_dt = std::sqrt(cfg.dt);
  const std::size_t n_steps = cfg.max_steps();
  for (std::size_t step = 1; step <= n_steps; ++step) {
    for (double& w : dws) w = sqrt_dt * rng();
    integrator.step(rho, cfg.dt, dws, ws, step % cfg.renormalize_every == 0);
    const double t = static_cast<double>(step) * cfg.dt;
    const double x = probe(rho);
    const ExitSide side = exit_side(x, epsilon);
    if (out.trace && (step % cfg.trace_stride == 0 || side != ExitSide::None)) {
      detail::record_point(*out.trace, t, x, rho, observables);
    }
    if (side != ExitSide::None) {
      out.record.side = side;
      out.record.hit_time = t;
      return out;
    }
  }
  out.record.censored = true;
  out.record.hit_time = cfg.t_max;
  return out;
}

inline TrajectoryOutcome simulate_trajectory(const QuantumModel& model,
                                             const SubspacePartition& partition,
                                             const StateVector& psi0, const IntegratorConfig& cfg,
                                             double epsilon, std::uint64_t trajectory_id = 0,
                                             bool record = false,
                                             std::span<const Observable> observables = {}) {
  const SmeIntegrator integrator(model);
  return simulate_trajectory(integrator, partition, psi0, cfg, epsilon, trajectory_id, record,
                             observables);
}

struct ReducedOutcome {
  HittingRecord record;
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
};

/// First passage of the reduced overlap SDE, same grid rule as the full SME.
inline ReducedOutcome simulate_reduced(double gamma, double x0, const IntegratorConfig& cfg,
                                       double epsilon, std::uint64_t trajectory_id) {
  cfg.validate();
  check_epsilon(epsilon);
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw DomainError("simulate_reduced: x0 outside [0,1]");
  ReducedOutcome out;
  out.record.trajectory_id = trajectory_id;
  if (const ExitSide side = exit_side(x0, epsilon); side != ExitSide::None) {
    out.record.side = side;
    return out;
  }
  NormalStream rng(cfg.seed, trajectory_id);
  const double sqrt_dt = std::sqrt(cfg.dt);
  const std::size_t n_steps = cfg.max_steps();
  double x = x0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const ReducedStep r = step_reduced(x, gamma, sqrt_dt * rng());
    x = r.x;
    out.clamp_events += r.clamped ? 1 : 0;
    out.steps = step;
    if (const ExitSide side = exit_side(x, epsilon); side != ExitSide::None) {
      out.record.side = side;
      out.record.hit_time = static_cast<double>(step) * cfg.dt;
      return out;
    }
  }
  out.record.censored = true;
  out.record.hit_time = cfg.t_max;
  return out;
}

/// Free evolution of the reduced SDE (no absorbing thresholds) for `n_steps`.
inline ReducedOutcome run_reduced_free(double gamma, double x0, double dt, std::size_t n_steps,
                                       std::uint64_t seed, std::uint64_t trajectory_id,
                                       std::size_t* exact_boundary_hits = nullptr) {
  ReducedOutcome out;
  out.record.trajectory_id = trajectory_id;
  NormalStream rng(seed, trajectory_id);
  const double sqrt_dt = std::sqrt(dt);
  double x = x0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    const double raw = x + 2.0 * gamma * x * (1.0 - x) * sqrt_dt * rng();
    if (exact_boundary_hits && (raw == 0.0 || raw == 1.0)) ++*exact_boundary_hits;
    const ReducedStep r = step_reduced(x, gamma, (raw - x) / (2.0 * gamma * x * (1.0 - x)));
    x = r.x;
    out.clamp_events += r.clamped ? 1 : 0;
    out.steps = step;
  }
  return out;
}

/// Re tr(O rho(t)) at each checkpoint along one trajectory, without absorption.
/// Checkpoints must be increasing and lie on the time grid (rounded to it).
inline std::vector<std::vector<double>> run_fixed_time(const SmeIntegrator& integrator,
                                                       const ComplexMatrix& rho0,
                                                       const IntegratorConfig& cfg,
                                                       std::span<const double> checkpoints,
                                                       std::span<const ComplexMatrix> observables,
                                                       std::uint64_t trajectory_id) {
  cfg.validate();
  ComplexMatrix rho = rho0;
  NormalStream rng(cfg.seed, trajectory_id);
  SmeWorkspace ws;
  std::vector<double> dws(integrator.channels());
  const double sqrt_dt = std::sqrt(cfg.dt);
  std::vector<std::vector<double>> values;
  values.reserve(checkpoints.size());
  std::size_t step = 0;
  for (double tc : checkpoints) {
    const auto target = static_cast<std::size_t>(std::llround(tc / cfg.dt));
    while (step < target) {
      for (double& w : dws) w = sqrt_dt * rng();
      ++step;
      integrator.step(rho, cfg.dt, dws, ws, step % cfg.renormalize_every == 0);
    }
    std::vector<double> row;
    row.reserve(observables.size());
    for (const auto& o : observables) row.push_back(trace_product(rho, o));
    values.push_back(std::move(row));
  }
  return values;
}

/// Deterministic Lindblad evolution (the dW-free part of the SME), classical RK4.
inline std::vector<std::vector<double>> integrate_lindblad(const QuantumModel& model,
                                                           const ComplexMatrix& rho0, double dt,
                                                           std::span<const double> checkpoints,
                                                           std::span<const ComplexMatrix> observables) {
  model.validate();
  auto generator = [&](const ComplexMatrix& r) {
    ComplexMatrix out = -kI * (model.H * r - r * model.H);
    for (const auto& l : model.Ls) {
      const ComplexMatrix ldl = l.adjoint() * l;
      out += l * r * l.adjoint() - 0.5 * (ldl * r + r * ldl);
    }
    return out;
  };
  ComplexMatrix rho = rho0;
  std::vector<std::vector<double>> values;
  double t = 0.0;
  for (double tc : checkpoints) {
    while (t < tc - 1e-12) {
      const double h = std::min(dt, tc - t);
      const ComplexMatrix k1 = generator(rho);
      const ComplexMatrix k2 = generator(rho + 0.5 * h * k1);
      const ComplexMatrix k3 = generator(rho + 0.5 * h * k2);
      const ComplexMatrix k4 = generator(rho + h * k3);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
    }
    std::vector<double> row;
    for (const auto& o : observables) row.push_back(trace_product(rho, o));
    values.push_back(std::move(row));
  }
  return values;
}

}  // namespace qfpt
