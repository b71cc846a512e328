#pragma once

// Parallel ensemble drivers. Work items are trajectory indices handed out by
// an atomic counter; results land in a vector slot per index, so the output
// never depends on the number of workers.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "qfpt/sme.hpp"

namespace qfpt {

/// Explicit request, then QFPT_THREADS, then the hardware count.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QFPT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers.
/// The first exception thrown by any body is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

struct EnsembleResult {
  std::vector<HittingRecord> records;
  std::size_t diverged = 0;
  std::size_t immediate = 0;
  std::vector<std::string> failures;  // first few divergence messages
};

inline constexpr double kMaxDivergedFraction = 1e-3;

inline void check_divergence(const EnsembleResult& result, std::size_t n_traj) {
  if (static_cast<double>(result.diverged) > kMaxDivergedFraction * static_cast<double>(n_traj)) {
    std::string msg = "ensemble: " + std::to_string(result.diverged) + " of " + std::to_string(n_traj) +
                      " trajectories diverged";
    if (!result.failures.empty()) msg += " (first: " + result.failures.front() + ")";
    throw NumericalError(msg);
  }
}

/// Full-SME ensemble. Trajectory i draws from stream(cfg.seed, i).
/// Diverged trajectories are dropped from `records` and counted; more than
/// 0.1% of them fails the run.
inline EnsembleResult simulate_ensemble(const QuantumModel& model, const SubspacePartition& partition,
                                        const StateVector& psi0, const IntegratorConfig& cfg,
                                        double epsilon, std::size_t n_traj, unsigned threads = 0) {
  if (n_traj == 0) throw DomainError("simulate_ensemble: n_traj must be >= 1");
  cfg.validate();
  check_epsilon(epsilon);
  const SmeIntegrator integrator(model);
  std::vector<std::optional<TrajectoryOutcome>> slots(n_traj);
  std::vector<std::string> errors(n_traj);
  parallel_for(n_traj, resolve_threads(threads), [&](std::size_t i) {
    try {
      slots[i] = simulate_trajectory(integrator, partition, psi0, cfg, epsilon, i);
    } catch (const NumericalError& e) {
      errors[i] = e.what();
    }
  });
  EnsembleResult result;
  result.records.reserve(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    if (slots[i]) {
      result.records.push_back(slots[i]->record);
      result.immediate += slots[i]->immediate ? 1 : 0;
    } else {
      ++result.diverged;
      if (result.failures.size() < 5) result.failures.push_back(errors[i]);
    }
  }
  check_divergence(result, n_traj);
  return result;
}

struct ReducedEnsembleResult {
  std::vector<HittingRecord> records;
  std::vector<double> x0;  // starting overlap of each trajectory
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
};

/// Reduced-SDE ensemble with x0 drawn per trajectory by `sampler(stream)`.
/// The sampler consumes draws from the trajectory's own stream, taken from a
/// separate stream index space (upper bit set) so the Wiener increments are
/// the same ones a fixed-x0 run would see.
inline ReducedEnsembleResult simulate_reduced_ensemble(
    double gamma, const std::function<double(NormalStream&)>& sampler, const IntegratorConfig& cfg,
    double epsilon, std::size_t n_traj, unsigned threads = 0) {
  if (n_traj == 0) throw DomainError("simulate_reduced_ensemble: n_traj must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("simulate_reduced_ensemble: bad gamma");
  cfg.validate();
  check_epsilon(epsilon);
  std::vector<ReducedOutcome> outcomes(n_traj);
  std::vector<double> x0s(n_traj);
  parallel_for(n_traj, resolve_threads(threads), [&](std::size_t i) {
    NormalStream aux(cfg.seed, (std::uint64_t{1} << 63) | i);
    x0s[i] = sampler(aux);
    outcomes[i] = simulate_reduced(gamma, x0s[i], cfg, epsilon, i);
  });
  ReducedEnsembleResult result;
  result.records.reserve(n_traj);
  for (const auto& o : outcomes) {
    result.records.push_back(o.record);
    result.steps += o.steps;
    result.clamp_events += o.clamp_events;
  }
  result.x0 = std::move(x0s);
  return result;
}

inline ReducedEnsembleResult simulate_reduced_ensemble(double gamma, double x0, const IntegratorConfig& cfg,
                                                       double epsilon, std::size_t n_traj,
                                                       unsigned threads = 0) {
  return simulate_reduced_ensemble(
      gamma, [x0](NormalStream&) { return x0; }, cfg, epsilon, n_traj, threads);
}

/// Per-checkpoint ensemble mean and standard error of Re tr(O_j rho(t)).
struct ObservableAverages {
  std::vector<double> times;
  std::vector<std::vector<double>> mean;  // mean[c][j]
  std::vector<std::vector<double>> se;
};

inline ObservableAverages ensemble_observables(const QuantumModel& model, const ComplexMatrix& rho0,
                                               const IntegratorConfig& cfg,
                                               std::span<const double> checkpoints,
                                               std::span<const ComplexMatrix> observables,
                                               std::size_t n_traj, unsigned threads = 0) {
  if (n_traj < 2) throw DomainError("ensemble_observables: need at least 2 trajectories");
  const SmeIntegrator integrator(model);
  std::vector<std::vector<std::vector<double>>> values(n_traj);
  parallel_for(n_traj, resolve_threads(threads), [&](std::size_t i) {
    values[i] = run_fixed_time(integrator, rho0, cfg, checkpoints, observables, i);
  });
  ObservableAverages out;
  out.times.assign(checkpoints.begin(), checkpoints.end());
  const std::size_t nc = checkpoints.size();
  const std::size_t no = observables.size();
  out.mean.assign(nc, std::vector<double>(no, 0.0));
  out.se.assign(nc, std::vector<double>(no, 0.0));
  const auto n = static_cast<double>(n_traj);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t j = 0; j < no; ++j) {
      double sum = 0.0;
      for (const auto& v : values) sum += v[c][j];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& v : values) ss += (v[c][j] - mean) * (v[c][j] - mean);
      out.mean[c][j] = mean;
      out.se[c][j] = std::sqrt(ss / (n - 1.0) / n);
    }
  }
  return out;
}

}  // namespace qfpt
