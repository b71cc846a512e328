#pragma once

// The dfs / simulate / analytic / compare commands behind the qfpt CLI.
// Each takes a RunConfig, writes its files below cfg.out and returns an
// exit code: 0 ok, 2 model/config error, 3 numerical failure, 4 acceptance
// failure. Model and numerical errors are thrown and mapped by run_command.

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfpt/analytic.hpp"
#include "qfpt/ensemble.hpp"
#include "qfpt/fpt_stats.hpp"
#include "qfpt/io.hpp"
#include "qfpt/models.hpp"

namespace qfpt {

enum ExitCode : int { kExitOk = 0, kExitModel = 2, kExitNumerical = 3, kExitAcceptance = 4 };

enum class Engine { Sme, Reduced };

struct RunConfig {
  ModelSpec model;
  double epsilon = 0.003;
  double dt = 1e-3;
  double t_max = 0.0;  // 0: 50 times the analytic mean exit time
  std::size_t n_traj = 1000;
  std::uint64_t seed = 20240601;
  unsigned threads = 0;
  std::string out = "out";
  Engine engine = Engine::Sme;
  std::size_t trace_count = 0;  // full traces dumped for the first N trajectories
  std::size_t trace_stride = 10;

  // analytic
  std::optional<double> gamma;  // overrides the value derived from the model
  double tau_max = 5.0;
  std::size_t n_tau = 500;
  std::size_t n_x0 = 99;
  int n_max = 200;
  double tail_tol = 1e-10;

  // compare
  double gamma_scale = 1.0;  // multiplies gamma of the analytic prediction
  bool self_test = false;    // sample from the analytic law instead of simulating
  double ks_threshold = 0.02;
  double mean_sigmas = 3.0;
  double variance_rel = 0.05;

  void validate() const {
    model.validate();
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ModelError("config: epsilon must lie in (0, 1/2)");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ModelError("config: dt must be positive");
    if (t_max < 0.0 || (t_max > 0.0 && t_max < dt)) throw ModelError("config: need dt <= tmax");
    if (n_traj < 1) throw ModelError("config: ntraj must be >= 1");
    if (gamma && !(*gamma > 0.0)) throw ModelError("config: gamma must be positive");
    if (!(gamma_scale > 0.0)) throw ModelError("config: gamma_scale must be positive");
    if (!(tau_max > 0.0) || n_tau < 1 || n_x0 < 2) throw ModelError("config: bad analytic grid");
    if (n_max < 1 || !(tail_tol > 0.0)) throw ModelError("config: bad truncation settings");
    if (trace_stride < 1) throw ModelError("config: trace_stride must be >= 1");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["model"] = to_json(c.model);
  j["epsilon"] = c.epsilon;
  j["dt"] = c.dt;
  j["tmax"] = c.t_max;
  j["ntraj"] = c.n_traj;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["engine"] = c.engine == Engine::Sme ? "sme" : "reduced";
  j["trace_count"] = c.trace_count;
  j["trace_stride"] = c.trace_stride;
  if (c.gamma) j["gamma"] = *c.gamma;
  j["tau_max"] = c.tau_max;
  j["n_tau"] = c.n_tau;
  j["n_x0"] = c.n_x0;
  j["n_max"] = c.n_max;
  j["tail_tol"] = c.tail_tol;
  j["gamma_scale"] = c.gamma_scale;
  j["self_test"] = c.self_test;
  j["ks_threshold"] = c.ks_threshold;
  j["mean_sigmas"] = c.mean_sigmas;
  j["variance_rel"] = c.variance_rel;
  return j;
}

/// Keys absent from `j` keep their current value in `c`.
inline void apply_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ModelError("config must be a JSON object");
  try {
    if (j.contains("model")) c.model = model_spec_from_json(j["model"]);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.dt = j.value("dt", c.dt);
    c.t_max = j.value("tmax", c.t_max);
    c.n_traj = j.value("ntraj", c.n_traj);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    if (j.contains("engine")) {
      const std::string e = j["engine"].get<std::string>();
      if (e != "sme" && e != "reduced") throw ModelError("config: engine must be sme or reduced");
      c.engine = e == "sme" ? Engine::Sme : Engine::Reduced;
    }
    c.trace_count = j.value("trace_count", c.trace_count);
    c.trace_stride = j.value("trace_stride", c.trace_stride);
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    c.tau_max = j.value("tau_max", c.tau_max);
    c.n_tau = j.value("n_tau", c.n_tau);
    c.n_x0 = j.value("n_x0", c.n_x0);
    c.n_max = j.value("n_max", c.n_max);
    c.tail_tol = j.value("tail_tol", c.tail_tol);
    c.gamma_scale = j.value("gamma_scale", c.gamma_scale);
    c.self_test = j.value("self_test", c.self_test);
    c.ks_threshold = j.value("ks_threshold", c.ks_threshold);
    c.mean_sigmas = j.value("mean_sigmas", c.mean_sigmas);
    c.variance_rel = j.value("variance_rel", c.variance_rel);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("config: ") + e.what());
  }
}

namespace detail {

inline nlohmann::json complex_json(Complex z) { return {z.real(), z.imag()}; }

/// Overlap of the configured initial state with Q1, the x0 of the analytic law.
inline double initial_overlap(const PreparedModel& pm) { return overlap(pm.psi0.outer(), pm.partition).x; }

inline double analytic_gamma(const RunConfig& cfg, const PreparedModel* pm) {
  if (cfg.gamma) return *cfg.gamma;
  if (!pm) throw ModelError("no gamma: give --gamma or a model");
  pm->partition.require_closed();
  return pm->partition.gamma;
}

inline IntegratorConfig integrator_config(const RunConfig& cfg, double gamma, double x0) {
  IntegratorConfig ic;
  ic.dt = cfg.dt;
  ic.seed = cfg.seed;
  ic.trace_stride = cfg.trace_stride;
  if (cfg.t_max > 0.0) {
    ic.t_max = cfg.t_max;
  } else {
    const double x = std::clamp(x0, cfg.epsilon, 1.0 - cfg.epsilon);
    ic.t_max = std::max(50.0 * mean_fpt({gamma, cfg.epsilon, x}), 100.0 * cfg.dt);
  }
  return ic;
}

inline nlohmann::json summary_json(const EnsembleSummary& s) {
  return {{"n", s.n},
          {"n_upper", s.n_upper},
          {"n_lower", s.n_lower},
          {"n_censored", s.n_censored},
          {"mean", s.mean},
          {"mean_se", s.mean_se},
          {"variance", s.variance},
          {"variance_se", s.variance_se},
          {"splitting_upper", s.splitting_upper},
          {"splitting_se", s.splitting_se},
          {"censored_fraction", s.censored_fraction}};
}

struct EnsembleRun {
  std::vector<HittingRecord> records;
  double x0 = 0.0;
  double gamma = 0.0;  // gamma of the simulated dynamics
  IntegratorConfig integrator;
  nlohmann::json diagnostics;
};

/// Simulates (or, in self-test mode, samples) the configured ensemble.
inline EnsembleRun run_ensemble(const RunConfig& cfg, const PreparedModel& pm) {
  EnsembleRun run;
  run.x0 = initial_overlap(pm);
  pm.partition.require_closed();
  run.gamma = pm.partition.gamma;
  run.integrator = integrator_config(cfg, run.gamma, run.x0);
  if (cfg.self_test) {
    const SpectralSolution sol({run.gamma, cfg.epsilon, run.x0}, cfg.n_max, cfg.tail_tol);
    run.records.resize(cfg.n_traj);
    parallel_for(cfg.n_traj, resolve_threads(cfg.threads), [&](std::size_t i) {
      NormalStream rng(cfg.seed, i);
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      run.records[i] = sample_exit(sol, u1, u2, i);
    });
    run.diagnostics = {{"engine", "analytic-sampler"}};
  } else if (cfg.engine == Engine::Reduced) {
    auto r = simulate_reduced_ensemble(run.gamma, run.x0, run.integrator, cfg.epsilon, cfg.n_traj, cfg.threads);
    run.records = std::move(r.records);
    run.diagnostics = {{"engine", "reduced"}, {"steps", r.steps}, {"clamp_events", r.clamp_events}};
  } else {
    auto r = simulate_ensemble(pm.model, pm.partition, pm.psi0, run.integrator, cfg.epsilon, cfg.n_traj,
                               cfg.threads);
    run.records = std::move(r.records);
    run.diagnostics = {{"engine", "sme"}, {"diverged", r.diverged}, {"immediate_hits", r.immediate}};
  }
  run.diagnostics["t_max"] = run.integrator.t_max;
  run.diagnostics["x0"] = run.x0;
  run.diagnostics["gamma"] = run.gamma;
  return run;
}

inline void write_traces(const RunConfig& cfg, const PreparedModel& pm, const IntegratorConfig& ic) {
  const std::filesystem::path dir = std::filesystem::path(cfg.out) / "traces";
  const SmeIntegrator integrator(pm.model);
  for (std::size_t i = 0; i < std::min(cfg.trace_count, cfg.n_traj); ++i) {
    const auto outcome =
        simulate_trajectory(integrator, pm.partition, pm.psi0, ic, cfg.epsilon, i, true, pm.observables);
    io::write_trace_csv(dir / ("trace_" + std::to_string(i) + ".csv"), *outcome.trace);
  }
}

struct KsReport {
  std::optional<KsResult> upper, lower, both;
};

inline nlohmann::json ks_json(const std::optional<KsResult>& k) {
  if (!k) return nullptr;
  return {{"statistic", k->statistic},
          {"n", k->n},
          {"below_t_min", k->below_t_min},
          {"threshold_95", k->threshold_95()},
          {"threshold_99", k->threshold_99()},
          {"null_limit_99", k->null_limit_99()}};
}

inline KsReport ks_all(const std::vector<HittingRecord>& records, const SpectralSolution& sol) {
  KsReport out;
  auto one = [&](Side side) -> std::optional<KsResult> {
    if (exit_times(records, side).empty()) return std::nullopt;
    return ks_one_sample(records, side, sol);
  };
  out.upper = one(Side::Upper);
  out.lower = one(Side::Lower);
  out.both = one(Side::Both);
  return out;
}

}  // namespace detail

/// Prints the detected subspaces, their eigenvalue table and gamma.
inline int cmd_dfs(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  const PreparedModel pm = prepare(cfg.model);
  nlohmann::json report;
  report["model"] = to_string(cfg.model.kind);
  report["dim"] = pm.model.dim();
  report["subspaces"] = nlohmann::json::array();
  for (const auto& b : pm.blocks) {
    nlohmann::json jb;
    jb["dim"] = b.dim();
    jb["c"] = nlohmann::json::array();
    for (const auto& c : b.c) jb["c"].push_back(detail::complex_json(c));
    jb["basis"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.basis.cols(); ++i) jb["basis"].push_back(vector_to_json(b.basis.col(i)));
    report["subspaces"].push_back(jb);
  }
  report["closed"] = pm.partition.closed;
  report["gamma"] = pm.partition.closed ? nlohmann::json(pm.partition.gamma) : nlohmann::json(nullptr);
  report["zetas"] = pm.model.zetas;
  report["initial_overlap"] = detail::initial_overlap(pm);
  os << report.dump(2) << '\n';
  io::write_json(std::filesystem::path(cfg.out) / "dfs.json", report);
  return kExitOk;
}

/// Runs the ensemble, writes hitting.csv and summary.json.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  const std::filesystem::path out(cfg.out);
  const PreparedModel pm = prepare(cfg.model);
  nlohmann::json summary;
  summary["config_echo"] = to_json(cfg);
  detail::EnsembleRun run;
  try {
    run = detail::run_ensemble(cfg, pm);
  } catch (const NumericalError& e) {
    summary["status"] = "failed";
    summary["error"] = e.what();
    io::write_json(out / "summary.json", summary);
    throw;
  }
  io::write_hitting_csv(out / "hitting.csv", run.records);
  if (cfg.trace_count > 0) detail::write_traces(cfg, pm, run.integrator);
  summary["diagnostics"] = run.diagnostics;
  if (run.records.size() < 2) {
    // too few records for statistics; the hitting file is the whole result
    summary["status"] = "ok";
    io::write_json(out / "summary.json", summary);
    os << "simulate: " << run.records.size() << " trajectory, wrote " << (out / "hitting.csv").string() << '\n';
    return kExitOk;
  }
  try {
    const EnsembleSummary s = summarize(run.records);
    summary.update(detail::summary_json(s));
    const SpectralSolution sol({run.gamma, cfg.epsilon, run.x0}, cfg.n_max, cfg.tail_tol);
    const auto ks = detail::ks_all(run.records, sol);
    summary["ks_upper"] = ks.upper ? nlohmann::json(ks.upper->statistic) : nlohmann::json(nullptr);
    summary["ks_lower"] = ks.lower ? nlohmann::json(ks.lower->statistic) : nlohmann::json(nullptr);
    summary["ks_both"] = ks.both ? nlohmann::json(ks.both->statistic) : nlohmann::json(nullptr);
    summary["status"] = "ok";
  } catch (const NumericalError& e) {
    summary["status"] = "failed";
    summary["error"] = e.what();
    io::write_json(out / "summary.json", summary);
    throw;
  }
  io::write_json(out / "summary.json", summary);
  os << "simulate: " << run.records.size() << " trajectories, mean exit time " << summary["mean"].get<double>()
     << " +- " << summary["mean_se"].get<double>() << ", wrote " << (out / "hitting.csv").string() << '\n';
  return kExitOk;
}

/// Writes fpt_grid.csv (tau,f1,f2,f), moments_grid.csv (x0,mean,variance) and analytic.json.
inline int cmd_analytic(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  const std::filesystem::path out(cfg.out);
  std::optional<PreparedModel> pm;
  double x0 = cfg.model.x0;
  if (!cfg.gamma) {
    pm = prepare(cfg.model);
    x0 = detail::initial_overlap(*pm);
  }
  const double gamma = detail::analytic_gamma(cfg, pm ? &*pm : nullptr) * cfg.gamma_scale;
  const SpectralSolution sol({gamma, cfg.epsilon, x0}, cfg.n_max, cfg.tail_tol);

  std::vector<std::vector<double>> fpt_rows;
  double min_raw = 0.0;
  const double t_min = sol.t_min(SpectralSolution::Series::Flux);
  for (std::size_t k = 1; k <= cfg.n_tau; ++k) {
    const double tau = cfg.tau_max * static_cast<double>(k) / static_cast<double>(cfg.n_tau);
    if (tau < t_min) continue;
    const double f1 = sol.fpt_density(tau, Side::Upper);
    const double f2 = sol.fpt_density(tau, Side::Lower);
    const double f = sol.fpt_density(tau, Side::Both);
    min_raw = std::min({min_raw, f1, f2, f});
    fpt_rows.push_back({tau, std::max(f1, 0.0), std::max(f2, 0.0), std::max(f, 0.0)});
  }
  io::write_csv(out / "fpt_grid.csv", {"tau", "f1", "f2", "f"}, fpt_rows);

  std::vector<double> xs;
  for (std::size_t k = 0; k < cfg.n_x0; ++k) {
    xs.push_back(cfg.epsilon + (1.0 - 2.0 * cfg.epsilon) * static_cast<double>(k) / static_cast<double>(cfg.n_x0 - 1));
  }
  for (double x : {0.1, 0.3, 0.5, 0.7, 0.9, x0}) {
    if (x >= cfg.epsilon && x <= 1.0 - cfg.epsilon) xs.push_back(x);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  xs.front() = cfg.epsilon;
  xs.back() = 1.0 - cfg.epsilon;
  std::vector<std::vector<double>> moment_rows;
  for (double x : xs) {
    moment_rows.push_back({x, mean_fpt({gamma, cfg.epsilon, x}), variance_fpt({gamma, cfg.epsilon, x})});
  }
  io::write_csv(out / "moments_grid.csv", {"x0", "mean", "variance"}, moment_rows);

  const FptMoments m = moments({gamma, cfg.epsilon, x0});
  nlohmann::json side;
  side["config_echo"] = to_json(cfg);
  side["gamma"] = gamma;
  side["epsilon"] = cfg.epsilon;
  side["x0"] = x0;
  side["lambda_1"] = lambda_n(1, cfg.epsilon);
  side["mean"] = m.mean;
  side["variance"] = m.variance;
  side["splitting_upper"] = m.splitting_upper;
  side["t_min"] = t_min;
  side["min_raw_density"] = min_raw;
  io::write_json(out / "analytic.json", side);
  os << "analytic: gamma " << gamma << ", mean " << m.mean << ", variance " << m.variance << ", wrote "
     << (out / "fpt_grid.csv").string() << '\n';
  return kExitOk;
}

struct CompareOutcome {
  nlohmann::json report;
  bool pass = false;
};

/// Runs the ensemble and tests it against the analytic law (with gamma
/// scaled by cfg.gamma_scale). A KS gate passes when the statistic is below
/// max(ks_threshold, its 99% null point), so small ensembles are not failed
/// by sampling noise alone; moment gates use the mean within mean_sigmas
/// standard errors and the variance within variance_rel.
inline CompareOutcome compare(const RunConfig& cfg) {
  cfg.validate();
  const PreparedModel pm = prepare(cfg.model);
  const detail::EnsembleRun run = detail::run_ensemble(cfg, pm);
  const double gamma = run.gamma * cfg.gamma_scale;
  const SpectralSolution sol({gamma, cfg.epsilon, run.x0}, cfg.n_max, cfg.tail_tol);
  const EnsembleSummary s = summarize(run.records);
  const FptMoments m = moments({gamma, cfg.epsilon, run.x0});
  const auto ks = detail::ks_all(run.records, sol);

  CompareOutcome out;
  nlohmann::json& r = out.report;
  r["config_echo"] = to_json(cfg);
  r["diagnostics"] = run.diagnostics;
  r["analytic"] = {{"gamma", gamma}, {"mean", m.mean}, {"variance", m.variance}, {"splitting_upper", m.splitting_upper}};
  r["empirical"] = detail::summary_json(s);
  bool pass = true;
  nlohmann::json gates = nlohmann::json::object();
  auto ks_gate = [&](const char* name, const std::optional<KsResult>& k) {
    if (!k) return;
    const double limit = std::max(cfg.ks_threshold, k->null_limit_99());
    const bool ok = k->statistic < limit;
    gates[name] = {{"statistic", k->statistic}, {"limit", limit}, {"n", k->n}, {"pass", ok}};
    pass = pass && ok;
  };
  ks_gate("ks_upper", ks.upper);
  ks_gate("ks_lower", ks.lower);
  ks_gate("ks_both", ks.both);
  const double mean_z = s.mean_se > 0.0 ? (s.mean - m.mean) / s.mean_se : 0.0;
  const bool mean_ok = std::abs(mean_z) <= cfg.mean_sigmas;
  gates["mean"] = {{"delta_se", mean_z}, {"limit", cfg.mean_sigmas}, {"pass", mean_ok}};
  const double var_rel = m.variance > 0.0 ? s.variance / m.variance - 1.0 : 0.0;
  const bool var_ok = std::abs(var_rel) <= cfg.variance_rel;
  gates["variance"] = {{"relative_error", var_rel}, {"limit", cfg.variance_rel}, {"pass", var_ok}};
  const double split_z = s.splitting_se > 0.0 ? (s.splitting_upper - m.splitting_upper) / s.splitting_se : 0.0;
  const bool split_ok = std::abs(split_z) <= cfg.mean_sigmas;
  gates["splitting"] = {{"delta_se", split_z}, {"limit", cfg.mean_sigmas}, {"pass", split_ok}};
  pass = pass && mean_ok && var_ok && split_ok;
  r["gates"] = gates;
  r["ks_upper"] = detail::ks_json(ks.upper);
  r["ks_lower"] = detail::ks_json(ks.lower);
  r["ks_both"] = detail::ks_json(ks.both);
  r["pass"] = pass;
  out.pass = pass;
  return out;
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& os) {
  const CompareOutcome c = compare(cfg);
  io::write_json(std::filesystem::path(cfg.out) / "compare.json", c.report);
  os << c.report["gates"].dump(2) << '\n' << (c.pass ? "compare: PASS" : "compare: FAIL") << '\n';
  return c.pass ? kExitOk : kExitAcceptance;
}

}  // namespace qfpt
