// qfpt: first-passage statistics of monitored quantum systems.
//
//   qfpt dfs      --model ring5
//   qfpt simulate --config configs/qnd2_fig1.json --ntraj 30000 --out runs/fig1
//   qfpt analytic --gamma 2 --epsilon 0.003 --x0 0.1 --out runs/analytic
//   qfpt compare  --model qnd2 --ntraj 10000 --gamma-scale 1.1

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qfpt/commands.hpp"

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<double> x0, epsilon, dt, tmax, gamma, gamma_scale, tau_max, ks_threshold;
  std::optional<std::size_t> ntraj, trace, n_tau, n_x0;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> zeta;
  std::optional<std::string> out, engine;
  std::optional<unsigned> threads;
  bool self_test = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration (flags override it)");
  cmd->add_option("--model", f.model, "qnd2 | ring5 | custom")->check(CLI::IsMember({"qnd2", "ring5", "custom"}));
  cmd->add_option("--x0", f.x0, "initial overlap with Q1");
  cmd->add_option("--epsilon", f.epsilon, "fidelity defect of the exit thresholds");
  cmd->add_option("--zeta", f.zeta, "detector efficiency, one value or one per channel");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads (default: QFPT_THREADS or all cores)");
}

void add_sim(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dt", f.dt, "time step");
  cmd->add_option("--tmax", f.tmax, "censoring time (default 50x the analytic mean)");
  cmd->add_option("--ntraj", f.ntraj, "number of trajectories");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--engine", f.engine, "sme | reduced")->check(CLI::IsMember({"sme", "reduced"}));
}

void add_analytic(CLI::App* cmd, Flags& f) {
  cmd->add_option("--gamma", f.gamma, "noise strength (default: derived from the model)");
  cmd->add_option("--tau-max", f.tau_max, "end of the tau grid");
  cmd->add_option("--n-tau", f.n_tau, "tau grid points");
  cmd->add_option("--n-x0", f.n_x0, "x0 grid points");
}

qfpt::RunConfig build_config(const Flags& f) {
  qfpt::RunConfig cfg;
  if (f.config) qfpt::apply_json(qfpt::io::read_json(*f.config), cfg);
  if (f.model) {
    const auto kind = qfpt::model_kind_from_string(*f.model);
    if (kind == qfpt::ModelKind::Custom && !cfg.model.custom) {
      throw qfpt::ModelError("--model custom needs the matrices in a --config file");
    }
    if (kind != qfpt::ModelKind::Custom) cfg.model.custom.reset();
    cfg.model.kind = kind;
  }
  if (f.x0) cfg.model.x0 = *f.x0;
  if (f.zeta) cfg.model.zetas = *f.zeta;
  if (f.epsilon) cfg.epsilon = *f.epsilon;
  if (f.dt) cfg.dt = *f.dt;
  if (f.tmax) cfg.t_max = *f.tmax;
  if (f.ntraj) cfg.n_traj = *f.ntraj;
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.threads) cfg.threads = *f.threads;
  if (f.engine) cfg.engine = *f.engine == "sme" ? qfpt::Engine::Sme : qfpt::Engine::Reduced;
  if (f.trace) cfg.trace_count = *f.trace;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.gamma_scale) cfg.gamma_scale = *f.gamma_scale;
  if (f.tau_max) cfg.tau_max = *f.tau_max;
  if (f.n_tau) cfg.n_tau = *f.n_tau;
  if (f.n_x0) cfg.n_x0 = *f.n_x0;
  if (f.ks_threshold) cfg.ks_threshold = *f.ks_threshold;
  if (f.self_test) cfg.self_test = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-passage times of continuously monitored quantum systems into decoherence-free subspaces"};
  app.require_subcommand(1);
  Flags f;

  auto* dfs = app.add_subcommand("dfs", "detect decoherence-free subspaces and print gamma");
  add_common(dfs, f);

  auto* sim = app.add_subcommand("simulate", "run a trajectory ensemble; writes hitting.csv and summary.json");
  add_common(sim, f);
  add_sim(sim, f);
  sim->add_option("--trace", f.trace, "dump full traces of the first N trajectories");

  auto* ana = app.add_subcommand("analytic", "evaluate the spectral solution; writes fpt_grid.csv, moments_grid.csv");
  add_common(ana, f);
  add_analytic(ana, f);
  ana->add_option("--gamma-scale", f.gamma_scale, "multiply gamma");

  auto* cmp = app.add_subcommand("compare", "ensemble vs analytic with pass/fail gates; writes compare.json");
  add_common(cmp, f);
  add_sim(cmp, f);
  cmp->add_option("--gamma-scale", f.gamma_scale, "multiply gamma of the analytic prediction (negative control)");
  cmp->add_option("--ks-threshold", f.ks_threshold, "KS gate");
  cmp->add_flag("--self-test", f.self_test, "sample exit times from the analytic law instead of simulating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qfpt::kExitModel;
  }

  try {
    const qfpt::RunConfig cfg = build_config(f);
    if (dfs->parsed()) return qfpt::cmd_dfs(cfg, std::cout);
    if (sim->parsed()) return qfpt::cmd_simulate(cfg, std::cout);
    if (ana->parsed()) return qfpt::cmd_analytic(cfg, std::cout);
    if (cmp->parsed()) return qfpt::cmd_compare(cfg, std::cout);
  } catch (const qfpt::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return qfpt::kExitNumerical;
  } catch (const qfpt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qfpt::kExitModel;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qfpt::kExitModel;
  }
  return qfpt::kExitModel;
}
