#pragma once

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "phasectl/adjoint.hpp"
#include "phasectl/asymptotics.hpp"
#include "phasectl/config.hpp"
#include "phasectl/control.hpp"
#include "phasectl/csv.hpp"
#include "phasectl/errors.hpp"
#include "phasectl/state.hpp"

namespace phasectl {

namespace cli_detail {

// The log is the one output with wall-clock timestamps; every other artifact
// is byte-identical across reruns of the same configuration.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path)
      : out_(path, std::ios::trunc) {}

  void line(const std::string& msg) {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    out_ << buf << " " << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::json& j) {
  atomic_write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json grid_json(const Grid& g) {
  return {{"dim", g.dim}, {"n", g.n}, {"extent", g.extent}};
}

inline std::string coord_cells(const Grid& g, int i) {
  const auto c = g.coord(i);
  std::string s = format_double(c[0]);
  if (g.dim == 2) {
    s += ',';
    s += format_double(c[1]);
  }
  return s;
}

inline std::vector<int> saved_levels(int levels, int stride) {
  std::vector<int> idx;
  for (int n = 0; n < levels; n += stride) idx.push_back(n);
  if (idx.back() != levels - 1) idx.push_back(levels - 1);
  return idx;
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const ModelParams& m,
                                 const StateTrajectory& traj, int stride) {
  const Grid& g = m.grid;
  std::string out = g.dim == 2 ? "t,x,y,mu,phi,sigma\n" : "t,x,mu,phi,sigma\n";
  out.reserve(out.size() +
              static_cast<size_t>(traj.levels()) * g.points() * 48 / stride);
  for (int n : saved_levels(traj.levels(), stride)) {
    const std::string t = format_double(traj.times[n]);
    for (int i = 0; i < g.points(); ++i) {
      out += t;
      out += ',';
      out += coord_cells(g, i);
      out += ',';
      out += format_double(traj.mu[n].v[i]);
      out += ',';
      out += format_double(traj.phi[n].v[i]);
      out += ',';
      out += format_double(traj.sigma[n].v[i]);
      out += '\n';
    }
  }
  atomic_write_text(path, out);
}

inline void write_control_csv(const std::filesystem::path& path,
                              const ModelParams& m, const ControlSteps& u) {
  const Grid& g = m.grid;
  std::string out = g.dim == 2 ? "t,x,y,u\n" : "t,x,u\n";
  for (int k = 0; k < static_cast<int>(u.size()); ++k) {
    const std::string t = format_double((k + 1) * m.tau());
    for (int i = 0; i < g.points(); ++i) {
      out += t;
      out += ',';
      out += coord_cells(g, i);
      out += ',';
      out += format_double(u[k].v[i]);
      out += '\n';
    }
  }
  atomic_write_text(path, out);
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const ModelParams& m,
                                  const StateTrajectory& traj) {
  const std::vector<double> energy = energy_series(m, traj);
  std::string out = "t,energy,mass\n";
  for (int n = 0; n < traj.levels(); ++n) {
    Field combined = traj.phi[n];
    axpy(combined, m.alpha, traj.mu[n]);
    combined += traj.sigma[n];
    out += format_double(traj.times[n]);
    out += ',';
    out += format_double(energy[n]);
    out += ',';
    out += format_double(integrate(combined));
    out += '\n';
  }
  atomic_write_text(path, out);
}

inline void write_history_csv(const std::filesystem::path& path,
                              const OptimizeReport& rep) {
  std::string out = "iteration,cost,stationarity,step,newton_iterations\n";
  for (const OptimizeIterate& it : rep.history) {
    out += std::to_string(it.iteration);
    out += ',';
    out += format_double(it.cost);
    out += ',';
    out += format_double(it.stationarity);
    out += ',';
    out += format_double(it.step);
    out += ',';
    out += std::to_string(it.newton_iterations);
    out += '\n';
  }
  atomic_write_text(path, out);
}

inline void write_sweep_csv(const std::filesystem::path& path,
                            const SweepReport& rep) {
  std::string out = "beta";
  if (!rep.rows.empty())
    for (const auto& [key, _] : rep.rows.front().values) out += "," + key;
  out += '\n';
  for (const SweepRow& row : rep.rows) {
    out += format_double(row.beta);
    for (const auto& [_, value] : row.values) {
      out += ',';
      out += format_double(value);
    }
    out += '\n';
  }
  atomic_write_text(path, out);
}

struct CliCommon {
  std::string config_path;
  std::string out_flag;
  long long seed_flag = -1;
  int threads_flag = 0;
};

inline std::filesystem::path resolve_out(const RunConfig& rc,
                                         const CliCommon& c) {
  std::string dir = !c.out_flag.empty() ? c.out_flag : rc.out_dir;
  if (dir.empty())
    throw ValidationError(
        "no output directory: pass --out or set run.out_dir in the config");
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline unsigned long long resolve_seed(const RunConfig& rc, const CliCommon& c) {
  if (c.seed_flag >= 0) return static_cast<unsigned long long>(c.seed_flag);
  return rc.seed;
}

inline int resolve_threads(const CliCommon& c) {
  if (c.threads_flag > 0) return c.threads_flag;
  if (const char* env = std::getenv("PHASECTL_THREADS")) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
    if (ec == std::errc{} && v > 0) return v;
  }
  return 1;
}

inline void emit_warnings(const RunConfig& rc, RunLog& log) {
  for (const std::string& w : rc.warnings) {
    std::cerr << "warning: " << w << "\n";
    log.line("warning: " + w);
  }
}

inline nlohmann::json model_json(const ModelParams& m) {
  return {{"alpha", m.alpha},
          {"beta", m.beta},
          {"potential", m.potential.name},
          {"proliferation", m.prolif.name},
          {"grid", grid_json(m.grid)},
          {"t_final", m.t_final},
          {"n_steps", m.n_steps},
          {"tau", m.tau()},
          {"yosida_eps", m.yosida_eps}};
}

}  // namespace cli_detail

// --- subcommands ---------------------------------------------------------------------

inline int cmd_simulate(const cli_detail::CliCommon& copt) {
  using namespace cli_detail;
  RunConfig rc = load_config(copt.config_path);
  const auto out = resolve_out(rc, copt);
  RunLog log(out / "run.log");
  log.line("simulate config=" + copt.config_path);
  emit_warnings(rc, log);

  SolveReport rep;
  StateTrajectory traj = solve_state_any(rc.model, rc.initial, rc.control, &rep);
  write_trajectory_csv(out / "trajectory.csv", rc.model, traj, rc.save_stride);
  write_diagnostics_csv(out / "diagnostics.csv", rc.model, traj);

  const std::vector<double> energy = energy_series(rc.model, traj);
  double max_increase = 0.0;
  for (size_t n = 1; n < energy.size(); ++n)
    max_increase = std::max(max_increase, energy[n] - energy[n - 1]);

  nlohmann::json summary = {
      {"model", model_json(rc.model)},
      {"newton", {{"total_iterations", rep.total_newton_iterations},
                  {"max_iterations_per_step", rep.max_newton_iterations}}},
      {"mass_balance_residual", mass_balance_residual(rc.model, traj, rc.control)},
      {"energy", {{"initial", energy.front()},
                  {"final", energy.back()},
                  {"max_step_increase", max_increase}}},
      {"final_norms", {{"phi_linf", norm(traj.phi.back(), Norm::linf)},
                       {"mu_linf", norm(traj.mu.back(), Norm::linf)},
                       {"sigma_linf", norm(traj.sigma.back(), Norm::linf)}}},
      {"warnings", rc.warnings}};
  write_json_file(out / "summary.json", summary);
  log.line("done");
  return 0;
}

inline int cmd_optimize(const cli_detail::CliCommon& copt) {
  using namespace cli_detail;
  RunConfig rc = load_config(copt.config_path);
  if (!rc.problem)
    throw ValidationError("optimize requires a problem block in the config");
  const auto out = resolve_out(rc, copt);
  RunLog log(out / "run.log");
  log.line("optimize config=" + copt.config_path);
  emit_warnings(rc, log);

  OptimizeResult res = optimize_projected_gradient(rc.model, *rc.problem,
                                                   rc.initial, rc.control,
                                                   rc.optimize);
  log.line("optimizer finished: iterations=" +
           std::to_string(res.report.history.empty()
                              ? 0
                              : res.report.history.back().iteration) +
           " converged=" + (res.report.converged ? "yes" : "no"));

  ViOptions vopt;
  vopt.seed = resolve_seed(rc, copt);
  ViReport vi = check_variational_inequality(rc.model, *rc.problem, res.adjoint,
                                             res.u, vopt);

  write_control_csv(out / "control.csv", rc.model, res.u);
  write_trajectory_csv(out / "trajectory.csv", rc.model, res.state,
                       rc.save_stride);
  write_history_csv(out / "history.csv", res.report);

  nlohmann::json report = {
      {"model", model_json(rc.model)},
      {"converged", res.report.converged},
      {"iterations", res.report.history.empty()
                         ? 0
                         : res.report.history.back().iteration},
      {"final_cost", res.report.final_cost},
      {"final_stationarity", res.report.final_stationarity},
      {"forward_solves", res.report.forward_solves},
      {"tolerance", rc.optimize.tol},
      {"variational_inequality",
       {{"samples", vi.samples},
        {"min_pairing", vi.min_pairing},
        {"gradient_sup", vi.gradient_sup},
        {"gradient_l2q", vi.gradient_l2q},
        {"complementarity_violations", vi.complementarity_violations}}},
      {"warnings", rc.warnings}};
  write_json_file(out / "optimize_report.json", report);
  log.line("done");
  return res.report.converged ? 0 : 4;
}

inline int cmd_gradient_check(const cli_detail::CliCommon& copt) {
  using namespace cli_detail;
  RunConfig rc = load_config(copt.config_path);
  if (!rc.problem)
    throw ValidationError("gradient-check requires a problem block in the config");
  const auto out = resolve_out(rc, copt);
  RunLog log(out / "run.log");
  log.line("gradient-check config=" + copt.config_path);
  emit_warnings(rc, log);

  FdCheckOptions opt;
  opt.n_directions = rc.gradient_check.directions;
  opt.fd_step = rc.gradient_check.fd_step;
  opt.seed = resolve_seed(rc, copt);
  FdCheckReport rep = fd_gradient_check(rc.model, *rc.problem, rc.initial,
                                        rc.control, opt);
  const bool pass = rep.max_rel_error < rc.gradient_check.threshold;

  nlohmann::json report = {{"model", model_json(rc.model)},
                           {"directions", opt.n_directions},
                           {"fd_step", opt.fd_step},
                           {"analytic", rep.analytic},
                           {"finite_diff", rep.finite_diff},
                           {"rel_errors", rep.rel_errors},
                           {"max_rel_error", rep.max_rel_error},
                           {"median_rel_error", rep.median_rel_error},
                           {"threshold", rc.gradient_check.threshold},
                           {"pass", pass}};
  write_json_file(out / "gradient_check.json", report);
  log.line(pass ? "done: pass" : "done: fail");
  return pass ? 0 : 4;
}

inline int cmd_sweep(const cli_detail::CliCommon& copt) {
  using namespace cli_detail;
  RunConfig rc = load_config(copt.config_path);
  const auto out = resolve_out(rc, copt);
  RunLog log(out / "run.log");
  log.line("sweep kind=" + rc.sweep.kind + " config=" + copt.config_path);
  emit_warnings(rc, log);
  const int threads = resolve_threads(copt);

  SweepReport rep;
  bool optimizers_converged = true;
  if (rc.sweep.kind == "state") {
    rep = sweep_state(rc.model, rc.sweep.betas, rc.initial, rc.control, threads);
  } else if (rc.sweep.kind == "adjoint") {
    if (!rc.problem)
      throw ValidationError("adjoint sweep requires a problem block in the config");
    rep = sweep_adjoint(rc.model, rc.sweep.betas, *rc.problem, rc.initial,
                        rc.control, threads);
  } else {
    if (!rc.problem)
      throw ValidationError("control sweep requires a problem block in the config");
    ModelParams limit = rc.model;
    limit.beta = 0.0;
    OptimizeResult base = optimize_projected_gradient(limit, *rc.problem,
                                                      rc.initial, rc.control,
                                                      rc.optimize);
    if (!base.report.converged)
      log.line("warning: limit optimizer did not reach tolerance");
    optimizers_converged = base.report.converged;
    write_control_csv(out / "control.csv", limit, base.u);
    rep = sweep_optimal_controls(rc.model, rc.sweep.betas, *rc.problem,
                                 rc.initial, base.u, rc.optimize, threads);
    for (const SweepRow& row : rep.rows)
      if (row.values.count("converged") && row.values.at("converged") < 0.5)
        optimizers_converged = false;
  }

  write_sweep_csv(out / "sweep.csv", rep);

  bool pass = optimizers_converged;
  nlohmann::json columns = nlohmann::json::object();
  for (const std::string& col : rep.gap_columns()) {
    const int bad = rep.non_monotone_steps(col);
    const double first = rep.rows.front().values.at(col);
    const double last = rep.rows.back().values.at(col);
    const bool col_ok = bad <= 1 && last <= first;
    pass = pass && col_ok;
    columns[col] = {{"non_monotone_steps", bad},
                    {"value_at_largest_beta", first},
                    {"value_at_smallest_beta", last},
                    {"pass", col_ok}};
  }

  nlohmann::json betas = nlohmann::json::array();
  for (const SweepRow& row : rep.rows) betas.push_back(row.beta);
  nlohmann::json report = {{"model", model_json(rc.model)},
                           {"kind", rep.kind},
                           {"betas", betas},
                           {"limit", rep.limit_values},
                           {"gap_columns", columns},
                           {"optimizers_converged", optimizers_converged},
                           {"pass", pass},
                           {"warnings", rc.warnings}};
  write_json_file(out / "sweep_report.json", report);
  log.line(pass ? "done: pass" : "done: fail");
  return pass ? 0 : 4;
}

inline int cmd_reconstruct_ic(const cli_detail::CliCommon& copt) {
  using namespace cli_detail;
  RunConfig rc = load_config(copt.config_path);
  if (!rc.eta0)
    throw ValidationError(
        "reconstruct-ic requires initial.eta0 (the combined datum) in the config");
  const auto out = resolve_out(rc, copt);
  RunLog log(out / "run.log");
  log.line("reconstruct-ic config=" + copt.config_path);
  emit_warnings(rc, log);

  const Grid& g = rc.model.grid;
  const Field& eta0 = *rc.eta0;
  const Field& phi0 = rc.initial.phi0;
  const Field& mu0 = rc.initial.mu0;

  double residual = 0.0;
  for (int i = 0; i < g.points(); ++i)
    residual = std::max(residual, std::abs(rc.model.alpha * mu0.v[i] +
                                           phi0.v[i] - eta0.v[i]));

  std::string csv = g.dim == 2 ? "x,y,eta0,phi0,mu0\n" : "x,eta0,phi0,mu0\n";
  for (int i = 0; i < g.points(); ++i) {
    csv += coord_cells(g, i);
    csv += ',';
    csv += format_double(eta0.v[i]);
    csv += ',';
    csv += format_double(phi0.v[i]);
    csv += ',';
    csv += format_double(mu0.v[i]);
    csv += '\n';
  }
  atomic_write_text(out / "ic.csv", csv);

  nlohmann::json report = {{"model", cli_detail::model_json(rc.model)},
                           {"newton_tol", rc.reconstruct_tol},
                           {"datum_residual_linf", residual},
                           {"phi0_linf", norm(phi0, Norm::linf)},
                           {"mu0_linf", norm(mu0, Norm::linf)},
                           {"warnings", rc.warnings}};
  write_json_file(out / "reconstruct_report.json", report);
  log.line("done");
  return 0;
}

// --- entry point -----------------------------------------------------------------------

inline int run_cli(int argc, char** argv) {
  using namespace cli_detail;
  CLI::App app{"phasectl: phase-field tumor growth simulation and optimal control"};
  app.require_subcommand(1);

  CliCommon opts[5];
  const auto add_common = [](CLI::App* sub, CliCommon& c) {
    sub->add_option("--config", c.config_path, "JSON run configuration")
        ->required();
    sub->add_option("--out", c.out_flag,
                    "output directory (overrides run.out_dir)");
    sub->add_option("--seed", c.seed_flag, "RNG seed (overrides run.seed)");
    sub->add_option("--threads", c.threads_flag,
                    "worker threads (overrides PHASECTL_THREADS)");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run the coupled state system");
  CLI::App* opt = app.add_subcommand("optimize",
                                     "projected-gradient optimal control solve");
  CLI::App* grad = app.add_subcommand("gradient-check",
                                      "finite-difference check of the reduced gradient");
  CLI::App* swp = app.add_subcommand("sweep",
                                     "viscosity-parameter sweep with limit comparison");
  CLI::App* rec = app.add_subcommand("reconstruct-ic",
                                     "split a combined initial datum into phase and potential");
  CLI::App* subs[5] = {sim, opt, grad, swp, rec};
  for (int i = 0; i < 5; ++i) add_common(subs[i], opts[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto fail = [](const char* kind, const std::string& msg, int code) {
    nlohmann::json err = {{"error", {{"kind", kind}, {"message", msg}}}};
    std::cerr << err.dump() << "\n";
    return code;
  };

  try {
    if (sim->parsed()) return cmd_simulate(opts[0]);
    if (opt->parsed()) return cmd_optimize(opts[1]);
    if (grad->parsed()) return cmd_gradient_check(opts[2]);
    if (swp->parsed()) return cmd_sweep(opts[3]);
    if (rec->parsed()) return cmd_reconstruct_ic(opts[4]);
  } catch (const ValidationError& e) {
    return fail("validation", e.what(), 2);
  } catch (const SolverError& e) {
    return fail("solver", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 1;
}

}  // namespace phasectl
