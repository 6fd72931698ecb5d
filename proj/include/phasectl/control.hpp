#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "phasectl/adjoint.hpp"
#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/model.hpp"
#include "phasectl/problem.hpp"
#include "phasectl/state.hpp"

namespace phasectl {

// Controls are piecewise constant in time: entry k acts on (t_k, t_{k+1}] and
// is sampled at the right endpoint, matching the implicit time discretization.
using ControlSteps = std::vector<Field>;

// L2 pairing over the space-time cylinder with right-endpoint rectangle
// quadrature in time.
inline double l2q_inner(const ModelParams& m, const ControlSteps& a,
                        const ControlSteps& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += inner_product(a[k], b[k]);
  return m.tau() * s;
}

inline double l2q_norm(const ModelParams& m, const ControlSteps& a) {
  return std::sqrt(std::max(0.0, l2q_inner(m, a, a)));
}

// Tracking cost of a solved trajectory under control u.
inline double evaluate_cost(const ModelParams& m, const ControlProblem& pb,
                            const StateTrajectory& traj, const ControlSteps& u) {
  if (traj.levels() != m.n_steps + 1)
    throw ValidationError("evaluate_cost: trajectory level count mismatch");
  if (static_cast<int>(u.size()) != m.n_steps)
    throw ValidationError("evaluate_cost: control step count mismatch");
  const double tau = m.tau();
  double acc = 0.0;
  for (int n = 1; n <= m.n_steps; ++n) {
    if (pb.b1 > 0.0) {
      Field d = traj.phi[n] - pb.phi_target.at(n);
      acc += tau * 0.5 * pb.b1 * inner_product(d, d);
    }
    if (pb.b2 > 0.0) {
      Field d = traj.sigma[n] - pb.sigma_target.at(n);
      acc += tau * 0.5 * pb.b2 * inner_product(d, d);
    }
    if (pb.b0 > 0.0)
      acc += tau * 0.5 * pb.b0 * inner_product(u[n - 1], u[n - 1]);
  }
  if (pb.b3 > 0.0) {
    Field d = traj.sigma[m.n_steps] - pb.sigma_final_target;
    acc += 0.5 * pb.b3 * inner_product(d, d);
  }
  return acc;
}

// Proximal ("adapted") cost: the plain cost plus half the squared distance to
// a reference control.  Used to pin the relaxed minimizers near a chosen
// limit minimizer in the vanishing-beta study.
inline double evaluate_adapted_cost(const ModelParams& m, const ControlProblem& pb,
                                    const StateTrajectory& traj, const ControlSteps& u,
                                    const ControlSteps& u_ref) {
  if (u_ref.size() != u.size())
    throw ValidationError("evaluate_adapted_cost: reference control size mismatch");
  double extra = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    Field d = u[k] - u_ref[k];
    extra += inner_product(d, d);
  }
  return evaluate_cost(m, pb, traj, u) + 0.5 * m.tau() * extra;
}

// Reduced gradient integrand g_k = r^{k+1} + b0 u_k (+ (u_k - u_ref_k) for the
// adapted cost).  Control step k acts on (t_k, t_{k+1}], so it pairs with the
// multiplier at level k+1; with the coefficient freezing used in the backward
// sweep this is the exact transpose pairing of the forward scheme.
inline ControlSteps reduced_gradient(const ModelParams& m, const ControlProblem& pb,
                                     const AdjointTrajectory& adj, const ControlSteps& u,
                                     const ControlSteps* u_ref = nullptr) {
  if (adj.levels() != m.n_steps + 1)
    throw ValidationError("reduced_gradient: adjoint level count mismatch");
  if (static_cast<int>(u.size()) != m.n_steps)
    throw ValidationError("reduced_gradient: control step count mismatch");
  if (u_ref && u_ref->size() != u.size())
    throw ValidationError("reduced_gradient: reference control size mismatch");
  ControlSteps g;
  g.reserve(u.size());
  for (int k = 0; k < m.n_steps; ++k) {
    Field gk = adj.r[k + 1];
    axpy(gk, pb.b0, u[k]);
    if (u_ref) {
      gk += u[k];
      gk -= (*u_ref)[k];
    }
    g.push_back(std::move(gk));
  }
  return g;
}

inline Field project_box(const Field& u, const Field& lo, const Field& hi) {
  require_same_grid(u, lo, "project_box");
  require_same_grid(u, hi, "project_box");
  Field out = u;
  for (int i = 0; i < u.size(); ++i)
    out.v[i] = std::clamp(u.v[i], lo.v[i], hi.v[i]);
  return out;
}

inline ControlSteps project_box(const ControlSteps& u, const Field& lo,
                                const Field& hi) {
  ControlSteps out;
  out.reserve(u.size());
  for (const Field& f : u) out.push_back(project_box(f, lo, hi));
  return out;
}

// Fixed-step-size stationarity measure ||u - P(u - g)||_Q at reference step 1.
inline double stationarity_residual(const ModelParams& m, const ControlProblem& pb,
                                    const ControlSteps& u, const ControlSteps& g) {
  double s = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    Field moved = u[k];
    axpy(moved, -1.0, g[k]);
    Field proj = project_box(moved, pb.u_lower, pb.u_upper);
    proj -= u[k];
    s += inner_product(proj, proj);
  }
  return std::sqrt(std::max(0.0, m.tau() * s));
}

// Forward solve dispatching on beta (relaxed vs limit scheme).
inline StateTrajectory solve_state_any(const ModelParams& m, const InitialData& ics,
                                       const ControlSteps& u,
                                       SolveReport* report = nullptr) {
  return m.beta > 0.0 ? solve_state_beta(m, ics, u, report)
                      : solve_state_limit(m, ics, u, report);
}

inline AdjointTrajectory solve_adjoint_any(const ModelParams& m,
                                           const ControlProblem& pb,
                                           const StateTrajectory& traj) {
  return m.beta > 0.0 ? solve_adjoint_beta(m, pb, traj)
                      : solve_adjoint_limit(m, pb, traj);
}

struct OptimizeOptions {
  int max_iterations = 200;
  double tol = 1e-6;            // on the stationarity residual
  double armijo_c = 1e-4;
  int max_backtracks = 40;
  const ControlSteps* adapted_ref = nullptr;  // switches to the adapted cost
};

struct OptimizeIterate {
  int iteration = 0;
  double cost = 0.0;
  double stationarity = 0.0;
  double step = 0.0;
  int newton_iterations = 0;
};

struct OptimizeReport {
  std::vector<OptimizeIterate> history;
  bool converged = false;
  int forward_solves = 0;
  double final_cost = 0.0;
  double final_stationarity = 0.0;
};

struct OptimizeResult {
  ControlSteps u;
  StateTrajectory state;
  AdjointTrajectory adjoint;
  OptimizeReport report;
};

// Projected gradient descent with Armijo backtracking on the true (possibly
// adapted) cost.  The trial step doubles after each accepted iterate and
// halves inside the line search, so the method self-scales.
inline OptimizeResult optimize_projected_gradient(const ModelParams& m,
                                                  const ControlProblem& pb,
                                                  const InitialData& ics,
                                                  ControlSteps u0,
                                                  const OptimizeOptions& opt = {}) {
  validate_model(m);
  validate_problem(pb, m);
  if (static_cast<int>(u0.size()) != m.n_steps)
    throw ValidationError("optimize: initial control step count mismatch");
  OptimizeResult res;
  res.u = project_box(u0, pb.u_lower, pb.u_upper);

  auto cost_of = [&](const StateTrajectory& traj, const ControlSteps& u) {
    return opt.adapted_ref
               ? evaluate_adapted_cost(m, pb, traj, u, *opt.adapted_ref)
               : evaluate_cost(m, pb, traj, u);
  };

  SolveReport srep;
  res.state = solve_state_any(m, ics, res.u, &srep);
  res.report.forward_solves = 1;
  double cost = cost_of(res.state, res.u);
  double step = 1.0;

  for (int it = 0; it < opt.max_iterations; ++it) {
    res.adjoint = solve_adjoint_any(m, pb, res.state);
    ControlSteps g = reduced_gradient(m, pb, res.adjoint, res.u, opt.adapted_ref);
    const double stat = stationarity_residual(m, pb, res.u, g);
    res.report.history.push_back({it, cost, stat, step, srep.total_newton_iterations});
    res.report.final_cost = cost;
    res.report.final_stationarity = stat;
    if (stat <= opt.tol) {
      res.report.converged = true;
      return res;
    }

    step = std::min(2.0 * step, 1e6);
    bool accepted = false;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      ControlSteps trial;
      trial.reserve(res.u.size());
      double predicted = 0.0;  // <g, trial - u>_Q, nonpositive by projection
      for (size_t k = 0; k < res.u.size(); ++k) {
        Field moved = res.u[k];
        axpy(moved, -step, g[k]);
        Field proj = project_box(moved, pb.u_lower, pb.u_upper);
        Field d = proj - res.u[k];
        predicted += inner_product(g[k], d);
        trial.push_back(std::move(proj));
      }
      predicted *= m.tau();
      StateTrajectory traj_trial = solve_state_any(m, ics, trial, &srep);
      ++res.report.forward_solves;
      const double cost_trial = cost_of(traj_trial, trial);
      if (cost_trial <= cost + opt.armijo_c * predicted && predicted < 0.0) {
        res.u = std::move(trial);
        res.state = std::move(traj_trial);
        cost = cost_trial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // the line search cannot improve the cost anymore; report where we stopped
      res.report.converged = false;
      return res;
    }
  }
  // record the state at the last accepted iterate
  res.adjoint = solve_adjoint_any(m, pb, res.state);
  ControlSteps g = reduced_gradient(m, pb, res.adjoint, res.u, opt.adapted_ref);
  const double stat = stationarity_residual(m, pb, res.u, g);
  res.report.history.push_back(
      {opt.max_iterations, cost, stat, step, srep.total_newton_iterations});
  res.report.final_cost = cost;
  res.report.final_stationarity = stat;
  res.report.converged = stat <= opt.tol;
  return res;
}

struct ViOptions {
  int n_samples = 100;
  unsigned long long seed = 1;
  const ControlSteps* adapted_ref = nullptr;
};

struct ViReport {
  double min_pairing = 0.0;      // min over sampled admissible v of <g, v - u>_Q
  double gradient_sup = 0.0;     // sup norm of the integrand
  double gradient_l2q = 0.0;
  int complementarity_violations = 0;
  int samples = 0;
};

// Samples the first-order variational inequality <g, v - u>_Q >= 0 over random
// admissible controls plus the two box extremes, and counts pointwise
// complementarity sign errors beyond a tolerance band.
inline ViReport check_variational_inequality(const ModelParams& m,
                                             const ControlProblem& pb,
                                             const AdjointTrajectory& adj,
                                             const ControlSteps& u,
                                             const ViOptions& opt = {}) {
  ControlSteps g = reduced_gradient(m, pb, adj, u, opt.adapted_ref);
  ViReport rep;
  for (const Field& f : g) {
    rep.gradient_sup = std::max(rep.gradient_sup, norm(f, Norm::linf));
  }
  rep.gradient_l2q = l2q_norm(m, g);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pairing = [&](const ControlSteps& v) {
    double s = 0.0;
    for (size_t k = 0; k < u.size(); ++k) {
      Field d = v[k] - u[k];
      s += inner_product(g[k], d);
    }
    return m.tau() * s;
  };

  bool first = true;
  auto consider = [&](const ControlSteps& v) {
    const double val = pairing(v);
    if (first || val < rep.min_pairing) rep.min_pairing = val;
    first = false;
    ++rep.samples;
  };

  ControlSteps v(u.size(), Field(m.grid));
  for (int s = 0; s < opt.n_samples; ++s) {
    for (Field& f : v)
      for (int i = 0; i < f.size(); ++i)
        f.v[i] = pb.u_lower.v[i] +
                 unit(rng) * (pb.u_upper.v[i] - pb.u_lower.v[i]);
    consider(v);
  }
  for (Field& f : v) f = pb.u_lower;
  consider(v);
  for (Field& f : v) f = pb.u_upper;
  consider(v);

  const double band = 1e-6 * rep.gradient_sup;
  double width = 0.0;
  for (int i = 0; i < m.grid.points(); ++i)
    width = std::max(width, pb.u_upper.v[i] - pb.u_lower.v[i]);
  const double u_band = 1e-6 * std::max(width, 1.0);
  for (size_t k = 0; k < u.size(); ++k)
    for (int i = 0; i < m.grid.points(); ++i) {
      const double gv = g[k].v[i], uv = u[k].v[i];
      if (gv > band && uv > pb.u_lower.v[i] + u_band) ++rep.complementarity_violations;
      if (gv < -band && uv < pb.u_upper.v[i] - u_band) ++rep.complementarity_violations;
    }
  return rep;
}

struct FdCheckOptions {
  int n_directions = 5;
  double fd_step = 1e-4;          // scaled by the cost magnitude
  unsigned long long seed = 1;
  const ControlSteps* adapted_ref = nullptr;
};

struct FdCheckReport {
  std::vector<double> analytic, finite_diff, rel_errors;
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
};

// Validates the adjoint-based gradient against central differences of the
// reduced cost along random unit directions.
inline FdCheckReport fd_gradient_check(const ModelParams& m, const ControlProblem& pb,
                                       const InitialData& ics, const ControlSteps& u,
                                       const FdCheckOptions& opt = {}) {
  validate_model(m);
  validate_problem(pb, m);
  auto cost_at = [&](const ControlSteps& w) {
    StateTrajectory traj = solve_state_any(m, ics, w);
    return opt.adapted_ref ? evaluate_adapted_cost(m, pb, traj, w, *opt.adapted_ref)
                           : evaluate_cost(m, pb, traj, w);
  };

  StateTrajectory traj = solve_state_any(m, ics, u);
  AdjointTrajectory adj = solve_adjoint_any(m, pb, traj);
  ControlSteps g = reduced_gradient(m, pb, adj, u, opt.adapted_ref);
  const double base_cost = opt.adapted_ref
                               ? evaluate_adapted_cost(m, pb, traj, u, *opt.adapted_ref)
                               : evaluate_cost(m, pb, traj, u);
  const double eta = opt.fd_step * std::max(1.0, std::abs(base_cost));

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  FdCheckReport rep;
  for (int d = 0; d < opt.n_directions; ++d) {
    ControlSteps dir(u.size(), Field(m.grid));
    for (Field& f : dir)
      for (double& x : f.v) x = sym(rng);
    const double dn = l2q_norm(m, dir);
    if (dn > 0.0)
      for (Field& f : dir) f *= 1.0 / dn;

    ControlSteps up = u, dn_ctrl = u;
    for (size_t k = 0; k < u.size(); ++k) {
      axpy(up[k], eta, dir[k]);
      axpy(dn_ctrl[k], -eta, dir[k]);
    }
    const double fd = (cost_at(up) - cost_at(dn_ctrl)) / (2.0 * eta);
    const double an = l2q_inner(m, g, dir);
    rep.analytic.push_back(an);
    rep.finite_diff.push_back(fd);
    rep.rel_errors.push_back(std::abs(fd - an) / std::max(std::abs(fd), 1e-12));
  }
  std::vector<double> sorted = rep.rel_errors;
  std::sort(sorted.begin(), sorted.end());
  rep.max_rel_error = sorted.empty() ? 0.0 : sorted.back();
  rep.median_rel_error = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
  return rep;
}

}  // namespace phasectl
