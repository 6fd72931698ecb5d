#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/model.hpp"
#include "phasectl/potentials.hpp"
#include "phasectl/solvers.hpp"

namespace phasectl {

// Recovers the phase phi0 (and the matching chemical potential mu0) from a
// combined initial datum eta0 = alpha*mu0 + phi0 by solving
//   -lap(phi0) + (phi0 - eta0)/alpha + F'(phi0) = 0
// with the mirrored Neumann stencil.  Requires alpha * l_stab < 1, which makes
// the Newton systems SPD.
inline std::pair<Field, Field> reconstruct_phi0(const Field& eta0, double alpha,
                                                const Potential& pot,
                                                double tol = 1e-12) {
  require_finite(eta0, "reconstruct_phi0");
  if (!(alpha > 0.0))
    throw ValidationError("reconstruct_phi0: alpha must be positive");
  if (!(alpha * pot.l_stab < 1.0))
    throw ValidationError("reconstruct_phi0: alpha * l_stab = " +
                          std::to_string(alpha * pot.l_stab) + " must be < 1");

  auto residual = [&](const StackedField& x) {
    const Field& phi = x[0];
    Field r = laplacian(phi);
    for (int i = 0; i < r.size(); ++i)
      r.v[i] = -r.v[i] + (phi.v[i] - eta0.v[i]) / alpha + eval_fp(pot, phi.v[i]);
    return StackedField{r};
  };
  auto solve_lin = [&](const StackedField& x, const StackedField& rhs) {
    const Field& phi = x[0];
    Field diag(phi.grid);
    // 1/alpha + F'' >= 1/alpha - l_stab > 0, so the linearization is SPD
    for (int i = 0; i < diag.size(); ++i)
      diag.v[i] = 1.0 / alpha + eval_fpp(pot, phi.v[i]);
    LinearOperatorSpec op;
    op.symmetric = true;
    op.apply = [&diag](const Field& in, Field& out) {
      laplacian_apply(in, out);
      for (int i = 0; i < out.size(); ++i) out.v[i] = -out.v[i] + diag.v[i] * in.v[i];
    };
    Field jd = diag;
    // stencil center is 2*dim/h^2 with the mirror convention
    const double c = 2.0 * diag.grid.dim / (diag.grid.h * diag.grid.h);
    for (double& d : jd.v) d += c;
    op.jacobi_diagonal = std::move(jd);
    return StackedField{solve_spd(op, rhs[0], Field(phi.grid), 1e-12)};
  };

  NewtonOptions nopt;
  nopt.tol = tol;
  NewtonReport rep;
  StackedField sol =
      newton_solve(residual, solve_lin, StackedField{eta0}, nopt, &rep);
  if (!rep.converged)
    throw SolverError("reconstruct_phi0: Newton stalled at residual " +
                      std::to_string(rep.residual_norm));
  Field phi0 = std::move(sol[0]);
  Field mu0 = laplacian(phi0);
  for (int i = 0; i < mu0.size(); ++i)
    mu0.v[i] = -mu0.v[i] + eval_fp(pot, phi0.v[i]);
  return {std::move(phi0), std::move(mu0)};
}

namespace detail {

// Residual of one implicit Euler step of the coupled system; x = (mu, phi,
// sigma) at the new level, prev at the old one, u the control sample on the
// step.  beta = 0 gives the limit scheme: the phase equation loses its time
// term and the first equation still advances alpha*mu + phi.
inline StackedField state_step_residual(const ModelParams& m, const StackedField& prev,
                                        const Field& u, const StackedField& x) {
  const double tau = m.tau();
  const Field &mu = x[0], &phi = x[1], &sigma = x[2];
  Field lap_mu = laplacian(mu), lap_phi = laplacian(phi), lap_sigma = laplacian(sigma);
  StackedField r(3, Field(m.grid));
  for (int i = 0; i < m.grid.points(); ++i) {
    const double pv = m.prolif.p(phi.v[i]);
    const double exch = pv * (sigma.v[i] - mu.v[i]);
    r[0].v[i] = m.alpha * (mu.v[i] - prev[0].v[i]) / tau +
                (phi.v[i] - prev[1].v[i]) / tau - lap_mu.v[i] - exch;
    r[1].v[i] = mu.v[i] - m.beta * (phi.v[i] - prev[1].v[i]) / tau + lap_phi.v[i] -
                model_fp(m, phi.v[i]);
    r[2].v[i] = (sigma.v[i] - prev[2].v[i]) / tau - lap_sigma.v[i] + exch - u.v[i];
  }
  return r;
}

}  // namespace detail

// Advances one implicit Euler step by a damped Newton iteration on the
// coupled residual, with the linearized steps solved by sparse LU.
inline StackedField step_state(const ModelParams& m, const StackedField& prev,
                               const Field& u, NewtonReport* report = nullptr) {
  auto residual = [&](const StackedField& x) {
    return detail::state_step_residual(m, prev, u, x);
  };
  auto solve_lin = [&](const StackedField& x, const StackedField& rhs) {
    const double tau = m.tau();
    const Field &mu = x[0], &phi = x[1], &sigma = x[2];
    Field d00(m.grid), d01(m.grid), d02(m.grid), d11(m.grid), d21(m.grid), d22(m.grid);
    for (int i = 0; i < m.grid.points(); ++i) {
      const double pv = m.prolif.p(phi.v[i]);
      const double dp = m.prolif.p_prime(phi.v[i]) * (sigma.v[i] - mu.v[i]);
      d00.v[i] = m.alpha / tau + pv;
      d01.v[i] = 1.0 / tau - dp;
      d02.v[i] = -pv;
      d11.v[i] = -m.beta / tau - model_fpp(m, phi.v[i]);
      d21.v[i] = dp;
      d22.v[i] = 1.0 / tau + pv;
    }
    BlockMatrix blocks{};
    blocks[0][0] = {0.0, &d00, -1.0};
    blocks[0][1] = {0.0, &d01, 0.0};
    blocks[0][2] = {0.0, &d02, 0.0};
    blocks[1][0] = {1.0, nullptr, 0.0};
    blocks[1][1] = {0.0, &d11, 1.0};
    blocks[2][0] = {0.0, &d02, 0.0};
    blocks[2][1] = {0.0, &d21, 0.0};
    blocks[2][2] = {0.0, &d22, -1.0};
    CoupledStepSolver solver(m.grid, blocks);
    return solver.solve(rhs);
  };
  NewtonOptions nopt;
  nopt.tol = m.newton_tol;
  NewtonReport rep;
  StackedField next = newton_solve(residual, solve_lin, prev, nopt, &rep);
  if (report) *report = rep;
  if (!rep.converged)
    throw SolverError("state step: Newton stalled at residual " +
                      std::to_string(rep.residual_norm));
  return next;
}

namespace detail {

inline void check_state_inputs(const ModelParams& m, const InitialData& ics,
                               const std::vector<Field>& u) {
  validate_model(m);
  for (const Field* f : {&ics.phi0, &ics.mu0, &ics.sigma0}) {
    if (!(f->grid == m.grid))
      throw ValidationError("state: initial data grid does not match the model grid");
    require_finite(*f, "state: initial data");
  }
  if (static_cast<int>(u.size()) != m.n_steps)
    throw ValidationError("state: control has " + std::to_string(u.size()) +
                          " steps, expected " + std::to_string(m.n_steps));
  for (const Field& f : u) {
    if (!(f.grid == m.grid))
      throw ValidationError("state: control grid does not match the model grid");
    require_finite(f, "state: control");
  }
}

inline StateTrajectory run_state(const ModelParams& m, const InitialData& ics,
                                 const std::vector<Field>& u, SolveReport* report) {
  check_state_inputs(m, ics, u);
  const double tau = m.tau();
  StateTrajectory traj;
  traj.times.resize(m.n_steps + 1);
  traj.mu.reserve(m.n_steps + 1);
  traj.phi.reserve(m.n_steps + 1);
  traj.sigma.reserve(m.n_steps + 1);
  traj.mu.push_back(ics.mu0);
  traj.phi.push_back(ics.phi0);
  traj.sigma.push_back(ics.sigma0);
  traj.times[0] = 0.0;
  StackedField cur{ics.mu0, ics.phi0, ics.sigma0};
  SolveReport rep;
  for (int k = 0; k < m.n_steps; ++k) {
    NewtonReport nrep;
    cur = step_state(m, cur, u[k], &nrep);
    if (!nrep.converged)
      throw SolverError("state: Newton failed at step " + std::to_string(k + 1) +
                        ", residual " + std::to_string(nrep.residual_norm));
    rep.total_newton_iterations += nrep.iterations;
    rep.max_newton_iterations = std::max(rep.max_newton_iterations, nrep.iterations);
    traj.times[k + 1] = (k + 1) * tau;
    traj.mu.push_back(cur[0]);
    traj.phi.push_back(cur[1]);
    traj.sigma.push_back(cur[2]);
  }
  if (report) *report = rep;
  return traj;
}

}  // namespace detail

// Relaxed system (beta > 0): both time regularizations active.
inline StateTrajectory solve_state_beta(const ModelParams& m, const InitialData& ics,
                                        const std::vector<Field>& u,
                                        SolveReport* report = nullptr) {
  if (!(m.beta > 0.0))
    throw ValidationError("solve_state_beta: beta must be positive (use the limit solver)");
  return detail::run_state(m, ics, u, report);
}

// Limit system (beta = 0): the chemical potential is algebraic in phi; the
// first equation still advances the combination alpha*mu + phi, so only that
// combination of the initial data enters the first step.
inline StateTrajectory solve_state_limit(const ModelParams& m, const InitialData& ics,
                                         const std::vector<Field>& u,
                                         SolveReport* report = nullptr) {
  if (m.beta != 0.0)
    throw ValidationError("solve_state_limit: beta must be exactly 0");
  return detail::run_state(m, ics, u, report);
}

// Discrete conservation check: the combined mass integral(alpha*mu + phi +
// sigma) changes only by the time-accumulated control, exactly, because the
// mirrored stencil integrates to zero.  Returns the worst deviation over the
// trajectory, normalized by max(1, |initial mass|).
inline double mass_balance_residual(const ModelParams& m, const StateTrajectory& traj,
                                    const std::vector<Field>& u) {
  if (traj.levels() != m.n_steps + 1)
    throw ValidationError("mass_balance_residual: trajectory level count mismatch");
  const double tau = m.tau();
  auto mass = [&](int level) {
    double s = 0.0;
    const Field &mu = traj.mu[level], &phi = traj.phi[level], &sg = traj.sigma[level];
    for (int i = 0; i < m.grid.points(); ++i)
      s += quad_weight(m.grid, i) *
           (m.alpha * mu.v[i] + phi.v[i] + sg.v[i]);
    return m.grid.cell_volume() * s;
  };
  const double m0 = mass(0);
  double worst = 0.0, injected = 0.0;
  for (int nlev = 1; nlev <= m.n_steps; ++nlev) {
    injected += tau * integrate(u[nlev - 1]);
    worst = std::max(worst, std::abs(mass(nlev) - m0 - injected));
  }
  return worst / std::max(1.0, std::abs(m0));
}

// Free energy along the trajectory: relaxation energy of mu, interface energy
// of phi, potential energy, nutrient energy.  Non-increasing for the pure
// relaxation flow (no control, no proliferation).
inline std::vector<double> energy_series(const ModelParams& m,
                                         const StateTrajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.levels());
  for (int lev = 0; lev < traj.levels(); ++lev) {
    const Field &mu = traj.mu[lev], &phi = traj.phi[lev], &sg = traj.sigma[lev];
    double fint = 0.0;
    for (int i = 0; i < m.grid.points(); ++i)
      fint += quad_weight(m.grid, i) * eval_f(m.potential, phi.v[i]);
    fint *= m.grid.cell_volume();
    const double e = 0.5 * m.alpha * inner_product(mu, mu) +
                     0.5 * gradient_sq_integral(phi) + fint +
                     0.5 * inner_product(sg, sg);
    out.push_back(e);
  }
  return out;
}

}  // namespace phasectl
