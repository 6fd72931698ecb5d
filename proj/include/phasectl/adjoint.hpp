#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/model.hpp"
#include "phasectl/problem.hpp"
#include "phasectl/solvers.hpp"

namespace phasectl {

// Multipliers of the tracking problem: p pairs with the first state equation,
// q with the phase equation, r with the nutrient equation.
struct AdjointTrajectory {
  std::vector<double> times;
  std::vector<Field> p, q, r;

  int levels() const { return static_cast<int>(times.size()); }
};

namespace detail {

inline void check_adjoint_inputs(const ModelParams& m, const ControlProblem& pb,
                                 const StateTrajectory& traj) {
  validate_model(m);
  validate_problem(pb, m);
  if (traj.levels() != m.n_steps + 1 ||
      traj.mu.size() != traj.times.size() ||
      traj.phi.size() != traj.times.size() ||
      traj.sigma.size() != traj.times.size())
    throw ValidationError("adjoint: state trajectory is incomplete");
  for (int lev = 0; lev < traj.levels(); ++lev) {
    if (!(traj.phi[lev].grid == m.grid))
      throw ValidationError("adjoint: state grid does not match the model grid");
    require_finite(traj.phi[lev], "adjoint: state phi");
    require_finite(traj.mu[lev], "adjoint: state mu");
    require_finite(traj.sigma[lev], "adjoint: state sigma");
  }
}

// One backward implicit Euler level: solve the coupled linear system for
// (p, q, r) at level n, with coefficients frozen at that same level (this
// freezing makes the sweep the exact transpose of the forward linearization
// at interior levels).  beta = 0 drops the time term of q, whose equation
// becomes algebraic level by level.
inline StackedField adjoint_level_solve(const ModelParams& m, const ControlProblem& pb,
                                        const StateTrajectory& traj, int n,
                                        const Field& p_next, const Field& q_next,
                                        const Field& r_next) {
  const double tau = m.tau();
  const Field &phib = traj.phi[n], &mub = traj.mu[n], &sgb = traj.sigma[n];

  Field dA_p(m.grid), dA_q(m.grid), dA_r(m.grid), dB_p(m.grid), minusP(m.grid),
      dC_r(m.grid);
  for (int i = 0; i < m.grid.points(); ++i) {
    const double pv = m.prolif.p(phib.v[i]);
    const double dp = m.prolif.p_prime(phib.v[i]) * (sgb.v[i] - mub.v[i]);
    dA_p.v[i] = 1.0 / tau - dp;
    dA_q.v[i] = -m.beta / tau - eval_fpp(m.potential, phib.v[i]);
    dA_r.v[i] = dp;
    dB_p.v[i] = m.alpha / tau + pv;
    minusP.v[i] = -pv;
    dC_r.v[i] = 1.0 / tau + pv;
  }
  // rows: phase-equation multiplier balance (A), potential-equation balance
  // (B), nutrient balance (C); unknowns ordered (p, q, r)
  BlockMatrix blocks{};
  blocks[0][0] = {0.0, &dA_p, 0.0};
  blocks[0][1] = {0.0, &dA_q, 1.0};
  blocks[0][2] = {0.0, &dA_r, 0.0};
  blocks[1][0] = {0.0, &dB_p, -1.0};
  blocks[1][1] = {1.0, nullptr, 0.0};
  blocks[1][2] = {0.0, &minusP, 0.0};
  blocks[2][0] = {0.0, &minusP, 0.0};
  blocks[2][2] = {0.0, &dC_r, -1.0};

  StackedField rhs(3, Field(m.grid));
  for (int i = 0; i < m.grid.points(); ++i) {
    rhs[0].v[i] = pb.b1 * (phib.v[i] - pb.phi_target.at(n).v[i]) -
                  (m.beta / tau) * q_next.v[i] + p_next.v[i] / tau;
    rhs[1].v[i] = (m.alpha / tau) * p_next.v[i];
    rhs[2].v[i] = pb.b2 * (sgb.v[i] - pb.sigma_target.at(n).v[i]) +
                  r_next.v[i] / tau;
  }

  CoupledStepSolver solver(m.grid, blocks);
  if (!solver.factorized())
    throw SolverError("adjoint: singular coupled system at level " +
                      std::to_string(n) +
                      (m.beta == 0.0 ? " (algebraic q-block may be degenerate)" : ""));
  return solver.solve(rhs);
}

inline AdjointTrajectory run_adjoint(const ModelParams& m, const ControlProblem& pb,
                                     const StateTrajectory& traj) {
  check_adjoint_inputs(m, pb, traj);
  const int N = m.n_steps;
  AdjointTrajectory adj;
  adj.times = traj.times;
  adj.p.assign(N + 1, Field(m.grid));
  adj.q.assign(N + 1, Field(m.grid));
  adj.r.assign(N + 1, Field(m.grid));

  // final conditions: p and q vanish at T (q only enters for beta > 0; for
  // beta = 0 its final slot stays zero by convention, the scheme never reads
  // it), r matches the terminal tracking misfit
  for (int i = 0; i < m.grid.points(); ++i)
    adj.r[N].v[i] =
        pb.b3 * (traj.sigma[N].v[i] - pb.sigma_final_target.v[i]);

  for (int n = N - 1; n >= 0; --n) {
    StackedField sol = detail::adjoint_level_solve(m, pb, traj, n, adj.p[n + 1],
                                                   adj.q[n + 1], adj.r[n + 1]);
    adj.p[n] = std::move(sol[0]);
    adj.q[n] = std::move(sol[1]);
    adj.r[n] = std::move(sol[2]);
  }
  return adj;
}

}  // namespace detail

// Backward sweep for the relaxed problem (beta > 0).
inline AdjointTrajectory solve_adjoint_beta(const ModelParams& m,
                                            const ControlProblem& pb,
                                            const StateTrajectory& traj) {
  if (!(m.beta > 0.0))
    throw ValidationError("solve_adjoint_beta: beta must be positive");
  return detail::run_adjoint(m, pb, traj);
}

// Backward sweep for the limit problem (beta = 0); q is determined level by
// level through the coupled solve and carries no final condition.
inline AdjointTrajectory solve_adjoint_limit(const ModelParams& m,
                                             const ControlProblem& pb,
                                             const StateTrajectory& traj) {
  if (m.beta != 0.0)
    throw ValidationError("solve_adjoint_limit: beta must be exactly 0");
  return detail::run_adjoint(m, pb, traj);
}

}  // namespace phasectl
