#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "phasectl/adjoint.hpp"
#include "phasectl/control.hpp"
#include "phasectl/errors.hpp"
#include "phasectl/model.hpp"
#include "phasectl/problem.hpp"
#include "phasectl/state.hpp"

namespace phasectl {

inline const std::vector<double>& default_beta_grid() {
  static const std::vector<double> grid = {1e-1, 3e-2, 1e-2, 3e-3,
                                           1e-3, 3e-4, 1e-4};
  return grid;
}

// One sweep entry: the relaxation strength and a sorted table of scalar
// diagnostics (uniform-bound norms and gaps against the limit run).
struct SweepRow {
  double beta = 0.0;
  std::map<std::string, double> values;
};

struct SweepReport {
  std::string kind;                     // "state" | "adjoint" | "control"
  std::vector<SweepRow> rows;           // beta descending
  std::map<std::string, double> limit_values;  // diagnostics of the beta = 0 run

  // increases along decreasing beta (strict, with a tiny relative slack)
  int non_monotone_steps(const std::string& column) const {
    int bad = 0;
    for (size_t i = 0; i + 1 < rows.size(); ++i) {
      const double a = rows[i].values.at(column);
      const double b = rows[i + 1].values.at(column);
      if (b > a * (1.0 + 1e-12) + 1e-15) ++bad;
    }
    return bad;
  }

  double value_at_smallest_beta(const std::string& column) const {
    return rows.back().values.at(column);
  }

  double max_over_betas(const std::string& column) const {
    double m = rows.front().values.at(column);
    for (const SweepRow& r : rows) m = std::max(m, r.values.at(column));
    return m;
  }

  std::vector<std::string> gap_columns() const {
    std::vector<std::string> out;
    if (rows.empty()) return out;
    for (const auto& [k, v] : rows.front().values)
      if (k.rfind("gap_", 0) == 0) out.push_back(k);
    return out;
  }
};

namespace detail {

inline std::vector<double> checked_betas(std::vector<double> betas) {
  if (betas.empty()) throw ValidationError("sweep: beta list is empty");
  for (double b : betas)
    if (!(b > 0.0) || !std::isfinite(b))
      throw ValidationError("sweep: betas must be positive and finite");
  std::sort(betas.begin(), betas.end(), std::greater<>());
  betas.erase(std::unique(betas.begin(), betas.end()), betas.end());
  return betas;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers.  Each task writes
// only its own output slot, so the result is independent of scheduling.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline double linf_in_time_l2(const std::vector<Field>& f) {
  double m = 0.0;
  for (const Field& x : f) m = std::max(m, norm(x, Norm::l2));
  return m;
}

// Squared H1 norm helper reused by the table entries.
inline double h1_sq(const Field& f) {
  return inner_product(f, f) + gradient_sq_integral(f);
}

inline double second_order_sq(const Field& f) {
  Field lf = laplacian(f);
  return h1_sq(f) + inner_product(lf, lf);
}

// Uniform-bound table of one state run: discrete versions of the norms that
// stay bounded as beta vanishes.
inline std::map<std::string, double> state_norm_table(const ModelParams& m,
                                                      const StateTrajectory& t) {
  const double tau = m.tau();
  const int N = m.n_steps;
  double dtphi_LinfH = 0.0, dtphi_L2V = 0.0, phi_LinfW = 0.0, phi_LinfQ = 0.0;
  double mu_LinfV = 0.0, mu_L2W = 0.0, sigma_LinfV = 0.0, sigma_L2W = 0.0,
         dtsigma_L2H = 0.0;
  for (int n = 1; n <= N; ++n) {
    Field dphi = t.phi[n] - t.phi[n - 1];
    dphi *= 1.0 / tau;
    dtphi_LinfH = std::max(dtphi_LinfH, norm(dphi, Norm::l2));
    dtphi_L2V += tau * h1_sq(dphi);
    Field dsg = t.sigma[n] - t.sigma[n - 1];
    dsg *= 1.0 / tau;
    dtsigma_L2H += tau * inner_product(dsg, dsg);
    mu_L2W += tau * second_order_sq(t.mu[n]);
    sigma_L2W += tau * second_order_sq(t.sigma[n]);
  }
  for (int n = 0; n <= N; ++n) {
    phi_LinfW = std::max(phi_LinfW, std::sqrt(second_order_sq(t.phi[n])));
    phi_LinfQ = std::max(phi_LinfQ, norm(t.phi[n], Norm::linf));
    mu_LinfV = std::max(mu_LinfV, norm(t.mu[n], Norm::h1));
    sigma_LinfV = std::max(sigma_LinfV, norm(t.sigma[n], Norm::h1));
  }
  std::map<std::string, double> out;
  out["b12_dtphi_LinfH"] = std::sqrt(m.beta) * dtphi_LinfH;
  out["dtphi_L2V"] = std::sqrt(dtphi_L2V);
  out["phi_LinfW"] = phi_LinfW;
  out["phi_LinfQ"] = phi_LinfQ;
  out["mu_LinfV"] = mu_LinfV;
  out["mu_L2W"] = std::sqrt(mu_L2W);
  out["sigma_LinfV"] = sigma_LinfV;
  out["sigma_L2W"] = std::sqrt(sigma_L2W);
  out["dtsigma_L2H"] = std::sqrt(dtsigma_L2H);
  double total = 0.0;
  for (const auto& [k, v] : out) total += v;
  out["total"] = total;
  return out;
}

// Right-endpoint L2(Q) distance between two level sequences.
inline double l2q_gap(double tau, int N, const std::vector<Field>& a,
                      const std::vector<Field>& b) {
  double s = 0.0;
  for (int n = 1; n <= N; ++n) {
    Field d = a[n] - b[n];
    s += tau * inner_product(d, d);
  }
  return std::sqrt(std::max(0.0, s));
}

inline double c0h_gap(int N, const std::vector<Field>& a, const std::vector<Field>& b) {
  double m = 0.0;
  for (int n = 0; n <= N; ++n) {
    Field d = a[n] - b[n];
    m = std::max(m, norm(d, Norm::l2));
  }
  return m;
}

}  // namespace detail

// Solves the relaxed system for every beta in the grid plus the limit system
// once, and tabulates uniform-bound norms together with gaps to the limit.
inline SweepReport sweep_state(const ModelParams& m_template,
                               const std::vector<double>& betas_in,
                               const InitialData& ics, const ControlSteps& u,
                               int threads = 1) {
  std::vector<double> betas = detail::checked_betas(betas_in);

  ModelParams limit_params = m_template;
  limit_params.beta = 0.0;
  StateTrajectory limit = solve_state_limit(limit_params, ics, u);

  SweepReport rep;
  rep.kind = "state";
  rep.limit_values = detail::state_norm_table(limit_params, limit);
  rep.rows.resize(betas.size());
  const double tau = m_template.tau();
  const int N = m_template.n_steps;
  detail::parallel_for(static_cast<int>(betas.size()), threads, [&](int i) {
    ModelParams mp = m_template;
    mp.beta = betas[i];
    StateTrajectory traj = solve_state_beta(mp, ics, u);
    SweepRow row;
    row.beta = betas[i];
    row.values = detail::state_norm_table(mp, traj);
    row.values["gap_phi_C0H"] = detail::c0h_gap(N, traj.phi, limit.phi);
    row.values["gap_mu_L2Q"] = detail::l2q_gap(tau, N, traj.mu, limit.mu);
    row.values["gap_sigma_L2Q"] = detail::l2q_gap(tau, N, traj.sigma, limit.sigma);
    rep.rows[i] = std::move(row);
  });
  return rep;
}

// State + adjoint pair per beta; tabulates the vanishing-multiplier
// diagnostics for q and gaps of p, r against the limit adjoint.
inline SweepReport sweep_adjoint(const ModelParams& m_template,
                                 const std::vector<double>& betas_in,
                                 const ControlProblem& pb, const InitialData& ics,
                                 const ControlSteps& u, int threads = 1) {
  std::vector<double> betas = detail::checked_betas(betas_in);

  ModelParams limit_params = m_template;
  limit_params.beta = 0.0;
  StateTrajectory limit_state = solve_state_limit(limit_params, ics, u);
  AdjointTrajectory limit_adj = solve_adjoint_limit(limit_params, pb, limit_state);

  auto adjoint_table = [](const ModelParams& mp, const AdjointTrajectory& adj) {
    const double tau = mp.tau();
    const int N = mp.n_steps;
    double q_L2Q = 0.0, dtq_L2H = 0.0, q_LinfH = 0.0, p_LinfH = 0.0, r_LinfH = 0.0;
    for (int n = 1; n <= N; ++n) {
      q_L2Q += tau * inner_product(adj.q[n], adj.q[n]);
      Field dq = adj.q[n] - adj.q[n - 1];
      dq *= 1.0 / tau;
      dtq_L2H += tau * inner_product(dq, dq);
    }
    q_LinfH = detail::linf_in_time_l2(adj.q);
    p_LinfH = detail::linf_in_time_l2(adj.p);
    r_LinfH = detail::linf_in_time_l2(adj.r);
    std::map<std::string, double> out;
    out["q_L2Q"] = std::sqrt(q_L2Q);
    out["bq_L2Q"] = mp.beta * std::sqrt(q_L2Q);
    out["b_dtq_L2H"] = mp.beta * std::sqrt(dtq_L2H);
    out["b12_q_LinfH"] = std::sqrt(mp.beta) * q_LinfH;
    out["p_LinfH"] = p_LinfH;
    out["r_LinfH"] = r_LinfH;
    return out;
  };

  SweepReport rep;
  rep.kind = "adjoint";
  rep.limit_values = adjoint_table(limit_params, limit_adj);
  rep.rows.resize(betas.size());
  const double tau = m_template.tau();
  const int N = m_template.n_steps;
  detail::parallel_for(static_cast<int>(betas.size()), threads, [&](int i) {
    ModelParams mp = m_template;
    mp.beta = betas[i];
    StateTrajectory traj = solve_state_beta(mp, ics, u);
    AdjointTrajectory adj = solve_adjoint_beta(mp, pb, traj);
    SweepRow row;
    row.beta = betas[i];
    row.values = adjoint_table(mp, adj);
    row.values["gap_p_L2Q"] = detail::l2q_gap(tau, N, adj.p, limit_adj.p);
    row.values["gap_r_L2Q"] = detail::l2q_gap(tau, N, adj.r, limit_adj.r);
    row.values["gap_p_C0H"] = detail::c0h_gap(N, adj.p, limit_adj.p);
    rep.rows[i] = std::move(row);
  });
  return rep;
}

// Minimizes the adapted cost (proximal to the limit minimizer u_bar) for each
// beta, reporting how the relaxed minimizers approach u_bar and how the
// adapted optimal values approach the limit cost.
inline SweepReport sweep_optimal_controls(const ModelParams& m_template,
                                          const std::vector<double>& betas_in,
                                          const ControlProblem& pb,
                                          const InitialData& ics,
                                          const ControlSteps& u_bar,
                                          const OptimizeOptions& opt_in = {},
                                          int threads = 1) {
  std::vector<double> betas = detail::checked_betas(betas_in);

  ModelParams limit_params = m_template;
  limit_params.beta = 0.0;
  StateTrajectory limit_state = solve_state_limit(limit_params, ics, u_bar);
  const double limit_cost = evaluate_cost(limit_params, pb, limit_state, u_bar);

  SweepReport rep;
  rep.kind = "control";
  rep.limit_values["cost"] = limit_cost;
  rep.rows.resize(betas.size());
  detail::parallel_for(static_cast<int>(betas.size()), threads, [&](int i) {
    ModelParams mp = m_template;
    mp.beta = betas[i];
    OptimizeOptions opt = opt_in;
    opt.adapted_ref = &u_bar;
    OptimizeResult res = optimize_projected_gradient(mp, pb, ics, u_bar, opt);
    ControlSteps diff = res.u;
    for (size_t k = 0; k < diff.size(); ++k) diff[k] -= u_bar[k];
    SweepRow row;
    row.beta = betas[i];
    row.values["gap_u_L2Q"] = l2q_norm(mp, diff);
    row.values["adapted_cost"] = res.report.final_cost;
    row.values["cost_gap"] = std::abs(res.report.final_cost - limit_cost);
    row.values["stationarity"] = res.report.final_stationarity;
    row.values["converged"] = res.report.converged ? 1.0 : 0.0;
    rep.rows[i] = std::move(row);
  });
  return rep;
}

}  // namespace phasectl
