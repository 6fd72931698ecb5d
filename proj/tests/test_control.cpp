#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "phasectl/control.hpp"

#include "helpers.hpp"

using namespace phasectl;
using namespace testutil;
using Catch::Approx;

namespace {

StateTrajectory fabricated_state(const ModelParams& m, double phi, double mu,
                                 double sigma) {
  StateTrajectory t;
  for (int n = 0; n <= m.n_steps; ++n) {
    t.times.push_back(n * m.tau());
    t.phi.push_back(Field(m.grid, phi));
    t.mu.push_back(Field(m.grid, mu));
    t.sigma.push_back(Field(m.grid, sigma));
  }
  return t;
}

AdjointTrajectory fabricated_adjoint(const ModelParams& m, double r_value) {
  AdjointTrajectory adj;
  for (int n = 0; n <= m.n_steps; ++n) {
    adj.times.push_back(n * m.tau());
    adj.p.push_back(Field(m.grid));
    adj.q.push_back(Field(m.grid));
    adj.r.push_back(Field(m.grid, r_value));
  }
  return adj;
}

// Nutrient-steering problem whose reduced gradient is exact: no proliferation
// and no damping, so sigma(T) = sigma0 + integral of u and the backward sweep
// carries the terminal misfit verbatim.
struct SteeringCase {
  ModelParams m;
  InitialData ics;
  ControlProblem pb;
  double u_best;  // minimizer of b3/2 (u T - 0.3)^2 + b0/2 u^2 T over constants
};

SteeringCase steering_case() {
  SteeringCase c{model_1d(9, 25, 1.0, 0.1, 0.0, 0.0),
                 {},
                 {},
                 0.3 * 1.0 / (1.0 + 0.2)};
  c.ics = constant_ics(c.m.grid, 0.2, eval_fp(c.m.potential, 0.2), 0.4);
  c.pb = constant_problem(c.m, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.7, -1.0, 1.0);
  return c;
}

}  // namespace

TEST_CASE("cost closed forms on constant data") {
  ModelParams m = model_1d(9, 10, 1.0, 0.1, 0.02);

  SECTION("all-zero data costs nothing") {
    const StateTrajectory traj = fabricated_state(m, 0.0, 0.0, 0.0);
    const ControlProblem pb = constant_problem(m, 1.0, 1.0, 1.0, 1.0,
                                               0.0, 0.0, 0.0, -1.0, 1.0);
    CHECK(evaluate_cost(m, pb, traj, zero_control(m)) == 0.0);
  }

  SECTION("matched tracking leaves only the control energy") {
    const StateTrajectory traj = fabricated_state(m, 0.3, 0.0, -0.1);
    const ControlProblem pb = constant_problem(m, 2.0, 1.0, 1.0, 1.0,
                                               0.3, -0.1, -0.1, -1.0, 1.0);
    const double c = 0.45;
    CHECK(evaluate_cost(m, pb, traj, constant_control(m, c)) ==
          Approx(c * c).margin(1e-12));
  }

  SECTION("constant mismatch sums the four quadratic terms") {
    const double a = 0.4, s = -0.2, c = 0.1;
    const double b0 = 0.7, b1 = 1.3, b2 = 0.5, b3 = 2.0;
    const StateTrajectory traj = fabricated_state(m, a, 0.0, s);
    const ControlProblem pb = constant_problem(m, b0, b1, b2, b3,
                                               0.0, 0.0, 0.0, -1.0, 1.0);
    const double expected =
        0.5 * (b1 * a * a + b2 * s * s + b0 * c * c + b3 * s * s);
    CHECK(evaluate_cost(m, pb, traj, constant_control(m, c)) ==
          Approx(expected).margin(1e-12));
  }

  SECTION("trajectory and control sizes are enforced") {
    StateTrajectory traj = fabricated_state(m, 0.0, 0.0, 0.0);
    const ControlProblem pb = constant_problem(m, 1.0, 1.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, -1.0, 1.0);
    ControlSteps u = zero_control(m);
    u.pop_back();
    CHECK_THROWS_AS(evaluate_cost(m, pb, traj, u), ValidationError);
    traj.phi.pop_back();
    traj.times.pop_back();
    CHECK_THROWS_AS(evaluate_cost(m, pb, traj, zero_control(m)),
                    ValidationError);
  }
}

TEST_CASE("adapted cost adds half the squared distance to the reference") {
  ModelParams m = model_1d(17, 12, 1.0, 0.1, 0.02);
  const StateTrajectory traj = fabricated_state(m, 0.2, 0.0, 0.1);
  const ControlProblem pb = constant_problem(m, 1.0, 0.8, 0.0, 0.5,
                                             0.0, 0.0, 0.0, -2.0, 2.0);

  std::mt19937_64 rng(29);
  ControlSteps u, u_ref;
  for (int k = 0; k < m.n_steps; ++k) {
    u.push_back(smooth_field(m.grid, rng, 0.7));
    u_ref.push_back(smooth_field(m.grid, rng, 0.7));
  }

  const double plain = evaluate_cost(m, pb, traj, u);
  CHECK(evaluate_adapted_cost(m, pb, traj, u, u) == Approx(plain).margin(1e-14));

  ControlSteps diff = u;
  for (int k = 0; k < m.n_steps; ++k) diff[k] -= u_ref[k];
  const double half_dist = 0.5 * l2q_inner(m, diff, diff);
  CHECK(evaluate_adapted_cost(m, pb, traj, u, u_ref) ==
        Approx(plain + half_dist).margin(1e-12));

  // unit distance example: zero data, reference zero, control one
  const StateTrajectory zeros = fabricated_state(m, 0.0, 0.0, 0.0);
  const ControlProblem only_b1 = constant_problem(m, 0.0, 1.0, 0.0, 0.0,
                                                  0.0, 0.0, 0.0, -2.0, 2.0);
  CHECK(evaluate_adapted_cost(m, only_b1, zeros, constant_control(m, 1.0),
                              zero_control(m)) == Approx(0.5).margin(1e-12));
}

TEST_CASE("reduced gradient composes the multiplier and the control energy") {
  ModelParams m = model_1d(9, 8, 1.0, 0.1, 0.02);
  const AdjointTrajectory adj = fabricated_adjoint(m, 0.3);
  ControlProblem pb = constant_problem(m, 0.6, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                                       -1.0, 1.0);
  const ControlSteps u = constant_control(m, 0.5);
  const ControlSteps g = reduced_gradient(m, pb, adj, u);
  REQUIRE(static_cast<int>(g.size()) == m.n_steps);
  for (const Field& f : g)
    for (double v : f.v) CHECK(v == Approx(0.3 + 0.6 * 0.5).margin(1e-14));

  // adapted variant appends (u - u_ref)
  const ControlSteps u_ref = constant_control(m, 0.1);
  const ControlSteps ga = reduced_gradient(m, pb, adj, u, &u_ref);
  for (const Field& f : ga)
    for (double v : f.v)
      CHECK(v == Approx(0.3 + 0.6 * 0.5 + (0.5 - 0.1)).margin(1e-14));
}

TEST_CASE("box projection clamps componentwise") {
  const Grid g = build_grid(1, 5, 1.0);
  Field lo(g, -1.0), hi(g, 1.0), u(g);
  u.v = {-2.0, 0.5, 3.0, -1.0, 1.0};
  const Field p = project_box(u, lo, hi);
  CHECK(p.v == std::vector<double>{-1.0, 0.5, 1.0, -1.0, 1.0});
  const Field pp = project_box(p, lo, hi);
  for (int i = 0; i < g.points(); ++i) CHECK(pp.v[i] == p.v[i]);

  Field bad_hi(build_grid(1, 9, 1.0), 1.0);
  CHECK_THROWS_AS(project_box(u, lo, bad_hi), ValidationError);
}

TEST_CASE("stationarity residual measures the projected gradient step") {
  ModelParams m = model_1d(9, 10, 1.0, 0.1, 0.02);

  SECTION("interior point: residual equals the gradient norm") {
    const ControlProblem pb = constant_problem(m, 1.0, 1.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, -10.0, 10.0);
    const ControlSteps u = constant_control(m, 0.3);
    const ControlSteps g = constant_control(m, 0.2);
    CHECK(stationarity_residual(m, pb, u, g) == Approx(0.2).margin(1e-12));
  }

  SECTION("ascent direction pinned at the active bound is stationary") {
    const ControlProblem pb = constant_problem(m, 1.0, 1.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, 0.0, 0.3);
    const ControlSteps u = constant_control(m, 0.3);
    const ControlSteps g = constant_control(m, -0.2);  // wants to increase u
    CHECK(stationarity_residual(m, pb, u, g) == Approx(0.0).margin(1e-14));

    const ControlSteps g_desc = constant_control(m, 0.2);
    CHECK(stationarity_residual(m, pb, u, g_desc) == Approx(0.2).margin(1e-12));
  }
}

TEST_CASE("pure control-energy descent drives the control to the projected zero") {
  SECTION("interior minimizer") {
    ModelParams m = model_1d(9, 10, 0.5, 0.1, 0.0, 0.0);
    const InitialData ics = constant_ics(m.grid, 0.0, 0.0, 0.0);
    const ControlProblem pb = constant_problem(m, 1.0, 0.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, -1.0, 1.0);
    const OptimizeResult res = optimize_projected_gradient(
        m, pb, ics, constant_control(m, 0.7));
    CHECK(res.report.converged);
    for (const Field& f : res.u) CHECK(norm(f, Norm::linf) <= 1e-5);
  }

  SECTION("minimizer pinned at the lower bound") {
    ModelParams m = model_1d(9, 10, 0.5, 0.1, 0.0, 0.0);
    const InitialData ics = constant_ics(m.grid, 0.0, 0.0, 0.0);
    const ControlProblem pb = constant_problem(m, 1.0, 0.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, 0.5, 1.0);
    const OptimizeResult res = optimize_projected_gradient(
        m, pb, ics, constant_control(m, 0.9));
    CHECK(res.report.converged);
    for (const Field& f : res.u)
      CHECK(norm(f - Field(m.grid, 0.5), Norm::linf) <= 1e-9);

    const ViReport vi = check_variational_inequality(m, pb, res.adjoint, res.u);
    CHECK(vi.min_pairing >= -1e-12);
    CHECK(vi.complementarity_violations == 0);
  }
}

TEST_CASE("nutrient steering reaches the closed-form optimum") {
  const SteeringCase c = steering_case();
  OptimizeOptions opt;
  opt.tol = 1e-7;
  const OptimizeResult res =
      optimize_projected_gradient(c.m, c.pb, c.ics, zero_control(c.m), opt);

  CHECK(res.report.converged);
  CHECK(res.report.final_stationarity <= 1e-7);
  for (const Field& f : res.u)
    CHECK(norm(f - Field(c.m.grid, c.u_best), Norm::linf) <= 1e-6);

  // J(u*) = b3/2 (0.25 - 0.3)^2 + b0/2 (0.25)^2
  CHECK(res.report.final_cost == Approx(0.0075).margin(1e-8));

  // the descent beats the generating control
  const StateTrajectory gen = solve_state_limit(c.m, c.ics, constant_control(c.m, 0.3));
  CHECK(res.report.final_cost <
        evaluate_cost(c.m, c.pb, gen, constant_control(c.m, 0.3)));

  // cost history is monotone and the solver count is consistent
  for (size_t i = 1; i < res.report.history.size(); ++i)
    CHECK(res.report.history[i].cost <= res.report.history[i - 1].cost + 1e-15);
  CHECK(res.report.forward_solves >
        static_cast<int>(res.report.history.size()) - 1);
}

TEST_CASE("variational inequality sampling at and away from the optimum") {
  const SteeringCase c = steering_case();
  OptimizeOptions opt;
  opt.tol = 1e-7;
  const OptimizeResult res =
      optimize_projected_gradient(c.m, c.pb, c.ics, zero_control(c.m), opt);

  SECTION("pairings at the interior optimum hover around zero") {
    const ViReport vi = check_variational_inequality(c.m, c.pb, res.adjoint, res.u);
    CHECK(vi.samples == 102);  // 100 random draws plus both box extremes
    CHECK(vi.min_pairing >= -1e-6);
    CHECK(vi.gradient_sup <= 1e-5);
  }

  SECTION("a non-optimal control is flagged by a negative pairing") {
    const ControlSteps bad = constant_control(c.m, 0.8);
    const StateTrajectory traj = solve_state_limit(c.m, c.ics, bad);
    const AdjointTrajectory adj = solve_adjoint_limit(c.m, c.pb, traj);
    const ViReport vi = check_variational_inequality(c.m, c.pb, adj, bad);
    CHECK(vi.min_pairing < -1e-3);
    // gradient positive everywhere, control strictly inside the box
    CHECK(vi.complementarity_violations ==
          c.m.n_steps * c.m.grid.points());
  }
}

TEST_CASE("finite differences confirm the gradient") {
  SECTION("quadratic control energy is matched to machine precision") {
    ModelParams m = model_1d(9, 10, 0.5, 0.1, 0.0, 0.0);
    const InitialData ics = constant_ics(m.grid, 0.0, 0.0, 0.0);
    const ControlProblem pb = constant_problem(m, 1.5, 0.0, 0.0, 0.0,
                                               0.0, 0.0, 0.0, -1.0, 1.0);
    const FdCheckReport rep =
        fd_gradient_check(m, pb, ics, constant_control(m, 0.4));
    CHECK(rep.max_rel_error <= 1e-8);
  }

  SECTION("full tracking problem agrees to first order in the step") {
    for (double beta : {0.02, 0.0}) {
      auto median_at = [&](int steps) {
        ModelParams m = model_1d(17, steps, 0.1, 0.1, beta, 0.6);
        const InitialData ics = smooth_ics(m, 31);
        const ControlProblem pb = constant_problem(m, 0.5, 1.0, 0.3, 0.8,
                                                   0.1, 0.2, 0.3, -1.0, 1.0);
        std::mt19937_64 rng(37);
        ControlSteps u;
        for (int k = 0; k < m.n_steps; ++k)
          u.push_back(smooth_field(m.grid, rng, 0.5));
        FdCheckOptions opt;
        opt.n_directions = 3;
        const FdCheckReport rep = fd_gradient_check(m, pb, ics, u, opt);
        REQUIRE(rep.rel_errors.size() == 3);
        CHECK(rep.median_rel_error <= rep.max_rel_error);
        return rep.median_rel_error;
      };
      const double coarse = median_at(20), fine = median_at(40);
      CHECK(coarse <= 0.03);
      CHECK(fine <= 0.015);
      CHECK(fine < coarse);
    }
  }
}

TEST_CASE("optimizer input validation") {
  const SteeringCase c = steering_case();
  ControlSteps u0 = zero_control(c.m);
  u0.pop_back();
  CHECK_THROWS_AS(optimize_projected_gradient(c.m, c.pb, c.ics, u0),
                  ValidationError);

  ControlProblem bad = c.pb;
  bad.u_lower = Field(c.m.grid, 2.0);  // crosses u_upper = 1
  CHECK_THROWS_AS(
      optimize_projected_gradient(c.m, bad, c.ics, zero_control(c.m)),
      ValidationError);
}
