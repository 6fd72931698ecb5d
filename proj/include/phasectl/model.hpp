#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/potentials.hpp"

namespace phasectl {

// Proliferation coefficient P: smooth, nonnegative, bounded; `bound` and
// `lip` record sup|P| and a Lipschitz constant for diagnostics.
struct ProliferationFn {
  std::string name;
  std::function<double(double)> p, p_prime;
  double bound = 0.0;
  double lip = 0.0;
};

inline ProliferationFn prolif_constant(double p0) {
  if (!(p0 >= 0.0) || !std::isfinite(p0))
    throw ValidationError("proliferation: constant rate must be >= 0");
  ProliferationFn f;
  f.name = "constant";
  f.p = [p0](double) { return p0; };
  f.p_prime = [](double) { return 0.0; };
  f.bound = p0;
  f.lip = 0.0;
  return f;
}

// Gaussian bump p0 * exp(-((r-center)/width)^2): peaks where the phase sits
// near `center`, fading in the pure phases.
inline ProliferationFn prolif_gaussian(double p0, double center, double width) {
  if (!(p0 >= 0.0) || !std::isfinite(p0))
    throw ValidationError("proliferation: peak rate must be >= 0");
  if (!(width > 0.0) || !std::isfinite(width))
    throw ValidationError("proliferation: width must be positive");
  ProliferationFn f;
  f.name = "gaussian";
  f.p = [=](double r) {
    const double z = (r - center) / width;
    return p0 * std::exp(-z * z);
  };
  f.p_prime = [=](double r) {
    const double z = (r - center) / width;
    return p0 * std::exp(-z * z) * (-2.0 * z / width);
  };
  f.bound = p0;
  f.lip = p0 * std::sqrt(2.0) * std::exp(-0.5) / width;  // max of |P'|
  return f;
}

// Parameters of the relaxed system.  alpha > 0 relaxes the chemical
// potential equation, beta >= 0 the phase equation; beta = 0 selects the
// limit scheme in which the chemical potential is algebraic in phi.
struct ModelParams {
  double alpha = 0.1;
  double beta = 0.0;
  Potential potential = regular_quartic();
  ProliferationFn prolif = prolif_constant(0.0);
  Grid grid = build_grid(1, 65, 1.0);
  double t_final = 1.0;
  int n_steps = 100;
  double newton_tol = 1e-8;
  double linear_tol = 1e-10;
  double yosida_eps = 0.0;  // 0 = plain convex part, > 0 = Yosida-regularized

  double tau() const { return t_final / n_steps; }
};

// Hard gates throw; soft regime warnings (sharper thresholds from the
// well-posedness analysis) are returned for the caller to surface.
inline std::vector<std::string> validate_model(const ModelParams& m) {
  if (!(m.alpha > 0.0 && m.alpha < 1.0))
    throw ValidationError("model: alpha must lie in (0, 1), got " +
                          std::to_string(m.alpha));
  if (!(m.alpha * m.potential.l_stab < 1.0))
    throw ValidationError("model: alpha * l_stab = " +
                          std::to_string(m.alpha * m.potential.l_stab) +
                          " must be < 1 for the solvers to apply");
  if (!(m.beta >= 0.0) || !std::isfinite(m.beta))
    throw ValidationError("model: beta must be >= 0");
  if (!(m.t_final > 0.0) || !std::isfinite(m.t_final))
    throw ValidationError("model: t_final must be positive");
  if (m.n_steps < 1)
    throw ValidationError("model: n_steps must be >= 1");
  if (!(m.newton_tol > 0.0) || !(m.linear_tol > 0.0))
    throw ValidationError("model: solver tolerances must be positive");
  if (!(m.yosida_eps >= 0.0) || !std::isfinite(m.yosida_eps))
    throw ValidationError("model: yosida_eps must be >= 0");
  if (!(m.prolif.bound >= 0.0))
    throw ValidationError("model: proliferation bound must be >= 0");

  std::vector<std::string> warnings;
  const double l = m.potential.l_stab;
  const double uniq = std::min(1.0 / l, 1.0 / ((1.0 + l) * (1.0 + l)));
  if (m.alpha >= uniq)
    warnings.push_back("alpha = " + std::to_string(m.alpha) +
                       " is outside the uniqueness regime alpha < " +
                       std::to_string(uniq) + "; results may be non-unique");
  if (m.alpha >= 2.0 / (3.0 * l))
    warnings.push_back("alpha = " + std::to_string(m.alpha) +
                       " is outside the adjoint solvability heuristic alpha < " +
                       std::to_string(2.0 / (3.0 * l)));
  return warnings;
}

// Pointwise first derivative of the (possibly regularized) potential and its
// derivative, switching on yosida_eps.
inline double model_fp(const ModelParams& m, double r) {
  if (m.yosida_eps > 0.0)
    return yosida_b(m.potential, m.yosida_eps, r) + m.potential.pi(r);
  return eval_fp(m.potential, r);
}

inline double model_fpp(const ModelParams& m, double r) {
  if (m.yosida_eps > 0.0)
    return yosida_b_prime(m.potential, m.yosida_eps, r) + m.potential.pi_prime(r);
  return eval_fpp(m.potential, r);
}

struct InitialData {
  Field phi0, mu0, sigma0;
};

// Nodal trajectory: times has n_steps + 1 entries, each field vector one
// entry per time level.
struct StateTrajectory {
  std::vector<double> times;
  std::vector<Field> mu, phi, sigma;

  int levels() const { return static_cast<int>(times.size()); }
};

struct SolveReport {
  int total_newton_iterations = 0;
  int max_newton_iterations = 0;
};

}  // namespace phasectl
