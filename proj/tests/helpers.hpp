#pragma once

// Shared fixtures: smooth random fields, ready-made model instances.

#include <random>

#include "phasectl/control.hpp"
#include "phasectl/model.hpp"
#include "phasectl/problem.hpp"

namespace testutil {

using namespace phasectl;

// Smooth Neumann-compatible field: random combination of low cosine modes.
inline Field smooth_field(const Grid& g, std::mt19937_64& rng,
                          double amplitude = 0.5, int max_mode = 3,
                          double offset = 0.0) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  std::vector<double> cx(max_mode + 1), cy(max_mode + 1);
  for (auto& c : cx) c = coef(rng);
  for (auto& c : cy) c = coef(rng);
  Field f(g, offset);
  for (int i = 0; i < g.points(); ++i) {
    const auto xy = g.coord(i);
    double v = 0.0;
    for (int k = 1; k <= max_mode; ++k) {
      double term = cx[k] * std::cos(k * std::numbers::pi * xy[0] / g.extent);
      if (g.dim == 2)
        term += cy[k] * std::cos(k * std::numbers::pi * xy[1] / g.extent);
      v += term / (k * k);
    }
    f.v[i] += amplitude * v;
  }
  return f;
}

inline ModelParams model_1d(int n, int steps, double t_final, double alpha,
                            double beta, double prolif_rate = 0.5) {
  ModelParams m;
  m.alpha = alpha;
  m.beta = beta;
  m.potential = regular_quartic();
  m.prolif = prolif_constant(prolif_rate);
  m.grid = build_grid(1, n, 1.0);
  m.t_final = t_final;
  m.n_steps = steps;
  return m;
}

inline InitialData smooth_ics(const ModelParams& m, unsigned long long seed,
                              double amplitude = 0.4) {
  std::mt19937_64 rng(seed);
  InitialData ics;
  ics.phi0 = smooth_field(m.grid, rng, amplitude);
  Field lap = laplacian(ics.phi0);
  ics.mu0 = Field(m.grid);
  for (int i = 0; i < m.grid.points(); ++i)
    ics.mu0.v[i] = -lap.v[i] + eval_fp(m.potential, ics.phi0.v[i]);
  ics.sigma0 = smooth_field(m.grid, rng, amplitude, 2, 0.3);
  return ics;
}

inline InitialData constant_ics(const Grid& g, double phi, double mu,
                                double sigma) {
  InitialData ics;
  ics.phi0 = Field(g, phi);
  ics.mu0 = Field(g, mu);
  ics.sigma0 = Field(g, sigma);
  return ics;
}

inline ControlSteps zero_control(const ModelParams& m) {
  return ControlSteps(m.n_steps, Field(m.grid));
}

inline ControlSteps constant_control(const ModelParams& m, double value) {
  return ControlSteps(m.n_steps, Field(m.grid, value));
}

// Time-constant tracking problem with constant box bounds.
inline ControlProblem constant_problem(const ModelParams& m, double b0,
                                       double b1, double b2, double b3,
                                       double phi_q, double sigma_q,
                                       double sigma_fin, double lo, double hi) {
  ControlProblem pb;
  pb.b0 = b0;
  pb.b1 = b1;
  pb.b2 = b2;
  pb.b3 = b3;
  pb.phi_target = TargetTrajectory::constant(Field(m.grid, phi_q));
  pb.sigma_target = TargetTrajectory::constant(Field(m.grid, sigma_q));
  pb.sigma_final_target = Field(m.grid, sigma_fin);
  pb.u_lower = Field(m.grid, lo);
  pb.u_upper = Field(m.grid, hi);
  return pb;
}

}  // namespace testutil
