#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "phasectl/errors.hpp"

namespace phasectl {

// Double-well potential F = B_hat + pi_hat split into a convex part B_hat
// (monotone derivative B) and a smooth perturbation pi_hat with bounded
// derivative pi.  l_stab is a lower bound on the curvature of F (F'' >=
// -l_stab); l_lip is sup|pi'|; c_growth bounds |B| <= c_growth * (1 + B_hat).
struct Potential {
  std::string name;
  std::function<double(double)> b_hat, b, b_prime;
  std::function<double(double)> pi_hat, pi, pi_prime;
  double l_stab = 1.0;
  double l_lip = 1.0;
  double c_growth = 2.0;
};

// Classical quartic double well F(r) = (r^2 - 1)^2 / 4 with wells at +-1.
// The convex part keeps the outer branches (|r| >= 1), the perturbation the
// inner ones, so that B is monotone and pi' is bounded by 2.
inline Potential regular_quartic() {
  Potential p;
  p.name = "regular_quartic";
  p.b_hat = [](double r) {
    const double y = r * r - 1.0;
    return y > 0.0 ? 0.25 * y * y : 0.0;
  };
  p.b = [](double r) { return std::abs(r) >= 1.0 ? r * (r * r - 1.0) : 0.0; };
  p.b_prime = [](double r) { return std::abs(r) >= 1.0 ? 3.0 * r * r - 1.0 : 0.0; };
  p.pi_hat = [](double r) {
    const double y = 1.0 - r * r;
    return y > 0.0 ? 0.25 * y * y : 0.0;
  };
  p.pi = [](double r) { return std::abs(r) <= 1.0 ? r * (r * r - 1.0) : 0.0; };
  p.pi_prime = [](double r) { return std::abs(r) < 1.0 ? 3.0 * r * r - 1.0 : 0.0; };
  p.l_stab = 1.0;   // F'' = 3r^2 - 1 >= -1
  p.l_lip = 2.0;    // |pi'| peaks at r = +-1
  p.c_growth = 2.0;
  return p;
}

inline constexpr double kPotentialRange = 1e8;

inline void check_potential_range(double r) {
  if (!(std::abs(r) <= kPotentialRange))
    throw SolverError("potential: argument " + std::to_string(r) +
                      " is outside the evaluation range");
}

inline double eval_f(const Potential& p, double r) {
  check_potential_range(r);
  return p.b_hat(r) + p.pi_hat(r);
}

inline double eval_fp(const Potential& p, double r) {
  check_potential_range(r);
  return p.b(r) + p.pi(r);
}

inline double eval_fpp(const Potential& p, double r) {
  check_potential_range(r);
  return p.b_prime(r) + p.pi_prime(r);
}

// --- Moreau-Yosida regularization of the convex part ----------------------------

// Resolvent of the monotone derivative: the unique s with s + eps*B(s) = r.
// Safeguarded Newton: the iterate is kept inside a sign-aware bracket and
// falls back to bisection whenever Newton leaves it.
inline double yosida_resolvent(const Potential& p, double eps, double r) {
  if (!(eps > 0.0)) throw ValidationError("yosida_resolvent: eps must be positive");
  check_potential_range(r);
  auto g = [&](double s) { return s + eps * p.b(s) - r; };
  double lo = std::min(r, 0.0) - std::abs(r);
  double hi = std::max(r, 0.0) + std::abs(r);
  double glo = g(lo), ghi = g(hi);
  if (glo > 0.0 || ghi < 0.0)
    throw SolverError("yosida_resolvent: bracket failed (non-monotone convex part?)");
  double s = r;  // exact when B vanishes near r
  for (int it = 0; it < 200; ++it) {
    const double gs = g(s);
    if (std::abs(gs) <= 1e-12 * (1.0 + std::abs(r))) return s;
    if (gs > 0.0) hi = s; else lo = s;
    const double slope = 1.0 + eps * p.b_prime(s);
    double next = slope > 0.0 ? s - gs / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    s = next;
    if (hi - lo <= 1e-15 * (1.0 + std::abs(r))) return 0.5 * (lo + hi);
  }
  return s;
}

// Yosida approximation of B: Lipschitz with constant 1/eps, and equal to B
// evaluated at the resolvent point.
inline double yosida_b(const Potential& p, double eps, double r) {
  const double s = yosida_resolvent(p, eps, r);
  return (r - s) / eps;
}

// Moreau envelope of B_hat: inf-convolution value at r, realized at the
// resolvent point.  Always between 0 and B_hat(r), increasing as eps shrinks.
inline double yosida_bhat(const Potential& p, double eps, double r) {
  const double s = yosida_resolvent(p, eps, r);
  const double d = r - s;
  return d * d / (2.0 * eps) + p.b_hat(s);
}

// Derivative of yosida_b in r, via the implicit function rule at the resolvent.
inline double yosida_b_prime(const Potential& p, double eps, double r) {
  const double s = yosida_resolvent(p, eps, r);
  const double bp = p.b_prime(s);
  return bp / (1.0 + eps * bp);
}

}  // namespace phasectl
