#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"

namespace phasectl {

// Matrix-free linear operator on nodal fields.
struct LinearOperatorSpec {
  std::function<void(const Field&, Field&)> apply;
  bool symmetric = true;              // self-adjoint under the trapezoidal pairing
  std::optional<Field> jacobi_diagonal;  // enables diagonal preconditioning
};

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradients in the trapezoidal inner product (the operators built on
// the mirrored stencil are self-adjoint in that pairing, not the Euclidean
// one).  Stops at ||b - Ax|| <= tol * ||b||, or at absolute tol when b = 0.
inline Field solve_spd(const LinearOperatorSpec& op, const Field& b,
                       const Field& x0, double tol = 1e-10, int max_iter = 0,
                       CgReport* report = nullptr) {
  require_same_grid(b, x0, "solve_spd");
  if (!op.apply) throw ValidationError("solve_spd: operator has no apply callback");
  if (!op.symmetric)
    throw ValidationError("solve_spd: operator is declared non-symmetric");
  if (max_iter <= 0) max_iter = 20 * b.size() + 50;

#ifndef NDEBUG
  {
    // cheap positivity probe on a fixed pseudo-random direction
    Field probe(b.grid), img(b.grid);
    unsigned long long s = 0x243f6a8885a308d3ull;
    for (int i = 0; i < probe.size(); ++i) {
      s = s * 6364136223846793005ull + 1442695040888963407ull;
      probe.v[i] = static_cast<double>((s >> 11) & 0xffff) / 65536.0 - 0.5;
    }
    op.apply(probe, img);
    if (!(inner_product(img, probe) > 0.0))
      throw SolverError("solve_spd: operator failed the positivity probe");
  }
#endif

  const bool jacobi = op.jacobi_diagonal.has_value();
  if (jacobi) {
    for (double d : op.jacobi_diagonal->v)
      if (!(d > 0.0))
        throw ValidationError("solve_spd: Jacobi diagonal must be strictly positive");
  }

  Field x = x0;
  Field r(b.grid), Ap(b.grid);
  op.apply(x, r);
  for (int i = 0; i < r.size(); ++i) r.v[i] = b.v[i] - r.v[i];

  const double norm_b = norm(b, Norm::l2);
  const double target = tol * (norm_b > 0.0 ? norm_b : 1.0);
  double res = norm(r, Norm::l2);
  if (res <= target) {
    if (report) *report = {0, norm_b > 0.0 ? res / norm_b : res};
    return x;
  }

  auto precond = [&](const Field& in) {
    if (!jacobi) return in;
    Field out(in.grid);
    for (int i = 0; i < in.size(); ++i) out.v[i] = in.v[i] / op.jacobi_diagonal->v[i];
    return out;
  };

  Field z = precond(r);
  Field p = z;
  double rz = inner_product(r, z);
  int it = 0;
  for (; it < max_iter; ++it) {
    op.apply(p, Ap);
    const double pAp = inner_product(p, Ap);
    if (!(pAp > 0.0))
      throw SolverError("solve_spd: lost positive definiteness after " +
                        std::to_string(it) + " iterations");
    const double a = rz / pAp;
    axpy(x, a, p);
    axpy(r, -a, Ap);
    res = norm(r, Norm::l2);
    if (res <= target) {
      ++it;
      break;
    }
    z = precond(r);
    const double rz_next = inner_product(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < p.size(); ++i) p.v[i] = z.v[i] + beta * p.v[i];
  }
  if (res > target)
    throw SolverError("solve_spd: no convergence within " + std::to_string(max_iter) +
                      " iterations, residual " + std::to_string(res));
  if (report) *report = {it, norm_b > 0.0 ? res / norm_b : res};
  return x;
}

// --- Newton on stacked fields --------------------------------------------------

using StackedField = std::vector<Field>;

inline double stacked_norm(const StackedField& r) {
  double s = 0.0;
  for (const Field& f : r) {
    const double n = norm(f, Norm::l2);
    s += n * n;
  }
  return std::sqrt(s);
}

inline void stacked_axpy(StackedField& y, double a, const StackedField& x) {
  for (size_t k = 0; k < y.size(); ++k) axpy(y[k], a, x[k]);
}

struct NewtonOptions {
  double tol = 1e-8;
  int max_iterations = 50;
  int max_backtracks = 30;     // halvings per line search
  double decrease_c = 1e-4;    // sufficient-decrease constant on the residual norm
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  int backtracks = 0;
  double residual_norm = 0.0;
};

// Damped Newton: the inner solve callback returns delta with J(x) delta = rhs;
// steps are accepted under an Armijo test on the residual norm.  Reports
// failure through `report` if given, otherwise throws.
inline StackedField newton_solve(
    const std::function<StackedField(const StackedField&)>& residual,
    const std::function<StackedField(const StackedField&, const StackedField&)>&
        solve_linearized,
    StackedField x0, const NewtonOptions& opt = {}, NewtonReport* report = nullptr) {
  StackedField x = std::move(x0);
  StackedField r = residual(x);
  double rn = stacked_norm(r);
  NewtonReport rep;
  rep.residual_norm = rn;

  auto finish = [&](bool ok) -> StackedField {
    rep.converged = ok;
    if (report) *report = rep;
    else if (!ok)
      throw SolverError("newton_solve: no convergence after " +
                        std::to_string(rep.iterations) + " iterations, residual " +
                        std::to_string(rep.residual_norm));
    return x;
  };

  if (rn <= opt.tol) return finish(true);

  for (int it = 0; it < opt.max_iterations; ++it) {
    StackedField rhs = r;
    for (Field& f : rhs) f *= -1.0;
    StackedField delta = solve_linearized(x, rhs);

    double lambda = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      StackedField trial = x;
      stacked_axpy(trial, lambda, delta);
      StackedField rt = residual(trial);
      const double rtn = stacked_norm(rt);
      if (rtn <= (1.0 - opt.decrease_c * lambda) * rn) {
        x = std::move(trial);
        r = std::move(rt);
        rn = rtn;
        accepted = true;
        break;
      }
      lambda *= 0.5;
      ++rep.backtracks;
    }
    rep.iterations = it + 1;
    rep.residual_norm = rn;
    if (!accepted) return finish(false);
    if (rn <= opt.tol) return finish(true);
  }
  return finish(false);
}

// Compares an analytic Jacobian action against central differences of the
// residual, entry by entry.  Meant for small systems in tests.
inline double fd_jacobian_probe(
    const std::function<StackedField(const StackedField&)>& residual,
    const std::function<StackedField(const StackedField&, const StackedField&)>&
        apply_jacobian,
    const StackedField& x, double eps = 1e-6) {
  int total = 0;
  for (const Field& f : x) total += f.size();
  if (total > 64 * static_cast<int>(x.size()))
    throw ValidationError("fd_jacobian_probe: system too large for a dense probe");
  double worst = 0.0;
  for (size_t k = 0; k < x.size(); ++k)
    for (int i = 0; i < x[k].size(); ++i) {
      StackedField e = x;
      for (Field& f : e) f *= 0.0;
      e[k].v[i] = 1.0;
      StackedField je = apply_jacobian(x, e);
      StackedField xp = x, xm = x;
      xp[k].v[i] += eps;
      xm[k].v[i] -= eps;
      StackedField rp = residual(xp), rm = residual(xm);
      for (size_t kk = 0; kk < x.size(); ++kk)
        for (int ii = 0; ii < x[kk].size(); ++ii) {
          const double fd = (rp[kk].v[ii] - rm[kk].v[ii]) / (2.0 * eps);
          worst = std::max(worst, std::abs(fd - je[kk].v[ii]));
        }
    }
  return worst;
}

// --- coupled 3-component linear steps -------------------------------------------

// One (equation, component) block of a coupled operator on three stacked
// fields: scalar * I + diag(field) + lap * (mirrored Laplacian).
struct BlockCoeff {
  double scalar = 0.0;
  const Field* diag = nullptr;
  double lap = 0.0;

  bool empty() const { return scalar == 0.0 && diag == nullptr && lap == 0.0; }
};

using BlockMatrix = std::array<std::array<BlockCoeff, 3>, 3>;

// Assembles the interleaved sparse matrix (unknown ordering: 3*node + comp)
// and solves by sparse LU.  The coupled steps of the time integrators are
// nonsymmetric and, for small beta, indefinite in the phase block, so a direct
// factorization is the reliable choice at this problem scale.
class CoupledStepSolver {
 public:
  CoupledStepSolver(const Grid& grid, const BlockMatrix& blocks) : grid_(grid) {
    const int np = grid.points();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(np) * 15);
    for (int eq = 0; eq < 3; ++eq)
      for (int c = 0; c < 3; ++c) {
        const BlockCoeff& blk = blocks[eq][c];
        if (blk.empty()) continue;
        for (int i = 0; i < np; ++i) {
          const double d = blk.scalar + (blk.diag ? blk.diag->v[i] : 0.0);
          if (d != 0.0) trip.emplace_back(3 * i + eq, 3 * i + c, d);
          if (blk.lap != 0.0)
            laplacian_stencil(grid, i, [&](int j, double w) {
              trip.emplace_back(3 * i + eq, 3 * j + c, blk.lap * w);
            });
        }
      }
    Eigen::SparseMatrix<double> mat(3 * np, 3 * np);
    mat.setFromTriplets(trip.begin(), trip.end());
    lu_.compute(mat);
    ok_ = lu_.info() == Eigen::Success;
  }

  bool factorized() const { return ok_; }

  // Solves for the stacked update given the three right-hand-side fields.
  StackedField solve(const StackedField& rhs) const {
    if (!ok_) throw SolverError("coupled step: singular or failed factorization");
    const int np = grid_.points();
    Eigen::VectorXd b(3 * np);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < np; ++i) b[3 * i + c] = rhs[c].v[i];
    Eigen::VectorXd sol = lu_.solve(b);
    if (lu_.info() != Eigen::Success)
      throw SolverError("coupled step: sparse back-substitution failed");
    StackedField out(3, Field(grid_));
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < np; ++i) out[c].v[i] = sol[3 * i + c];
    for (const Field& f : out)
      if (!all_finite(f)) throw SolverError("coupled step: non-finite solution");
    return out;
  }

 private:
  Grid grid_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool ok_ = false;
};

}  // namespace phasectl
