#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "phasectl/errors.hpp"

namespace phasectl {

// Uniform tensor grid on [0, extent]^dim (dim 1 or 2) with nodes at the cell
// corners, spacing h = extent/(n-1).  Homogeneous Neumann boundaries are
// realized by mirrored ghost nodes in the Laplacian stencil.
struct Grid {
  int dim = 1;
  int n = 2;  // points per axis
  double extent = 1.0;
  double h = 1.0;

  int points() const { return dim == 2 ? n * n : n; }
  double cell_volume() const { return dim == 2 ? h * h : h; }

  // node index -> (x, y); y is 0 in 1D
  std::array<double, 2> coord(int idx) const {
    if (dim == 1) return {h * idx, 0.0};
    return {h * (idx % n), h * (idx / n)};
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

inline constexpr int kDefaultMaxGridPoints = 1 << 20;

inline Grid build_grid(int dim, int n, double extent,
                       int max_points = kDefaultMaxGridPoints) {
  if (dim != 1 && dim != 2)
    throw ValidationError("grid: dim must be 1 or 2, got " + std::to_string(dim));
  if (n < 2)
    throw ValidationError("grid: need at least 2 points per axis, got " +
                          std::to_string(n));
  if (!std::isfinite(extent) || extent <= 0.0)
    throw ValidationError("grid: extent must be positive and finite");
  const long long pts = dim == 2 ? 1LL * n * n : n;
  if (pts > max_points)
    throw ValidationError("grid: " + std::to_string(pts) +
                          " points exceed the cap of " + std::to_string(max_points));
  Grid g;
  g.dim = dim;
  g.n = n;
  g.extent = extent;
  g.h = extent / (n - 1);
  return g;
}

// Scalar nodal field.  Carries its grid by value (a Grid is a few numbers),
// so fields are plain value types.
struct Field {
  Grid grid;
  std::vector<double> v;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), v(g.points(), fill) {}
  Field(const Grid& g, std::vector<double> values) : grid(g), v(std::move(values)) {
    if (static_cast<int>(v.size()) != grid.points())
      throw ValidationError("field: value count does not match grid");
  }

  int size() const { return static_cast<int>(v.size()); }
  double& operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }

  Field& operator+=(const Field& o) {
    for (int i = 0; i < size(); ++i) v[i] += o.v[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    for (int i = 0; i < size(); ++i) v[i] -= o.v[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (double& x : v) x *= s;
    return *this;
  }
};

inline void require_same_grid(const Field& a, const Field& b, const char* what) {
  if (!(a.grid == b.grid))
    throw ValidationError(std::string(what) + ": fields live on different grids");
}

inline bool all_finite(const Field& f) {
  for (double x : f.v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(const Field& f, const char* what) {
  if (!all_finite(f))
    throw ValidationError(std::string(what) + ": field contains NaN or Inf");
}

// y += a * x
inline void axpy(Field& y, double a, const Field& x) {
  for (int i = 0; i < y.size(); ++i) y.v[i] += a * x.v[i];
}

inline Field operator+(Field a, const Field& b) { a += b; return a; }
inline Field operator-(Field a, const Field& b) { a -= b; return a; }
inline Field operator*(double s, Field a) { a *= s; return a; }

template <class Fn>
Field map_field(const Field& f, Fn&& fn) {
  Field out(f.grid);
  for (int i = 0; i < f.size(); ++i) out.v[i] = fn(f.v[i]);
  return out;
}

// --- trapezoidal quadrature -------------------------------------------------

// weight of node idx as a multiple of h^dim: 1 inside, 1/2 on faces, 1/4 on
// 2D corners
inline double quad_weight(const Grid& g, int idx) {
  auto edge = [&](int k) { return (k == 0 || k == g.n - 1) ? 0.5 : 1.0; };
  double w = edge(g.dim == 2 ? idx % g.n : idx);
  if (g.dim == 2) w *= edge(idx / g.n);
  return w;
}

inline double integrate(const Field& f) {
  double s = 0.0;
  for (int i = 0; i < f.size(); ++i) s += quad_weight(f.grid, i) * f.v[i];
  return f.grid.cell_volume() * s;
}

// L2 pairing under the same trapezoidal weights; this is the inner product in
// which the mirrored Laplacian below is self-adjoint.
inline double inner_product(const Field& a, const Field& b) {
  require_same_grid(a, b, "inner_product");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += quad_weight(a.grid, i) * a.v[i] * b.v[i];
  return a.grid.cell_volume() * s;
}

// --- mirrored Neumann Laplacian ----------------------------------------------

// Visits the (column, weight) entries of the Laplacian stencil row at node
// idx.  Ghost values outside the boundary are mirrored (v[-1] = v[1]), which
// keeps every row sum exactly zero and the operator self-adjoint under the
// trapezoidal weights.
template <class Visit>
void laplacian_stencil(const Grid& g, int idx, Visit&& visit) {
  const double ih2 = 1.0 / (g.h * g.h);
  auto axis = [&](int k, int stride, int base) {
    if (k == 0) {
      visit(base + stride, 2.0 * ih2);
      visit(base, -2.0 * ih2);
    } else if (k == g.n - 1) {
      visit(base - stride, 2.0 * ih2);
      visit(base, -2.0 * ih2);
    } else {
      visit(base - stride, ih2);
      visit(base, -2.0 * ih2);
      visit(base + stride, ih2);
    }
  };
  if (g.dim == 1) {
    axis(idx, 1, idx);
  } else {
    axis(idx % g.n, 1, idx);      // x sweep
    axis(idx / g.n, g.n, idx);    // y sweep
  }
}

inline void laplacian_apply(const Field& in, Field& out) {
  require_same_grid(in, out, "laplacian_apply");
  for (int i = 0; i < in.size(); ++i) {
    double acc = 0.0;
    laplacian_stencil(in.grid, i, [&](int j, double w) { acc += w * in.v[j]; });
    out.v[i] = acc;
  }
}

inline Field laplacian(const Field& in) {
  Field out(in.grid);
  laplacian_apply(in, out);
  return out;
}

// --- norms -------------------------------------------------------------------

// Integral of |grad f|^2 using forward differences: each difference lives on a
// cell edge and is weighted by h along its own axis and by the trapezoidal
// weight transversally, so a unit slope integrates exactly to the domain size.
inline double gradient_sq_integral(const Field& f) {
  const Grid& g = f.grid;
  const double ih = 1.0 / g.h;
  double total = 0.0;
  auto edge = [&](int k) { return (k == 0 || k == g.n - 1) ? 0.5 : 1.0; };
  if (g.dim == 1) {
    for (int i = 0; i + 1 < g.n; ++i) {
      const double d = (f.v[i + 1] - f.v[i]) * ih;
      total += d * d * g.h;
    }
    return total;
  }
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix + 1 < g.n; ++ix) {
      const double d = (f.v[iy * g.n + ix + 1] - f.v[iy * g.n + ix]) * ih;
      total += d * d * g.h * g.h * edge(iy);
    }
  for (int iy = 0; iy + 1 < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      const double d = (f.v[(iy + 1) * g.n + ix] - f.v[iy * g.n + ix]) * ih;
      total += d * d * g.h * g.h * edge(ix);
    }
  return total;
}

enum class Norm { l2, linf, h1 };

inline double norm(const Field& f, Norm kind = Norm::l2) {
  switch (kind) {
    case Norm::l2:
      return std::sqrt(std::max(0.0, inner_product(f, f)));
    case Norm::linf: {
      double m = 0.0;
      for (double x : f.v) m = std::max(m, std::abs(x));
      return m;
    }
    case Norm::h1:
      return std::sqrt(std::max(0.0, inner_product(f, f) + gradient_sq_integral(f)));
  }
  return 0.0;
}

}  // namespace phasectl
