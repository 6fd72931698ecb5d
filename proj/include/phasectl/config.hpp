#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "phasectl/control.hpp"
#include "phasectl/csv.hpp"
#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/model.hpp"
#include "phasectl/problem.hpp"
#include "phasectl/state.hpp"

namespace phasectl {

namespace cfg {

using nlohmann::json;

// Checked JSON access that reports full paths ("model.grid.n") in errors.
class View {
 public:
  View(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

  bool has(const char* key) const { return j_->contains(key); }

  View child(const char* key) const {
    if (!j_->is_object())
      throw ValidationError("config: " + path_ + " must be an object");
    if (!j_->contains(key))
      throw ValidationError("config: missing required key " + join(key));
    return View((*j_)[key], join(key));
  }

  std::optional<View> maybe(const char* key) const {
    if (!j_->is_object() || !j_->contains(key)) return std::nullopt;
    return View((*j_)[key], join(key));
  }

  double num() const {
    if (!j_->is_number())
      throw ValidationError("config: " + path_ + " must be a number");
    return j_->get<double>();
  }
  double num(const char* key) const { return child(key).num(); }
  double num_or(const char* key, double fallback) const {
    auto v = maybe(key);
    return v ? v->num() : fallback;
  }

  long long integer() const {
    if (!j_->is_number_integer())
      throw ValidationError("config: " + path_ + " must be an integer");
    return j_->get<long long>();
  }
  long long integer(const char* key) const { return child(key).integer(); }
  long long integer_or(const char* key, long long fallback) const {
    auto v = maybe(key);
    return v ? v->integer() : fallback;
  }

  std::string str() const {
    if (!j_->is_string())
      throw ValidationError("config: " + path_ + " must be a string");
    return j_->get<std::string>();
  }
  std::string str(const char* key) const { return child(key).str(); }
  std::string str_or(const char* key, const std::string& fallback) const {
    auto v = maybe(key);
    return v ? v->str() : fallback;
  }

  std::vector<double> num_array(const char* key) const {
    View v = child(key);
    if (!v.j_->is_array())
      throw ValidationError("config: " + v.path_ + " must be an array");
    std::vector<double> out;
    for (size_t i = 0; i < v.j_->size(); ++i)
      out.push_back(View((*v.j_)[i], v.path_ + "[" + std::to_string(i) + "]").num());
    return out;
  }

  // typo guard: every present key must be in the allowed list
  void allow_keys(std::initializer_list<const char*> keys) const {
    if (!j_->is_object())
      throw ValidationError("config: " + path_ + " must be an object");
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : keys)
        if (k == a) { ok = true; break; }
      if (!ok)
        throw ValidationError("config: unknown key " + join(k.c_str()));
    }
  }

 private:
  std::string join(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  const json* j_;
  std::string path_;
};

}  // namespace cfg

// --- spatial field specifications ------------------------------------------------

// Evaluates a field specification on a grid.  Accepted forms:
//   2.5                                      constant shorthand
//   {"constant": c}
//   {"expr": "gaussian", "amplitude", "center": [...], "width", "offset"?}
//   {"expr": "cosine", "amplitude", "modes": [...], "offset"?}
//   {"expr": "tanh_interface", "center", "width", "axis"?, "lo"?, "hi"?}
//   {"file": "field.csv"}                    columns x[,y],value in node order
inline Field eval_field_spec(const cfg::View& spec, const Grid& g,
                             const std::filesystem::path& base_dir = {});

namespace detail {

inline void check_coords(const Grid& g, int row, double x, double y,
                         const std::string& where) {
  const auto c = g.coord(row);
  const double tol = 1e-9 * std::max(1.0, g.extent);
  if (std::abs(c[0] - x) > tol || (g.dim == 2 && std::abs(c[1] - y) > tol))
    throw ValidationError(where + ": row " + std::to_string(row) +
                          " coordinates do not match the grid");
}

inline Field read_field_csv(const std::filesystem::path& path, const Grid& g) {
  CsvTable t = read_csv(path);
  const int xcol = t.column("x");
  const int ycol = g.dim == 2 ? t.column("y") : -1;
  const int vcol = t.column("value");
  if (static_cast<int>(t.rows.size()) != g.points())
    throw ValidationError("field file " + path.string() + ": " +
                          std::to_string(t.rows.size()) + " rows, expected " +
                          std::to_string(g.points()));
  Field f(g);
  for (int i = 0; i < g.points(); ++i) {
    const auto& row = t.rows[i];
    check_coords(g, i, row[xcol], ycol >= 0 ? row[ycol] : 0.0, path.string());
    f.v[i] = row[vcol];
  }
  require_finite(f, "field file");
  return f;
}

}  // namespace detail

inline Field eval_field_spec(const cfg::View& spec, const Grid& g,
                             const std::filesystem::path& base_dir) {
  if (spec.raw().is_number()) return Field(g, spec.num());
  if (!spec.raw().is_object())
    throw ValidationError("config: " + spec.path() +
                          " must be a number or an object");
  if (spec.has("constant")) {
    spec.allow_keys({"constant"});
    return Field(g, spec.num("constant"));
  }
  if (spec.has("file")) {
    spec.allow_keys({"file"});
    std::filesystem::path p = spec.str("file");
    if (p.is_relative()) p = base_dir / p;
    return detail::read_field_csv(p, g);
  }
  if (!spec.has("expr"))
    throw ValidationError("config: " + spec.path() +
                          " needs one of: constant, expr, file");

  const std::string kind = spec.str("expr");
  Field f(g);
  if (kind == "gaussian") {
    spec.allow_keys({"expr", "amplitude", "center", "width", "offset"});
    const double a = spec.num("amplitude");
    const double w = spec.num("width");
    const double off = spec.num_or("offset", 0.0);
    if (!(w > 0.0))
      throw ValidationError("config: " + spec.path() + ".width must be positive");
    std::vector<double> c = spec.num_array("center");
    if (static_cast<int>(c.size()) != g.dim)
      throw ValidationError("config: " + spec.path() + ".center must have " +
                            std::to_string(g.dim) + " entries");
    for (int i = 0; i < g.points(); ++i) {
      const auto xy = g.coord(i);
      double r2 = (xy[0] - c[0]) * (xy[0] - c[0]);
      if (g.dim == 2) r2 += (xy[1] - c[1]) * (xy[1] - c[1]);
      f.v[i] = off + a * std::exp(-r2 / (w * w));
    }
    return f;
  }
  if (kind == "cosine") {
    spec.allow_keys({"expr", "amplitude", "modes", "offset"});
    const double a = spec.num("amplitude");
    const double off = spec.num_or("offset", 0.0);
    std::vector<double> modes = spec.num_array("modes");
    if (static_cast<int>(modes.size()) != g.dim)
      throw ValidationError("config: " + spec.path() + ".modes must have " +
                            std::to_string(g.dim) + " entries");
    for (int i = 0; i < g.points(); ++i) {
      const auto xy = g.coord(i);
      double val = a * std::cos(modes[0] * std::numbers::pi * xy[0] / g.extent);
      if (g.dim == 2)
        val *= std::cos(modes[1] * std::numbers::pi * xy[1] / g.extent);
      f.v[i] = off + val;
    }
    return f;
  }
  if (kind == "tanh_interface") {
    spec.allow_keys({"expr", "center", "width", "axis", "lo", "hi"});
    const double c0 = spec.num("center");
    const double w = spec.num("width");
    const double lo = spec.num_or("lo", -1.0);
    const double hi = spec.num_or("hi", 1.0);
    const int axis = static_cast<int>(spec.integer_or("axis", 0));
    if (!(w > 0.0))
      throw ValidationError("config: " + spec.path() + ".width must be positive");
    if (axis < 0 || axis >= g.dim)
      throw ValidationError("config: " + spec.path() + ".axis out of range");
    for (int i = 0; i < g.points(); ++i) {
      const auto xy = g.coord(i);
      const double t = std::tanh((xy[axis] - c0) / w);
      f.v[i] = lo + (hi - lo) * 0.5 * (1.0 + t);
    }
    return f;
  }
  throw ValidationError("config: " + spec.path() + ".expr '" + kind +
                        "' is not one of gaussian, cosine, tanh_interface");
}

// --- run artifacts as inputs -------------------------------------------------------

namespace detail {

inline std::filesystem::path resolve_run_file(const std::filesystem::path& given,
                                              const char* filename,
                                              const std::filesystem::path& base_dir) {
  std::filesystem::path p = given;
  if (p.is_relative()) p = base_dir / p;
  if (std::filesystem::is_directory(p)) p /= filename;
  return p;
}

// Reads a trajectory table (t,x[,y],mu,phi,sigma; node-major within each
// level) back into per-level fields of one named column.
inline std::vector<Field> read_trajectory_column(const std::filesystem::path& path,
                                                 const Grid& g,
                                                 const std::vector<double>& times,
                                                 const std::string& column) {
  CsvTable t = read_csv(path);
  const int tcol = t.column("t");
  const int xcol = t.column("x");
  const int ycol = g.dim == 2 ? t.column("y") : -1;
  const int vcol = t.column(column);
  const size_t expect = times.size() * static_cast<size_t>(g.points());
  if (t.rows.size() != expect)
    throw ValidationError("trajectory " + path.string() + ": " +
                          std::to_string(t.rows.size()) + " rows, expected " +
                          std::to_string(expect) +
                          " (was the run saved with save_stride 1 and the same grid?)");
  std::vector<Field> out(times.size(), Field(g));
  size_t row = 0;
  for (size_t lev = 0; lev < times.size(); ++lev)
    for (int i = 0; i < g.points(); ++i, ++row) {
      const auto& r = t.rows[row];
      if (std::abs(r[tcol] - times[lev]) > 1e-9 * std::max(1.0, times.back()))
        throw ValidationError("trajectory " + path.string() + ": time grid mismatch at level " +
                              std::to_string(lev));
      check_coords(g, i, r[xcol], ycol >= 0 ? r[ycol] : 0.0, path.string());
      out[lev].v[i] = r[vcol];
    }
  return out;
}

inline ControlSteps read_control_csv(const std::filesystem::path& path, const Grid& g,
                                     int n_steps) {
  CsvTable t = read_csv(path);
  const int xcol = t.column("x");
  const int ycol = g.dim == 2 ? t.column("y") : -1;
  const int vcol = t.column("u");
  const size_t expect = static_cast<size_t>(n_steps) * g.points();
  if (t.rows.size() != expect)
    throw ValidationError("control " + path.string() + ": " +
                          std::to_string(t.rows.size()) + " rows, expected " +
                          std::to_string(expect));
  ControlSteps u(n_steps, Field(g));
  size_t row = 0;
  for (int k = 0; k < n_steps; ++k)
    for (int i = 0; i < g.points(); ++i, ++row) {
      const auto& r = t.rows[row];
      check_coords(g, i, r[xcol], ycol >= 0 ? r[ycol] : 0.0, path.string());
      u[k].v[i] = r[vcol];
    }
  return u;
}

}  // namespace detail

// --- full run configuration ---------------------------------------------------------

struct SweepConfig {
  std::string kind = "state";  // state | adjoint | control
  std::vector<double> betas = default_beta_grid();
};

struct GradientCheckConfig {
  int directions = 5;
  double fd_step = 1e-4;
  double threshold = 1e-2;
};

struct RunConfig {
  ModelParams model;
  InitialData initial;
  std::optional<Field> eta0;  // combined datum, present when reconstruction was requested
  ControlSteps control;
  std::optional<ControlProblem> problem;
  unsigned long long seed = 1;
  int save_stride = 1;
  std::string out_dir;
  OptimizeOptions optimize;
  SweepConfig sweep;
  GradientCheckConfig gradient_check;
  double reconstruct_tol = 1e-12;
  std::vector<std::string> warnings;
};

namespace detail {

inline Potential parse_potential(const cfg::View& v) {
  v.allow_keys({"name"});
  const std::string name = v.str("name");
  if (name == "regular_quartic") return regular_quartic();
  if (name == "logarithmic")
    throw ValidationError("config: the logarithmic potential family is not supported; "
                          "only the regular quartic well is available");
  if (name == "double_obstacle")
    throw ValidationError("config: the double-obstacle potential family is not supported; "
                          "only the regular quartic well is available");
  throw ValidationError("config: unknown potential '" + name + "'");
}

inline ProliferationFn parse_prolif(const cfg::View& v) {
  const std::string name = v.str("name");
  if (name == "constant") {
    v.allow_keys({"name", "rate"});
    return prolif_constant(v.num("rate"));
  }
  if (name == "gaussian") {
    v.allow_keys({"name", "peak", "center", "width"});
    return prolif_gaussian(v.num("peak"), v.num("center"), v.num("width"));
  }
  throw ValidationError("config: unknown proliferation '" + name +
                        "' (constant | gaussian)");
}

inline ModelParams parse_model(const cfg::View& v) {
  v.allow_keys({"alpha", "beta", "potential", "proliferation", "grid", "t_final",
                "n_steps", "newton_tol", "linear_tol", "yosida_eps"});
  ModelParams m;
  m.alpha = v.num("alpha");
  m.beta = v.num_or("beta", 0.0);
  m.potential = parse_potential(v.child("potential"));
  m.prolif = parse_prolif(v.child("proliferation"));
  cfg::View gv = v.child("grid");
  gv.allow_keys({"dim", "n", "extent"});
  m.grid = build_grid(static_cast<int>(gv.integer("dim")),
                      static_cast<int>(gv.integer("n")), gv.num("extent"));
  m.t_final = v.num("t_final");
  {
    const long long ns = v.integer("n_steps");
    if (ns < 1 || ns > 1000000)
      throw ValidationError("config: model.n_steps out of range");
    m.n_steps = static_cast<int>(ns);
  }
  m.newton_tol = v.num_or("newton_tol", 1e-8);
  m.linear_tol = v.num_or("linear_tol", 1e-10);
  m.yosida_eps = v.num_or("yosida_eps", 0.0);
  return m;
}

inline TargetTrajectory parse_target(const cfg::View& v, const ModelParams& m,
                                     const std::filesystem::path& base_dir,
                                     const std::string& column) {
  if (v.raw().is_object() && v.has("from_run")) {
    v.allow_keys({"from_run"});
    std::vector<double> times(m.n_steps + 1);
    for (int n = 0; n <= m.n_steps; ++n) times[n] = n * m.tau();
    const auto path =
        resolve_run_file(v.str("from_run"), "trajectory.csv", base_dir);
    TargetTrajectory t;
    t.levels = read_trajectory_column(path, m.grid, times, column);
    return t;
  }
  return TargetTrajectory::constant(eval_field_spec(v, m.grid, base_dir));
}

inline ControlProblem parse_problem(const cfg::View& v, const ModelParams& m,
                                    const std::filesystem::path& base_dir) {
  v.allow_keys({"b0", "b1", "b2", "b3", "k", "phi_target", "sigma_target",
                "sigma_final_target", "u_lower", "u_upper"});
  if (v.has("k") && v.num("k") != 0.0)
    throw ValidationError("config: problem.k must be 0; the terminal-gradient cost "
                          "term is incompatible with the final conditions used here");
  ControlProblem pb;
  pb.b0 = v.num("b0");
  pb.b1 = v.num("b1");
  pb.b2 = v.num("b2");
  pb.b3 = v.num("b3");
  pb.phi_target = parse_target(v.child("phi_target"), m, base_dir, "phi");
  pb.sigma_target = parse_target(v.child("sigma_target"), m, base_dir, "sigma");
  {
    cfg::View fv = v.child("sigma_final_target");
    if (fv.raw().is_object() && fv.has("from_run")) {
      TargetTrajectory t = parse_target(fv, m, base_dir, "sigma");
      pb.sigma_final_target = t.levels.back();
    } else {
      pb.sigma_final_target = eval_field_spec(fv, m.grid, base_dir);
    }
  }
  pb.u_lower = eval_field_spec(v.child("u_lower"), m.grid, base_dir);
  pb.u_upper = eval_field_spec(v.child("u_upper"), m.grid, base_dir);
  validate_problem(pb, m);
  return pb;
}

}  // namespace detail

// Parses and fully resolves a run configuration: grids are built, field
// specifications evaluated, referenced run artifacts loaded, initial data
// reconstructed if requested, and all validation gates applied.
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ValidationError("config: " + path.string() + " is not valid JSON: " +
                          e.what());
  }
  const std::filesystem::path base_dir = path.parent_path();
  cfg::View root(j, "");
  root.allow_keys({"version", "model", "initial", "control", "problem", "run"});
  if (root.integer("version") != 1)
    throw ValidationError("config: unsupported version " +
                          std::to_string(root.integer("version")) +
                          " (this tool reads version 1)");

  RunConfig rc;
  rc.model = detail::parse_model(root.child("model"));
  rc.warnings = validate_model(rc.model);

  cfg::View iv = root.child("initial");
  if (iv.has("eta0")) {
    iv.allow_keys({"eta0", "sigma0", "reconstruct_tol"});
    rc.reconstruct_tol = iv.num_or("reconstruct_tol", 1e-12);
    rc.eta0 = eval_field_spec(iv.child("eta0"), rc.model.grid, base_dir);
    auto [phi0, mu0] = reconstruct_phi0(*rc.eta0, rc.model.alpha,
                                        rc.model.potential, rc.reconstruct_tol);
    rc.initial.phi0 = std::move(phi0);
    rc.initial.mu0 = std::move(mu0);
  } else {
    iv.allow_keys({"phi0", "mu0", "sigma0"});
    rc.initial.phi0 = eval_field_spec(iv.child("phi0"), rc.model.grid, base_dir);
    if (iv.has("mu0")) {
      rc.initial.mu0 = eval_field_spec(iv.child("mu0"), rc.model.grid, base_dir);
    } else {
      // default to the compatible chemical potential of phi0
      Field mu0 = laplacian(rc.initial.phi0);
      for (int i = 0; i < mu0.size(); ++i)
        mu0.v[i] = -mu0.v[i] + eval_fp(rc.model.potential, rc.initial.phi0.v[i]);
      rc.initial.mu0 = std::move(mu0);
    }
  }
  rc.initial.sigma0 = eval_field_spec(iv.child("sigma0"), rc.model.grid, base_dir);

  if (auto cv = root.maybe("control")) {
    if (cv->raw().is_object() && cv->has("from_run")) {
      cv->allow_keys({"from_run"});
      const auto p =
          detail::resolve_run_file(cv->str("from_run"), "control.csv", base_dir);
      rc.control = detail::read_control_csv(p, rc.model.grid, rc.model.n_steps);
    } else {
      rc.control.assign(rc.model.n_steps,
                        eval_field_spec(*cv, rc.model.grid, base_dir));
    }
  } else {
    rc.control.assign(rc.model.n_steps, Field(rc.model.grid));
  }

  if (auto pv = root.maybe("problem"))
    rc.problem = detail::parse_problem(*pv, rc.model, base_dir);

  if (auto rv = root.maybe("run")) {
    rv->allow_keys({"seed", "save_stride", "out_dir", "optimize", "sweep",
                    "gradient_check"});
    {
      const long long s = rv->integer_or("seed", 1);
      if (s < 0) throw ValidationError("config: run.seed must be >= 0");
      rc.seed = static_cast<unsigned long long>(s);
    }
    {
      const long long st = rv->integer_or("save_stride", 1);
      if (st < 1) throw ValidationError("config: run.save_stride must be >= 1");
      rc.save_stride = static_cast<int>(st);
    }
    rc.out_dir = rv->str_or("out_dir", "");
    if (auto ov = rv->maybe("optimize")) {
      ov->allow_keys({"max_iterations", "tol", "armijo_c", "max_backtracks"});
      rc.optimize.max_iterations =
          static_cast<int>(ov->integer_or("max_iterations", 200));
      rc.optimize.tol = ov->num_or("tol", 1e-6);
      rc.optimize.armijo_c = ov->num_or("armijo_c", 1e-4);
      rc.optimize.max_backtracks =
          static_cast<int>(ov->integer_or("max_backtracks", 40));
      if (rc.optimize.max_iterations < 1 || !(rc.optimize.tol > 0.0))
        throw ValidationError("config: run.optimize settings out of range");
    }
    if (auto sv = rv->maybe("sweep")) {
      sv->allow_keys({"kind", "betas"});
      rc.sweep.kind = sv->str_or("kind", "state");
      if (rc.sweep.kind != "state" && rc.sweep.kind != "adjoint" &&
          rc.sweep.kind != "control")
        throw ValidationError("config: run.sweep.kind must be state | adjoint | control");
      if (sv->has("betas")) rc.sweep.betas = sv->num_array("betas");
    }
    if (auto gv = rv->maybe("gradient_check")) {
      gv->allow_keys({"directions", "fd_step", "threshold"});
      rc.gradient_check.directions =
          static_cast<int>(gv->integer_or("directions", 5));
      rc.gradient_check.fd_step = gv->num_or("fd_step", 1e-4);
      rc.gradient_check.threshold = gv->num_or("threshold", 1e-2);
      if (rc.gradient_check.directions < 1 || !(rc.gradient_check.fd_step > 0.0))
        throw ValidationError("config: run.gradient_check settings out of range");
    }
  }
  return rc;
}

}  // namespace phasectl
