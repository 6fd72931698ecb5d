#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "phasectl/errors.hpp"
#include "phasectl/grid.hpp"
#include "phasectl/model.hpp"

namespace phasectl {

// Tracking target over the space-time cylinder: either one field (constant in
// time) or one field per time level (n_steps + 1 of them, level 0 unused by
// the right-endpoint quadrature but kept for alignment).
struct TargetTrajectory {
  std::vector<Field> levels;

  static TargetTrajectory constant(Field f) { return {{std::move(f)}}; }

  const Field& at(int level) const {
    return levels.size() == 1 ? levels[0] : levels[static_cast<size_t>(level)];
  }
  bool time_constant() const { return levels.size() == 1; }
};

// Tracking-type objective with box control constraints:
//   b1/2 |phi - phi_target|^2_Q + b2/2 |sigma - sigma_target|^2_Q
//   + b3/2 |sigma(T) - sigma_final_target|^2 + b0/2 |u|^2_Q,
// minimized over controls with u_lower <= u <= u_upper pointwise.
struct ControlProblem {
  double b0 = 1.0, b1 = 1.0, b2 = 0.0, b3 = 0.0;
  TargetTrajectory phi_target, sigma_target;
  Field sigma_final_target;
  Field u_lower, u_upper;
};

inline void validate_problem(const ControlProblem& pb, const ModelParams& m) {
  for (double w : {pb.b0, pb.b1, pb.b2, pb.b3})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("problem: cost weights must be finite and >= 0");
  if (pb.b0 == 0.0 && pb.b1 == 0.0 && pb.b2 == 0.0 && pb.b3 == 0.0)
    throw ValidationError("problem: at least one cost weight must be positive");
  auto check_target = [&](const TargetTrajectory& t, const char* what) {
    if (t.levels.empty())
      throw ValidationError(std::string("problem: ") + what + " target is empty");
    if (!t.time_constant() &&
        static_cast<int>(t.levels.size()) != m.n_steps + 1)
      throw ValidationError(std::string("problem: ") + what + " target has " +
                            std::to_string(t.levels.size()) + " levels, expected " +
                            std::to_string(m.n_steps + 1));
    for (const Field& f : t.levels) {
      if (!(f.grid == m.grid))
        throw ValidationError(std::string("problem: ") + what +
                              " target grid does not match the model grid");
      require_finite(f, what);
    }
  };
  check_target(pb.phi_target, "phi");
  check_target(pb.sigma_target, "sigma");
  for (const Field* f : {&pb.sigma_final_target, &pb.u_lower, &pb.u_upper}) {
    if (!(f->grid == m.grid))
      throw ValidationError("problem: field grid does not match the model grid");
    require_finite(*f, "problem field");
  }
  for (int i = 0; i < m.grid.points(); ++i)
    if (!(pb.u_lower.v[i] <= pb.u_upper.v[i]))
      throw ValidationError("problem: u_lower exceeds u_upper at node " +
                            std::to_string(i));
}

}  // namespace phasectl
