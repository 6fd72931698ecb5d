#pragma once

#include <stdexcept>
#include <string>

namespace phasectl {

// Rejected input: bad configuration, parameter outside its admissible range,
// mismatched grids, malformed files.  The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A solver broke down: singular factorization, stalled line search, iteration
// cap hit inside a linear solve.  The CLI maps this to exit code 3.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace phasectl
