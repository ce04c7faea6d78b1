#pragma once

#include <stdexcept>
#include <string>

namespace tvb {

// Bad inputs, violated preconditions, malformed files. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Solver/iteration failures: non-convergence, separation, degenerate refits. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tvb
