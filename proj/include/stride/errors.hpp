#pragma once

#include <stdexcept>
#include <string>

namespace stride {

/// Constraint block J M^-1 J^T (or a stacked Jacobian) lost row rank.
/// The message names the offending constraints when they can be identified.
class SingularConstraintError : public std::runtime_error {
 public:
  explicit SingularConstraintError(const std::string& what)
      : std::runtime_error(what) {}
};

/// The velocity-projection KKT system is singular or inconsistent; callers
/// fall back to the unprojected velocity.
class DegenerateProjectionError : public std::runtime_error {
 public:
  explicit DegenerateProjectionError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Reference generation failed (unreachable step parameters, inconsistent
/// mode timing, ...).
class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& what)
      : std::runtime_error(what) {}
};

/// A simulated state stopped being finite.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Event search was asked to bracket a guard that does not change sign.
class NotAnEventError : public std::runtime_error {
 public:
  explicit NotAnEventError(const std::string& what)
      : std::runtime_error(what) {}
};

/// QP (or controller QP) assembly found inconsistent dimensions.
class AssemblyError : public std::runtime_error {
 public:
  explicit AssemblyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stride
