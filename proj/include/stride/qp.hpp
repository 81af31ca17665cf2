#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stride/types.hpp"

namespace stride {

/// Dense convex QP
///   min 1/2 z^T H z + b^T z
///   s.t. A_eq z = b_eq,  A_in z <= b_in.
/// The Hessian is symmetrized on construction via finish(); marginal
/// indefiniteness (eigenvalues down to -1e-10) is shifted out at solve time.
struct QuadraticProgram {
  MatX hessian;
  VecX gradient;
  MatX a_eq;
  VecX b_eq;
  MatX a_in;
  VecX b_in;
  std::vector<std::string> variable_names;  // diagnostics only

  int num_vars() const { return static_cast<int>(hessian.rows()); }

  /// Symmetrizes H and checks block dimensions. Throws AssemblyError on
  /// mismatch. Call after filling the fields.
  void finish();
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations, kDegenerate };

const char* to_string(QpStatus status);

struct QpSolution {
  VecX z;
  VecX eq_duals;
  VecX ineq_duals;              // >= 0 at an optimum, zero off the active set
  QpStatus status = QpStatus::kDegenerate;
  double solve_time = 0.0;      // seconds
  std::vector<int> active_set;  // tight inequality rows at the solution
  int iterations = 0;
  double condition_estimate = 0.0;  // populated when a KKT solve degenerates
};

/// Equality-constrained QP via one dense factorization of the KKT system.
/// Returns kDegenerate (with a condition estimate) when the KKT matrix is
/// numerically singular.
QpSolution solve_equality_qp(const QuadraticProgram& qp);

/// Primal active-set solver. Finds a feasible point (phase 1) unless the
/// warm-start active set already reproduces one, then iterates add/drop
/// steps; ties among blocking constraints break toward the lowest row index,
/// so identical inputs give identical outputs. Iterations are capped at
/// max_iterations (default 10 n) before returning kMaxIterations.
QpSolution solve_qp(const QuadraticProgram& qp,
                    const std::vector<int>* warm_start = nullptr,
                    int max_iterations = -1);

}  // namespace stride
