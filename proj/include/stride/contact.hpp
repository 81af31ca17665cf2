#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stride/model.hpp"
#include "stride/types.hpp"

namespace stride {

/// One holonomic constraint: either a point contact pinning a named frame to
/// a world anchor (2 rows) or a joint lock pinning one joint angle (1 row).
/// `unambiguous` marks constraints that are active both before and after an
/// impact event (e.g. a permanently locked joint, or the stance foot of a
/// gait with a double-support phase).
struct Constraint {
  enum class Kind { kPointContact, kJointLock };

  static Constraint point_contact(std::string frame, Vec2 anchor = Vec2::Zero(),
                                  bool unambiguous = false) {
    Constraint c;
    c.kind = Kind::kPointContact;
    c.frame = std::move(frame);
    c.anchor = anchor;
    c.unambiguous = unambiguous;
    return c;
  }
  static Constraint joint_lock(int joint, double value,
                               bool unambiguous = true) {
    Constraint c;
    c.kind = Kind::kJointLock;
    c.joint = joint;
    c.lock_value = value;
    c.unambiguous = unambiguous;
    return c;
  }

  int dim() const { return kind == Kind::kPointContact ? 2 : 1; }
  std::string label() const {
    return kind == Kind::kPointContact ? "contact:" + frame
                                       : "joint_lock:" + std::to_string(joint);
  }

  Kind kind = Kind::kPointContact;
  std::string frame;            // point contact
  Vec2 anchor = Vec2::Zero();   // world anchor (Baumgarte reference)
  int joint = -1;               // generalized-coordinate index, joint lock
  double lock_value = 0.0;
  bool unambiguous = false;
};

/// Ordered set of active constraints. Rows of the stacked Jacobian follow
/// declaration order; the unambiguous subset keeps that order.
struct ConstraintSet {
  std::vector<Constraint> constraints;

  int dimension() const;              // n_c
  int unambiguous_dimension() const;  // n_h
  bool empty() const { return constraints.empty(); }
  std::vector<std::string> row_labels() const;

  /// Indices of point-contact constraints (for friction-cone rows); each
  /// occupies rows (2k, 2k+1) = (tangential, normal) of its block.
  std::vector<int> contact_row_offsets() const;
};

struct StackedJacobian {
  MatX j_full;          // n_c x n_q
  MatX j_unambiguous;   // n_h x n_q, rows are a subset of j_full's
  VecX jdot_v;          // n_c
  VecX position_error;  // n_c, current violation (for constraint feedback)
};

/// Row-stacked constraint Jacobians at (q, v). An empty set yields 0 x n_q
/// matrices.
StackedJacobian stacked_jacobian(const ConstraintSet& set,
                                 const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v);

struct ImpactResult {
  VecX v_plus;   // post-impact generalized velocities
  VecX impulse;  // N s, one entry per constraint row
};

/// Instantaneous inelastic no-slip impact: v+ is the momentum-consistent
/// velocity with J v+ = 0. `row_labels` improves the singular-constraint
/// error message when the constraint block is rank deficient.
ImpactResult impact_map(const RobotModel& model, ConstVecRef q,
                        ConstVecRef v_minus, ConstMatRef j_full,
                        const std::vector<std::string>& row_labels = {});

struct InvariantBasis {
  MatX basis;      // P, (n_q - n_c) x n_q, orthonormal rows, P M^-1 J^T = 0
  MatX projector;  // Q = P^T P, orthogonal projector onto the invariant subspace
  int rank = 0;    // numerical rank of M^-1 J^T
};

/// Basis of the velocity subspace unaffected by impulses transmitted through
/// the given constraints, i.e. the orthogonal complement of range(M^-1 J^T).
InvariantBasis invariant_basis(const RobotModel& model, ConstVecRef q,
                               ConstMatRef j_full);

struct ProjectedVelocity {
  VecX impulse;                // lambda*, best impulse-space correction
  VecX holonomic_multiplier;   // mu*
  VecX v_proj;                 // v + M^-1 J^T lambda*
};

/// Correct a measured velocity by the impulse-space component that best
/// explains the output-velocity error while keeping the unambiguously active
/// constraints satisfied:
///
///   min_lambda || ydot_des - J_y (v + M^-1 J^T lambda) ||
///   s.t.       J_h (v + M^-1 J^T lambda) = 0
///
/// solved in closed form from the KKT system. When the optimal correction is
/// not unique (fewer independent outputs than impulse directions) the
/// solution returned is the one minimizing ||v_proj||, which keeps v_proj a
/// deterministic function of the impulse-equivalence class of v.
/// Throws DegenerateProjectionError when the constraint rows cannot be
/// satisfied within the impulse range space.
ProjectedVelocity projected_velocity(const RobotModel& model, ConstVecRef q,
                                     ConstVecRef v, ConstMatRef j_full,
                                     ConstMatRef j_unambiguous,
                                     ConstMatRef j_output,
                                     ConstVecRef ydot_des);

}  // namespace stride
