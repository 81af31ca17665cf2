#pragma once

#include <string>
#include <vector>

#include "stride/types.hpp"

namespace stride {

/// One rigid link in a planar kinematic tree. Every link except the root is
/// attached to its parent by a pin joint located `joint_offset` meters along
/// the parent's axis. The link body extends `length` meters along its own
/// axis from the joint; `com_offset` locates the center of mass on that axis
/// (negative values are allowed, e.g. a torso whose mass sits above the
/// pelvis pin).
struct LinkParams {
  std::string name;
  double mass = 0.0;        // kg
  double inertia = 0.0;     // kg m^2, about the center of mass
  double length = 0.0;      // m
  double com_offset = 0.0;  // m along the link axis
  int parent = -1;          // index into RobotModel::links, -1 for the root
  double joint_offset = 0.0;  // m along the parent axis
};

/// Named point on a link, `offset` meters along the link axis.
struct FrameDef {
  std::string name;
  int link = 0;
  double offset = 0.0;
};

/// Planar floating-base rigid-body model. Generalized coordinates are
/// (base x, base z, base pitch, joint angles...) with the base coordinates
/// giving the pose of links[0] at its reference point. n_q = links.size()+2.
///
/// The description is immutable after construction and safe to share across
/// threads; all dynamics operations are pure functions of (model, q, v).
struct RobotModel {
  std::string name;
  std::vector<LinkParams> links;   // links[0] is the floating base
  std::vector<FrameDef> frames;
  std::vector<int> actuated;       // link indices whose pin joint is actuated
  double gravity = 9.81;           // m/s^2, acting along -z
  VecX torque_limit;               // per actuator, N m; empty = unbounded
  VecX joint_lower, joint_upper;   // optional joint limits (size n_q-3)

  int n_q() const { return static_cast<int>(links.size()) + 2; }
  int n_u() const { return static_cast<int>(actuated.size()); }

  /// Generalized-coordinate index of link i's pin joint (i >= 1).
  int joint_index(int link) const { return link + 2; }

  /// Actuation matrix B (n_q x n_u): one unit entry per actuated joint,
  /// zero rows for the floating base.
  MatX actuation_matrix() const;

  int frame_index(const std::string& frame) const;  // throws std::out_of_range
  int link_index(const std::string& link) const;    // throws std::out_of_range
};

/// Throws std::invalid_argument when the description violates its
/// invariants (non-positive mass/length, negative inertia, duplicate frame
/// names, out-of-order parents, actuated root, ...).
void validate(const RobotModel& model);

struct ModelState {
  VecX q;
  VecX v;
};

/// World-frame pose and spatial velocity of one link.
struct LinkPose {
  double theta = 0.0;   // absolute angle, rad
  double omega = 0.0;   // rad/s
  Vec2 origin;          // joint point (base reference point for the root)
  Vec2 origin_vel;
};

/// Forward-kinematics sweep over the whole tree.
std::vector<LinkPose> link_poses(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v);

struct FrameKinematics {
  Vec2 position;
  Vec2 velocity;       // equals jacobian * v by construction
  MatX jacobian;       // 2 x n_q
  Vec2 jdot_times_v;   // acceleration of the point when qdd = 0
};

/// Joint-space mass matrix M(q), symmetric positive definite. Composite
/// rigid-body assembly with all spatial quantities expressed at the world
/// origin, so no inter-link transforms are needed.
MatX mass_matrix(const RobotModel& model, ConstVecRef q);

struct BiasForces {
  VecX coriolis;  // C(q, v), velocity-product generalized forces
  VecX gravity;   // g(q), with M qdd + C = g + B u + J^T lambda
};

/// Coriolis/centrifugal bias and gravity vector via recursive Newton-Euler
/// passes (C from the velocity products with gravity off, g from a static
/// pass).
BiasForces bias_and_gravity(const RobotModel& model, ConstVecRef q,
                            ConstVecRef v);

/// Inverse dynamics: generalized force tau with
/// tau = M(q) a + C(q, v) - g(q)   (g omitted when with_gravity is false).
VecX inverse_dynamics(const RobotModel& model, ConstVecRef q, ConstVecRef v,
                      ConstVecRef a, bool with_gravity);

/// Kinematics of a named frame. Throws std::out_of_range for unknown names.
FrameKinematics frame_kinematics(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v, const std::string& frame);

/// Same, addressed by (link, offset) instead of a registered name.
FrameKinematics point_kinematics(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v, int link, double offset);

/// Whole-robot angular momentum about a world point. L is linear in v;
/// `jacobian`, when non-null, receives the row A(q) with L = A(q) v.
double angular_momentum_about_point(const RobotModel& model, ConstVecRef q,
                                    ConstVecRef v, const Vec2& point,
                                    RowVecX* jacobian = nullptr);

}  // namespace stride
