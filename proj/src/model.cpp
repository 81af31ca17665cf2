#include "stride/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace stride {
namespace {

void require_finite(ConstVecRef x, const char* what) {
  if (!x.allFinite()) {
    throw std::invalid_argument(std::string("non-finite ") + what);
  }
}

void require_dim(const RobotModel& model, ConstVecRef x, const char* what) {
  if (x.size() != model.n_q()) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " +
                                std::to_string(model.n_q()) + ", got " +
                                std::to_string(x.size()));
  }
}

// Planar spatial inertia of one link, expressed at the world origin with
// twist ordering (omega, vx, vz). Derived from the kinetic energy of a body
// with mass m, COM c, and rotational inertia I about the COM.
Eigen::Matrix3d spatial_inertia_at_origin(double m, double inertia,
                                          const Vec2& com) {
  Eigen::Matrix3d s;
  s << inertia + m * com.squaredNorm(), -m * com.y(), m * com.x(),
      -m * com.y(), m, 0.0,
      m * com.x(), 0.0, m;
  return s;
}

// Motion column of a pin joint at world point a: unit rotation about a,
// expressed as a twist at the world origin.
Eigen::Vector3d pin_column(const Vec2& a) { return {1.0, a.y(), -a.x()}; }

}  // namespace

MatX RobotModel::actuation_matrix() const {
  MatX b = MatX::Zero(n_q(), n_u());
  for (int a = 0; a < n_u(); ++a) {
    b(joint_index(actuated[a]), a) = 1.0;
  }
  return b;
}

int RobotModel::frame_index(const std::string& frame) const {
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].name == frame) return static_cast<int>(i);
  }
  throw std::out_of_range("unknown frame '" + frame + "' on model '" + name +
                          "'");
}

int RobotModel::link_index(const std::string& link) const {
  for (size_t i = 0; i < links.size(); ++i) {
    if (links[i].name == link) return static_cast<int>(i);
  }
  throw std::out_of_range("unknown link '" + link + "'");
}

void validate(const RobotModel& model) {
  if (model.links.empty()) throw std::invalid_argument("model has no links");
  if (model.links[0].parent != -1) {
    throw std::invalid_argument("links[0] must be the floating-base root");
  }
  std::set<std::string> link_names;
  for (size_t i = 0; i < model.links.size(); ++i) {
    const LinkParams& l = model.links[i];
    if (l.mass <= 0.0) throw std::invalid_argument(l.name + ": mass must be > 0");
    if (l.inertia < 0.0) {
      throw std::invalid_argument(l.name + ": rotational inertia must be >= 0");
    }
    if (l.length <= 0.0) {
      throw std::invalid_argument(l.name + ": length must be > 0");
    }
    if (i > 0 && (l.parent < 0 || l.parent >= static_cast<int>(i))) {
      throw std::invalid_argument(l.name + ": parent must precede the link");
    }
    if (!link_names.insert(l.name).second) {
      throw std::invalid_argument("duplicate link name '" + l.name + "'");
    }
  }
  std::set<std::string> frame_names;
  for (const FrameDef& f : model.frames) {
    if (f.link < 0 || f.link >= static_cast<int>(model.links.size())) {
      throw std::invalid_argument("frame '" + f.name + "' references bad link");
    }
    if (!frame_names.insert(f.name).second) {
      throw std::invalid_argument("duplicate frame name '" + f.name + "'");
    }
  }
  std::set<int> seen;
  for (int a : model.actuated) {
    if (a <= 0 || a >= static_cast<int>(model.links.size())) {
      throw std::invalid_argument("actuated joint index out of range");
    }
    if (!seen.insert(a).second) {
      throw std::invalid_argument("joint actuated twice");
    }
  }
  if (model.torque_limit.size() != 0 &&
      model.torque_limit.size() != model.n_u()) {
    throw std::invalid_argument("torque_limit size must match actuator count");
  }
  if (model.gravity < 0.0) {
    throw std::invalid_argument("gravity magnitude must be >= 0");
  }
}

std::vector<LinkPose> link_poses(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v) {
  require_dim(model, q, "q");
  require_dim(model, v, "v");
  std::vector<LinkPose> poses(model.links.size());
  poses[0].theta = q[2];
  poses[0].omega = v[2];
  poses[0].origin = q.head<2>();
  poses[0].origin_vel = v.head<2>();
  for (size_t i = 1; i < model.links.size(); ++i) {
    const LinkParams& l = model.links[i];
    const LinkPose& p = poses[l.parent];
    LinkPose& out = poses[i];
    out.theta = p.theta + q[model.joint_index(static_cast<int>(i))];
    out.omega = p.omega + v[model.joint_index(static_cast<int>(i))];
    out.origin = p.origin + l.joint_offset * axis_dir(p.theta);
    out.origin_vel = p.origin_vel + l.joint_offset * p.omega * axis_normal(p.theta);
  }
  return poses;
}

MatX mass_matrix(const RobotModel& model, ConstVecRef q) {
  require_dim(model, q, "q");
  require_finite(q, "q");
  const int n = model.n_q();
  const size_t nl = model.links.size();
  const std::vector<LinkPose> poses = link_poses(model, q, VecX::Zero(n));

  std::vector<Eigen::Matrix3d> composite(nl);
  for (size_t i = 0; i < nl; ++i) {
    const LinkParams& l = model.links[i];
    const Vec2 com = poses[i].origin + l.com_offset * axis_dir(poses[i].theta);
    composite[i] = spatial_inertia_at_origin(l.mass, l.inertia, com);
  }
  // Children always follow their parent in the link list.
  for (size_t i = nl - 1; i >= 1; --i) {
    composite[model.links[i].parent] += composite[i];
  }

  MatX m = MatX::Zero(n, n);
  // Floating base: columns (x, z, pitch about the base point).
  Eigen::Matrix3d s_base;
  s_base.col(0) = Eigen::Vector3d(0, 1, 0);
  s_base.col(1) = Eigen::Vector3d(0, 0, 1);
  s_base.col(2) = pin_column(poses[0].origin);
  // Reorder so generalized coordinates are (x, z, pitch).
  const Eigen::Matrix3d f_base = composite[0] * s_base;
  m.topLeftCorner<3, 3>() = s_base.transpose() * f_base;

  for (size_t i = 1; i < nl; ++i) {
    const int col = model.joint_index(static_cast<int>(i));
    const Eigen::Vector3d s_i = pin_column(poses[i].origin);
    const Eigen::Vector3d f = composite[i] * s_i;
    m(col, col) = s_i.dot(f);
    int j = model.links[i].parent;
    while (j > 0) {
      const int cj = model.joint_index(j);
      m(cj, col) = pin_column(poses[j].origin).dot(f);
      m(col, cj) = m(cj, col);
      j = model.links[j].parent;
    }
    m.block<3, 1>(0, col) = s_base.transpose() * f;
    m.block<1, 3>(col, 0) = m.block<3, 1>(0, col).transpose();
  }
  return m;
}

VecX inverse_dynamics(const RobotModel& model, ConstVecRef q, ConstVecRef v,
                      ConstVecRef a, bool with_gravity) {
  require_dim(model, q, "q");
  require_dim(model, v, "v");
  require_dim(model, a, "a");
  require_finite(q, "q");
  require_finite(v, "v");
  require_finite(a, "a");
  const size_t nl = model.links.size();
  const std::vector<LinkPose> poses = link_poses(model, q, v);
  const Vec2 gravity_acc =
      with_gravity ? Vec2(0.0, -model.gravity) : Vec2(0.0, 0.0);

  // Forward pass: angular acceleration and origin/COM accelerations.
  std::vector<double> alpha(nl);
  std::vector<Vec2> a_origin(nl), f_net(nl);
  std::vector<double> n_net(nl);  // moment about each link origin
  alpha[0] = a[2];
  a_origin[0] = a.head<2>();
  for (size_t i = 1; i < nl; ++i) {
    const LinkParams& l = model.links[i];
    const int parent = l.parent;
    alpha[i] = alpha[parent] + a[model.joint_index(static_cast<int>(i))];
    const double th_p = poses[parent].theta;
    const double w_p = poses[parent].omega;
    a_origin[i] = a_origin[parent] +
                  l.joint_offset * (alpha[parent] * axis_normal(th_p) -
                                    w_p * w_p * axis_dir(th_p));
  }
  for (size_t i = 0; i < nl; ++i) {
    const LinkParams& l = model.links[i];
    const double th = poses[i].theta;
    const double w = poses[i].omega;
    const Vec2 r_com = l.com_offset * axis_dir(th);
    const Vec2 a_com =
        a_origin[i] + l.com_offset * (alpha[i] * axis_normal(th) - w * w * axis_dir(th));
    f_net[i] = l.mass * (a_com - gravity_acc);
    n_net[i] = l.inertia * alpha[i] + cross2(r_com, f_net[i]);
  }

  // Backward pass. After folding children into parents, f_net[i] / n_net[i]
  // hold the subtree wrench about poses[i].origin, so the pin-joint torque of
  // link i is n_net[i] directly.
  for (size_t i = nl - 1; i >= 1; --i) {
    const int parent = model.links[i].parent;
    const Vec2 r = poses[i].origin - poses[parent].origin;
    f_net[parent] += f_net[i];
    n_net[parent] += n_net[i] + cross2(r, f_net[i]);
  }

  VecX tau(model.n_q());
  tau.head<2>() = f_net[0];
  tau[2] = n_net[0];
  for (size_t i = 1; i < nl; ++i) {
    tau[model.joint_index(static_cast<int>(i))] = n_net[i];
  }
  return tau;
}

BiasForces bias_and_gravity(const RobotModel& model, ConstVecRef q,
                            ConstVecRef v) {
  BiasForces out;
  const VecX zero = VecX::Zero(model.n_q());
  out.coriolis = inverse_dynamics(model, q, v, zero, /*with_gravity=*/false);
  out.gravity = -inverse_dynamics(model, q, zero, zero, /*with_gravity=*/true);
  return out;
}

FrameKinematics point_kinematics(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v, int link, double offset) {
  require_finite(q, "q");
  require_finite(v, "v");
  const std::vector<LinkPose> poses = link_poses(model, q, v);
  const LinkPose& p = poses[link];

  FrameKinematics out;
  out.position = p.origin + offset * axis_dir(p.theta);
  out.velocity = p.origin_vel + offset * p.omega * axis_normal(p.theta);
  out.jacobian = MatX::Zero(2, model.n_q());
  out.jacobian(0, 0) = 1.0;
  out.jacobian(1, 1) = 1.0;
  const Vec2 r_base = out.position - poses[0].origin;
  out.jacobian.col(2) = perp(r_base);
  int walk = link;
  while (walk > 0) {
    const Vec2 r = out.position - poses[walk].origin;
    out.jacobian.col(model.joint_index(walk)) = perp(r);
    walk = model.links[walk].parent;
  }

  // Acceleration of the point with qdd = 0: centripetal terms accumulated
  // down the chain (angular accelerations all vanish when qdd = 0).
  std::vector<int> chain;
  for (int w = link; w >= 0; w = model.links[w].parent) chain.push_back(w);
  Vec2 acc = Vec2::Zero();
  for (size_t idx = chain.size(); idx-- > 1;) {
    const int child = chain[idx - 1];
    const int parent = chain[idx];
    const double w_p = poses[parent].omega;
    acc += -model.links[child].joint_offset * w_p * w_p *
           axis_dir(poses[parent].theta);
  }
  acc += -offset * p.omega * p.omega * axis_dir(p.theta);
  out.jdot_times_v = acc;
  return out;
}

FrameKinematics frame_kinematics(const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v, const std::string& frame) {
  const FrameDef& f = model.frames[model.frame_index(frame)];
  return point_kinematics(model, q, v, f.link, f.offset);
}

double angular_momentum_about_point(const RobotModel& model, ConstVecRef q,
                                    ConstVecRef v, const Vec2& point,
                                    RowVecX* jacobian) {
  require_finite(q, "q");
  require_finite(v, "v");
  const int n = model.n_q();
  const std::vector<LinkPose> poses = link_poses(model, q, v);

  RowVecX a = RowVecX::Zero(n);
  for (size_t i = 0; i < model.links.size(); ++i) {
    const LinkParams& l = model.links[i];
    const FrameKinematics com =
        point_kinematics(model, q, v, static_cast<int>(i), l.com_offset);
    const Vec2 r = com.position - point;
    // (r x m v_com) row: r_x * Jz - r_z * Jx, plus I * d(omega_i)/dv.
    a += l.mass * (r.x() * com.jacobian.row(1) - r.y() * com.jacobian.row(0));
    RowVecX omega_row = RowVecX::Zero(n);
    omega_row(2) = 1.0;
    for (int w = static_cast<int>(i); w > 0; w = model.links[w].parent) {
      omega_row(model.joint_index(w)) = 1.0;
    }
    a += l.inertia * omega_row;
  }
  if (jacobian != nullptr) *jacobian = a;
  return a.dot(v);
}

}  // namespace stride
