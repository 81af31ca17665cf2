#include "stride/gait.hpp"

#include <cmath>

#include "stride/errors.hpp"

namespace stride {

namespace mode {
std::string name(int m) {
  switch (m) {
    case kLeftStance: return "LST";
    case kRightStance: return "RST";
    case kCrouch: return "CROUCH";
    case kJumpFlight: return "FLIGHT";
    case kLand: return "LAND";
    case kLS: return "LS";
    case kLF: return "LF";
    case kRS: return "RS";
    case kRF: return "RF";
  }
  return "mode" + std::to_string(m);
}
}  // namespace mode

GaitTimings adapt_mode_timings(double y_slip, double ydot_slip,
                               double rest_length, GaitTimings timings,
                               double gravity) {
  if (!(rest_length > 0.0) || !(y_slip > 0.0)) {
    throw std::invalid_argument("adapt_mode_timings: lengths must be > 0");
  }
  auto clip = [](double x, double lo, double hi) {
    return std::min(std::max(x, lo), hi);
  };
  const double ts_raw = (rest_length / y_slip) * timings.stance;
  timings.adapted_stance =
      clip(ts_raw, (1.0 - timings.stance_variance) * timings.stance,
           (1.0 + timings.stance_variance) * timings.stance);

  // Ballistic time until the pelvis falls back to the rest length.
  const double drop = std::max(0.0, y_slip - rest_length);
  const double tf_raw =
      (ydot_slip + std::sqrt(ydot_slip * ydot_slip + 2.0 * gravity * drop)) /
      gravity;
  timings.adapted_flight =
      clip(tf_raw, (1.0 - timings.flight_variance) * timings.flight,
           (1.0 + timings.flight_variance) * timings.flight);
  return timings;
}

double stage_duration(const FsmStage& stage, const GaitTimings& timings) {
  switch (stage.kind) {
    case FsmStage::Duration::kStance: return timings.adapted_stance;
    case FsmStage::Duration::kFlight: return timings.adapted_flight;
    case FsmStage::Duration::kFixed: return stage.fixed;
  }
  return stage.fixed;
}

FsmState fsm_init(const FsmCycle& cycle, double t0, const GaitTimings& timings) {
  if (cycle.stages.empty()) throw std::invalid_argument("empty FSM cycle");
  FsmState fsm;
  fsm.stage = 0;
  fsm.mode = cycle.stages[0].mode;
  fsm.entry_time = t0;
  fsm.switch_time = t0 + stage_duration(cycle.stages[0], timings);
  return fsm;
}

FsmState fsm_advance(const FsmCycle& cycle, FsmState fsm, double t,
                     const GaitTimings& timings) {
  while (t >= fsm.switch_time) {
    const bool last = fsm.stage + 1 == static_cast<int>(cycle.stages.size());
    if (last && !cycle.loop) {
      return fsm;  // terminal stage holds
    }
    fsm.stage = last ? 0 : fsm.stage + 1;
    fsm.mode = cycle.stages[fsm.stage].mode;
    fsm.entry_time = fsm.switch_time;
    fsm.switch_time =
        fsm.entry_time + stage_duration(cycle.stages[fsm.stage], timings);
  }
  return fsm;
}

// ---------------------------------------------------------------------------
// Leg inverse kinematics for the canonical biped layout.

namespace {

struct LegAngles {
  double hip;   // joint angle of the thigh pin
  double knee;  // joint angle of the shank pin
};

// Pin-joint angles placing the foot at `foot` for a leg hanging from `hip`
// with segment lengths l1 (thigh) and l2 (shank). The knee bends backwards
// (negative knee angle). Throws GenerationError when out of reach.
LegAngles leg_ik(const Vec2& hip, const Vec2& foot, double l1, double l2,
                 double pitch) {
  const Vec2 d = foot - hip;
  const double r = d.norm();
  if (r > l1 + l2 - 1e-9 || r < std::abs(l1 - l2) + 1e-9) {
    throw GenerationError("leg target out of reach (distance " +
                          std::to_string(r) + ")");
  }
  const double cos_knee =
      (l1 * l1 + l2 * l2 - r * r) / (2.0 * l1 * l2);
  const double knee_interior = std::acos(std::clamp(cos_knee, -1.0, 1.0));
  const double knee = -(M_PI - knee_interior);  // bend backwards

  // absolute direction angle of the hip-to-foot line, measured like link axes
  const double phi = std::atan2(d.x(), -d.y());
  const double cos_gamma = (l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r);
  const double gamma = std::acos(std::clamp(cos_gamma, -1.0, 1.0));
  const double thigh_abs = phi + gamma;  // thigh rotated forward of the line
  LegAngles out;
  out.hip = thigh_abs - pitch;
  out.knee = knee;
  return out;
}

struct BipedLayout {
  int left_thigh, left_shank, right_thigh, right_shank;
  double l1, l2;
  int q_lh, q_lk, q_rh, q_rk;  // generalized-coordinate indices
};

BipedLayout biped_layout(const RobotModel& model) {
  BipedLayout b;
  try {
    b.left_thigh = model.link_index("left_thigh");
    b.left_shank = model.link_index("left_shank");
    b.right_thigh = model.link_index("right_thigh");
    b.right_shank = model.link_index("right_shank");
    model.frame_index("pelvis");
    model.frame_index("left_foot");
    model.frame_index("right_foot");
  } catch (const std::out_of_range& e) {
    throw GenerationError(std::string("gait generation needs the canonical "
                                      "biped layout: ") +
                          e.what());
  }
  b.l1 = model.links[b.left_thigh].length;
  b.l2 = model.links[b.left_shank].length;
  b.q_lh = model.joint_index(b.left_thigh);
  b.q_lk = model.joint_index(b.left_shank);
  b.q_rh = model.joint_index(b.right_thigh);
  b.q_rk = model.joint_index(b.right_shank);
  return b;
}

// Full configuration from pelvis pose and both foot positions.
VecX biped_config(const RobotModel& model, const BipedLayout& b,
                  const Vec2& pelvis, double pitch, const Vec2& left_foot,
                  const Vec2& right_foot) {
  VecX q = VecX::Zero(model.n_q());
  q.head<2>() = pelvis;
  q[2] = pitch;
  const LegAngles left = leg_ik(pelvis, left_foot, b.l1, b.l2, pitch);
  const LegAngles right = leg_ik(pelvis, right_foot, b.l1, b.l2, pitch);
  q[b.q_lh] = left.hip;
  q[b.q_lk] = left.knee;
  q[b.q_rh] = right.hip;
  q[b.q_rk] = right.knee;
  return q;
}

}  // namespace

VecX biped_ik(const RobotModel& model, const Vec2& pelvis, double pitch,
              const Vec2& left_foot, const Vec2& right_foot) {
  return biped_config(model, biped_layout(model), pelvis, pitch, left_foot,
                      right_foot);
}

// ---------------------------------------------------------------------------
// Walking

WalkingReference walking_reference(const RobotModel& model,
                                   const WalkingGaitParams& params,
                                   int num_steps) {
  if (num_steps < 1) throw std::invalid_argument("num_steps must be >= 1");
  if (!(params.period > 0.0)) throw GenerationError("step period must be > 0");
  const BipedLayout layout = biped_layout(model);
  const double t_step = params.period;
  const double s_len = params.step_length;

  // Designed paths over one left-stance step, stance foot at the origin:
  // pelvis translates linearly, the swing foot follows a smoothstep in x and
  // a half-sine bump in z (non-zero downward velocity at touchdown).
  auto pelvis_at = [&](double tau) {
    return Vec2(-0.5 * s_len + s_len * tau, params.pelvis_height);
  };
  auto swing_at = [&](double tau) {
    const double s3 = tau * tau * (3.0 - 2.0 * tau);
    return Vec2(-s_len + 2.0 * s_len * s3,
                params.clearance * std::sin(M_PI * tau));
  };
  auto config_at = [&](double tau) {
    return biped_config(model, layout, pelvis_at(tau), 0.0, Vec2(0.0, 0.0),
                        swing_at(tau));
  };
  auto velocity_at = [&](double tau) {
    const double h = 1e-6;
    const double lo = std::max(0.0, tau - h), hi = std::min(1.0, tau + h);
    return ((config_at(hi) - config_at(lo)) / ((hi - lo) * t_step)).eval();
  };

  // Pre-impact state at the end of the step; the swing (right) foot lands.
  const VecX q_end = config_at(1.0);
  const VecX v_end = velocity_at(1.0);
  ConstraintSet landing;
  landing.constraints.push_back(Constraint::point_contact("right_foot"));
  const StackedJacobian jac =
      stacked_jacobian(landing, model, q_end, VecX::Zero(model.n_q()));
  const ImpactResult impact =
      impact_map(model, q_end, v_end, jac.j_full, landing.row_labels());

  // Relabel legs and shift back one step: that is the start of the same
  // template, so its boundary velocity must equal the mapped one.
  auto mirror = [&](const VecX& x, bool is_velocity) {
    VecX out = x;
    std::swap(out[layout.q_lh], out[layout.q_rh]);
    std::swap(out[layout.q_lk], out[layout.q_rk]);
    if (!is_velocity) out[0] -= s_len;
    return out;
  };
  const VecX q_start = mirror(q_end, false);
  const VecX v_start = mirror(impact.v_plus, true);
  if ((q_start - config_at(0.0)).cwiseAbs().maxCoeff() > 1e-6) {
    throw GenerationError("walking template is not periodic after relabeling");
  }

  // Knots for the one-step spline; interior knots use designed derivatives,
  // the first knot takes the impact-mapped velocity.
  const std::vector<double> taus = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> times;
  std::vector<VecX> values, derivs;
  for (const double tau : taus) {
    times.push_back(tau * t_step);
    values.push_back(config_at(tau));
    derivs.push_back(velocity_at(tau));
  }
  derivs.front() = v_start;
  values.front() = q_start;

  // Mirrored template for right-stance steps, expressed in the same foothold
  // frame as the left template (the per-step x shift is applied later).
  std::vector<VecX> values_m, derivs_m;
  for (size_t k = 0; k < values.size(); ++k) {
    values_m.push_back(mirror(values[k], false));
    values_m.back()[0] += s_len;
    derivs_m.push_back(mirror(derivs[k], true));
  }

  WalkingReference out;
  out.step_period = t_step;
  // Per-step splines concatenated so every step boundary carries the
  // impact-consistent velocity jump (the incoming step ends with the designed
  // pre-impact rate, the outgoing one starts with the mapped post-impact
  // rate). Extracting one coordinate uses the same per-step knots.
  auto step_knots = [&](int step, int dim /* -1: all */) {
    std::vector<VecX> vals, ders;
    for (size_t k = 0; k < taus.size(); ++k) {
      VecX v = (step % 2 == 0) ? values[k] : values_m[k];
      v[0] += step * s_len;
      const VecX& d = (step % 2 == 0) ? derivs[k] : derivs_m[k];
      if (dim < 0) {
        vals.push_back(v);
        ders.push_back(d);
      } else {
        vals.push_back(VecX::Constant(1, v[dim]));
        ders.push_back(VecX::Constant(1, d[dim]));
      }
    }
    return PiecewisePolynomial::cubic_hermite(times, vals, ders);
  };
  auto build = [&](int dim) {
    PiecewisePolynomial full = step_knots(0, dim);
    for (int step = 1; step < num_steps; ++step) {
      full.concatenate(step_knots(step, dim));
    }
    return full;
  };
  out.full_q = build(-1);
  out.left_hip = build(layout.q_lh);
  out.left_knee = build(layout.q_lk);
  out.right_hip = build(layout.q_rh);
  out.right_knee = build(layout.q_rk);
  for (int step = 0; step < num_steps; ++step) {
    out.impact_times.push_back((step + 1) * t_step);
    out.stance_modes.push_back(step % 2 == 0 ? mode::kLeftStance
                                             : mode::kRightStance);
  }

  out.initial_state.q = values.front();
  out.initial_state.v = derivs.front();
  return out;
}

// ---------------------------------------------------------------------------
// Jumping

JumpReference jump_reference(const RobotModel& model, const JumpParams& p) {
  biped_layout(model);  // layout check only
  const double g = model.gravity;
  if (!(p.apex_height > 0.0)) {
    throw GenerationError("jump apex must be above the standing height");
  }
  if (!(p.crouch_depth > 0.0) || p.crouch_depth >= p.stand_pelvis_height) {
    throw GenerationError("crouch depth inconsistent with standing height");
  }
  if (!(p.crouch_duration > 0.0) || !(p.land_duration > 0.0)) {
    throw GenerationError("jump phase durations must be > 0");
  }
  const double z0 = p.stand_pelvis_height;
  const double v_lo = std::sqrt(2.0 * g * p.apex_height);
  const double t_lo = p.crouch_duration;
  const double t_flight = 2.0 * v_lo / g;
  const double t_td = t_lo + t_flight;
  const double t_end = t_td + p.land_duration;

  JumpReference out;
  out.liftoff_time = t_lo;
  out.touchdown_time = t_td;
  out.end_time = t_end;

  // pelvis: crouch (hermite) -> exact parabola -> landing recovery (hermite)
  {
    std::vector<double> t = {0.0, 0.55 * t_lo, t_lo};
    VecX k0(2), k1(2), k2(2), d0(2), d1(2), d2(2);
    k0 << 0.0, z0;
    k1 << 0.0, z0 - p.crouch_depth;
    k2 << 0.0, z0;
    d0 << 0.0, 0.0;
    d1 << 0.0, 0.0;
    d2 << 0.0, v_lo;
    PiecewisePolynomial pelvis =
        PiecewisePolynomial::cubic_hermite(t, {k0, k1, k2}, {d0, d1, d2});
    MatX flight = MatX::Zero(2, 4);
    flight(1, 0) = z0;
    flight(1, 1) = v_lo;
    flight(1, 2) = -0.5 * g;
    pelvis.concatenate(PiecewisePolynomial({0.0, t_flight}, {flight}));
    std::vector<double> tl = {0.0, 0.4 * p.land_duration, p.land_duration};
    VecX l0(2), l1(2), l2(2), e0(2), e1(2), e2(2);
    l0 << 0.0, z0;
    l1 << 0.0, z0 - 0.8 * p.crouch_depth;
    l2 << 0.0, z0;
    e0 << 0.0, -v_lo;
    e1 << 0.0, 0.0;
    e2 << 0.0, 0.0;
    pelvis.concatenate(
        PiecewisePolynomial::cubic_hermite(tl, {l0, l1, l2}, {e0, e1, e2}));
    out.pelvis = pelvis;
  }
  out.torso_pitch = PiecewisePolynomial::constant(VecX::Zero(1), 0.0, t_end);

  // feet relative to the pelvis. Feet sit at +-half the stance split; during
  // flight the absolute foot height follows a clearance parabola while the
  // pelvis flies ballistically, so the relative trajectory is one quadratic.
  const double half_split = 0.1;
  for (int side = 0; side < 2; ++side) {
    const double x_rel = side == 0 ? -half_split : half_split;
    PiecewisePolynomial rel;
    {
      // stance before liftoff: rel = anchor - pelvis, sampled as knots
      std::vector<double> t = {0.0, 0.55 * t_lo, t_lo};
      std::vector<VecX> v;
      std::vector<VecX> d;
      for (const double tk : t) {
        VecX val(2), der(2);
        const double pzt = (tk == 0.0)        ? z0
                           : (tk == t_lo)     ? z0
                                              : z0 - p.crouch_depth;
        val << x_rel, 0.0 - pzt;
        der << 0.0, 0.0;
        v.push_back(val);
        d.push_back(der);
      }
      d[2] << 0.0, -v_lo;
      rel = PiecewisePolynomial::cubic_hermite(t, v, d);
    }
    {
      // flight: foot_abs_z(s) = 4 c s (T - s) / T^2, pelvis = z0 + v s - g s^2/2
      const double T = t_flight, c = p.flight_foot_clearance;
      MatX seg = MatX::Zero(2, 4);
      seg(0, 0) = x_rel;
      seg(1, 0) = -z0;
      seg(1, 1) = 4.0 * c / T - v_lo;
      seg(1, 2) = -4.0 * c / (T * T) + 0.5 * g;
      rel.concatenate(PiecewisePolynomial({0.0, T}, {seg}));
    }
    {
      std::vector<double> t = {0.0, 0.4 * p.land_duration, p.land_duration};
      std::vector<VecX> v, d;
      VecX v0(2), v1(2), v2(2), d0(2), d1(2), d2(2);
      v0 << x_rel, -z0;
      v1 << x_rel, -(z0 - 0.8 * p.crouch_depth);
      v2 << x_rel, -z0;
      d0 << 0.0, v_lo;
      d1 << 0.0, 0.0;
      d2 << 0.0, 0.0;
      rel.concatenate(PiecewisePolynomial::cubic_hermite(t, {v0, v1, v2},
                                                         {d0, d1, d2}));
    }
    if (side == 0) {
      out.foot_left = rel;
    } else {
      out.foot_right = rel;
    }
  }

  const BipedLayout layout = biped_layout(model);
  out.initial_state.q =
      biped_config(model, layout, Vec2(0.0, z0), 0.0, Vec2(-half_split, 0.0),
                   Vec2(half_split, 0.0));
  out.initial_state.v = VecX::Zero(model.n_q());
  return out;
}

// ---------------------------------------------------------------------------
// Running building blocks

double slip_pelvis_command(double rest_length, double y_slip, double ydot_slip,
                           double kp, double kd) {
  if (!(rest_length > 0.0)) {
    throw std::invalid_argument("slip rest length must be > 0");
  }
  return kp * (rest_length - y_slip) - kd * ydot_slip;
}

Vec2 raibert_footstep(double v_x, double v_des_x, const RaibertParams& p) {
  const double x = p.k_x * (v_des_x - v_x) +
                   p.neutral_coeff * v_x * p.stance_duration / 2.0;
  return {x, -p.rest_length};
}

PiecewisePolynomial swing_foot_spline(const Vec2& y0, const Vec2& y2,
                                      double t_total, double clearance) {
  if (!(t_total > 0.0)) {
    throw std::invalid_argument("swing duration must be > 0");
  }
  const double h1 = 0.6 * t_total;
  const Vec2 y1 = y0 + 0.8 * (y2 - y0) + Vec2(0.0, clearance);

  // Both quadratics have their stationary point at the waypoint, which makes
  // the junction C1 and puts the apex exactly at y1 for a symmetric swing.
  // sigma0(t) = y1 + (y0 - y1) ((h1 - t)/h1)^2 on [0, h1]
  MatX c0 = MatX::Zero(2, 4);
  c0.col(0) = y0;
  c0.col(1) = 2.0 * (y1 - y0) / h1;
  c0.col(2) = -(y1 - y0) / (h1 * h1);
  // sigma1(t) = y1 + (y2 - y1) ((t - h1)/(T - h1))^2 on [h1, T]
  const double h2 = t_total - h1;
  MatX c1 = MatX::Zero(2, 4);
  c1.col(0) = y1;
  c1.col(2) = (y2 - y1) / (h2 * h2);
  return PiecewisePolynomial({0.0, h1, t_total}, {c0, c1});
}

}  // namespace stride
