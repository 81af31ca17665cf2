#include "stride/osc.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include "stride/errors.hpp"

namespace stride {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Reference::Reference(PiecewisePolynomial traj) : traj_(std::move(traj)) {}

Reference::Reference(std::function<ReferenceSample(double)> generator,
                     double t_start, double t_end)
    : generator_(std::move(generator)), gen_start_(t_start), gen_end_(t_end) {}

bool Reference::defined_at(double t) const {
  if (generator_) return t >= gen_start_ - 1e-12 && t <= gen_end_ + 1e-12;
  return traj_.defined_at(t);
}

ReferenceSample Reference::sample(double t) const {
  if (generator_) {
    if (!defined_at(t)) {
      throw std::out_of_range("reference undefined at t=" + std::to_string(t));
    }
    return generator_(t);
  }
  ReferenceSample s;
  s.y = traj_.value(t);  // throws out_of_range outside the domain
  s.ydot = traj_.derivative(t);
  s.yddot = traj_.second_derivative(t);
  return s;
}

int TrackingObjective::dim() const {
  switch (kind) {
    case OutputKind::kFramePosition:
    case OutputKind::kRelativeFramePosition:
      return 2;
    case OutputKind::kJointAngle:
    case OutputKind::kLinkOrientation:
      return 1;
  }
  return 0;
}

OutputEval eval_output(const TrackingObjective& obj, const RobotModel& model,
                       ConstVecRef q, ConstVecRef v) {
  OutputEval out;
  switch (obj.kind) {
    case OutputKind::kFramePosition: {
      const FrameKinematics fk = frame_kinematics(model, q, v, obj.frame);
      out.y = fk.position;
      out.jacobian = fk.jacobian;
      out.jdot_v = fk.jdot_times_v;
      return out;
    }
    case OutputKind::kRelativeFramePosition: {
      const FrameKinematics fk = frame_kinematics(model, q, v, obj.frame);
      const FrameKinematics base = frame_kinematics(model, q, v, obj.base_frame);
      out.y = fk.position - base.position;
      out.jacobian = fk.jacobian - base.jacobian;
      out.jdot_v = fk.jdot_times_v - base.jdot_times_v;
      return out;
    }
    case OutputKind::kJointAngle: {
      out.y = VecX::Constant(1, q[obj.joint]);
      out.jacobian = MatX::Zero(1, model.n_q());
      out.jacobian(0, obj.joint) = 1.0;
      out.jdot_v = VecX::Zero(1);
      return out;
    }
    case OutputKind::kLinkOrientation: {
      double theta = q[2];
      out.jacobian = MatX::Zero(1, model.n_q());
      out.jacobian(0, 2) = 1.0;
      for (int w = obj.link; w > 0; w = model.links[w].parent) {
        theta += q[model.joint_index(w)];
        out.jacobian(0, model.joint_index(w)) = 1.0;
      }
      out.y = VecX::Constant(1, theta);
      out.jdot_v = VecX::Zero(1);
      return out;
    }
  }
  throw std::invalid_argument("unknown output kind");
}

void validate_objective(const TrackingObjective& obj, const RobotModel& model) {
  const int d = obj.dim();
  if (obj.kp.size() != d || obj.kd.size() != d || obj.weight.size() != d) {
    throw std::invalid_argument("objective '" + obj.name +
                                "': gain/weight size mismatch");
  }
  if (obj.kp.minCoeff() < 0.0 || obj.kd.minCoeff() < 0.0 ||
      obj.weight.minCoeff() < 0.0) {
    throw std::invalid_argument("objective '" + obj.name +
                                "': gains and weights must be >= 0");
  }
  // Finite-difference check of the output Jacobian on a few states.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 3; ++trial) {
    VecX q(model.n_q());
    for (int i = 0; i < q.size(); ++i) q[i] = dist(rng);
    const VecX zero = VecX::Zero(model.n_q());
    const OutputEval e = eval_output(obj, model, q, zero);
    for (int k = 0; k < model.n_q(); ++k) {
      VecX qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      const VecX col = (eval_output(obj, model, qp, zero).y -
                        eval_output(obj, model, qm, zero).y) /
                       (2.0 * h);
      if ((col - e.jacobian.col(k)).cwiseAbs().maxCoeff() > 1e-5) {
        throw std::invalid_argument("objective '" + obj.name +
                                    "': jacobian disagrees with finite "
                                    "differences");
      }
    }
  }
}

double blend_alpha(double t, double t_switch, double window, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("blend_alpha: tau must be > 0");
  if (window < 0.0) throw std::invalid_argument("blend_alpha: window must be >= 0");
  if (window == 0.0) return 0.0;
  if (std::abs(t - t_switch) > 1.5 * window) return 0.0;
  const double a = sigmoid((t - (t_switch - window)) / tau) *
                   sigmoid(((t_switch + window) - t) / tau);
  return std::clamp(a, 0.0, 1.0);
}

VecX commanded_acceleration(const TrackingObjective& obj, double t,
                            ConstVecRef y, ConstVecRef ydot,
                            ConstVecRef ydot_proj, double alpha,
                            ImpactStrategy strategy) {
  const ReferenceSample ref = obj.reference.sample(t);
  VecX ydot_eff = ydot;
  double kd_scale = 1.0;
  if (strategy == ImpactStrategy::kProjection) {
    ydot_eff = ydot + alpha * (ydot_proj - ydot);
  } else if (strategy == ImpactStrategy::kNoDerivative) {
    kd_scale = 1.0 - alpha;
  }
  return ref.yddot + obj.kp.cwiseProduct(ref.y - y) +
         kd_scale * obj.kd.cwiseProduct(ref.ydot - ydot_eff);
}

QuadraticProgram assemble_osc_qp(
    const RobotModel& model, const ModelState& state,
    const ConstraintSet& active,
    const std::vector<const TrackingObjective*>& objectives,
    const std::vector<VecX>& yddot_cmd, const std::vector<double>& weight_scales,
    const OscConfig& config) {
  const int n_q = model.n_q();
  const int n_u = model.n_u();
  const int n_c = active.dimension();
  const int n = n_u + n_c + n_q;
  const int off_u = 0, off_l = n_u, off_a = n_u + n_c;
  if (yddot_cmd.size() != objectives.size() ||
      weight_scales.size() != objectives.size()) {
    throw AssemblyError("assemble_osc_qp: per-objective array size mismatch");
  }

  QuadraticProgram qp;
  qp.hessian = MatX::Zero(n, n);
  qp.gradient = VecX::Zero(n);
  qp.hessian.block(off_u, off_u, n_u, n_u) =
      2.0 * config.w_input * MatX::Identity(n_u, n_u);
  qp.hessian.block(off_l, off_l, n_c, n_c) =
      2.0 * config.w_force * MatX::Identity(n_c, n_c);
  qp.hessian.block(off_a, off_a, n_q, n_q) =
      2.0 * config.w_accel * MatX::Identity(n_q, n_q);

  for (size_t i = 0; i < objectives.size(); ++i) {
    const TrackingObjective& obj = *objectives[i];
    const OutputEval e = eval_output(obj, model, state.q, state.v);
    if (yddot_cmd[i].size() != obj.dim()) {
      throw AssemblyError("assemble_osc_qp: commanded acceleration for '" +
                          obj.name + "' has wrong dimension");
    }
    const VecX w = weight_scales[i] * obj.weight;
    const VecX resid = e.jdot_v - yddot_cmd[i];
    qp.hessian.block(off_a, off_a, n_q, n_q) +=
        2.0 * e.jacobian.transpose() * w.asDiagonal() * e.jacobian;
    qp.gradient.segment(off_a, n_q) +=
        2.0 * e.jacobian.transpose() * w.cwiseProduct(resid);
  }

  const MatX mass = mass_matrix(model, state.q);
  const BiasForces bias = bias_and_gravity(model, state.q, state.v);
  const MatX b_mat = model.actuation_matrix();
  const StackedJacobian jac = stacked_jacobian(active, model, state.q, state.v);

  qp.a_eq = MatX::Zero(n_q + n_c, n);
  qp.b_eq = VecX::Zero(n_q + n_c);
  qp.a_eq.block(0, off_u, n_q, n_u) = -b_mat;
  qp.a_eq.block(0, off_l, n_q, n_c) = -jac.j_full.transpose();
  qp.a_eq.block(0, off_a, n_q, n_q) = mass;
  qp.b_eq.head(n_q) = bias.gravity - bias.coriolis;
  if (n_c > 0) {
    qp.a_eq.block(n_q, off_a, n_c, n_q) = jac.j_full;
    qp.b_eq.tail(n_c) = -jac.jdot_v;
  }

  // Friction pyramid and normal-force rows per point contact, torque boxes.
  const std::vector<int> contacts = active.contact_row_offsets();
  VecX limits = config.input_limits;
  if (limits.size() == 0) limits = model.torque_limit;
  const bool boxed = limits.size() == n_u;
  const int n_in = static_cast<int>(contacts.size()) * 3 + (boxed ? 2 * n_u : 0);
  qp.a_in = MatX::Zero(n_in, n);
  qp.b_in = VecX::Zero(n_in);
  int row = 0;
  for (const int c : contacts) {
    const int lt = off_l + c, ln = off_l + c + 1;
    qp.a_in(row, lt) = 1.0;
    qp.a_in(row, ln) = -config.friction;
    ++row;
    qp.a_in(row, lt) = -1.0;
    qp.a_in(row, ln) = -config.friction;
    ++row;
    qp.a_in(row, ln) = -1.0;  // lambda_n >= 0
    ++row;
  }
  if (boxed) {
    for (int i = 0; i < n_u; ++i) {
      qp.a_in(row, off_u + i) = 1.0;
      qp.b_in(row) = limits[i];
      ++row;
      qp.a_in(row, off_u + i) = -1.0;
      qp.b_in(row) = limits[i];
      ++row;
    }
  }

  for (int i = 0; i < n_u; ++i) {
    qp.variable_names.push_back("u_" + model.links[model.actuated[i]].name);
  }
  for (const std::string& label : active.row_labels()) {
    qp.variable_names.push_back("lambda_" + label);
  }
  for (int i = 0; i < n_q; ++i) {
    qp.variable_names.push_back("qdd_" + std::to_string(i));
  }
  qp.finish();
  return qp;
}

OscController::OscController(RobotModel model,
                             std::vector<TrackingObjective> objectives,
                             std::map<int, ConstraintSet> mode_constraints,
                             OscConfig config)
    : model_(std::move(model)),
      objectives_(std::move(objectives)),
      mode_constraints_(std::move(mode_constraints)),
      config_(std::move(config)) {
  for (const TrackingObjective& obj : objectives_) {
    validate_objective(obj, model_);
  }
  prev_u_ = VecX::Zero(model_.n_u());
}

void OscController::reset() {
  warm_active_.clear();
  warm_mode_ = -1;
  prev_u_ = VecX::Zero(model_.n_u());
  degenerate_count_ = 0;
}

OscOutput OscController::control_step(const ModelState& state, int mode,
                                      double t,
                                      const std::optional<ImpactWindow>& window,
                                      double mode_phase) {
  const auto it = mode_constraints_.find(mode);
  if (it == mode_constraints_.end()) {
    throw std::invalid_argument("controller has no constraint set for mode " +
                                std::to_string(mode));
  }
  const ConstraintSet& active = it->second;

  OscOutput out;
  out.alpha = 0.0;
  if (window.has_value() && config_.strategy != ImpactStrategy::kNone) {
    out.alpha = blend_alpha(t, window->t_switch, config_.window, config_.tau);
  }

  // Gather the active objectives.
  std::vector<const TrackingObjective*> objs;
  for (const TrackingObjective& obj : objectives_) {
    if (obj.active_modes.empty() || obj.active_modes.count(mode) > 0) {
      objs.push_back(&obj);
    }
  }

  // Projected velocity for the anticipated impact. The blended velocity is
  // used for the whole controller tick (feedback, bias forces, Jdot v terms),
  // so with alpha = 1 every input to the QP is a function of the projected
  // velocity only.
  VecX v_eff = state.v;
  VecX v_proj = state.v;
  if (out.alpha > 0.0 && config_.strategy == ImpactStrategy::kProjection &&
      !window->constraints.empty()) {
    const StackedJacobian impact_jac =
        stacked_jacobian(window->constraints, model_, state.q, state.v);
    int n_y = 0;
    for (const TrackingObjective* o : objs) n_y += o->dim();
    MatX j_y(n_y, model_.n_q());
    VecX ydot_des(n_y);
    int r = 0;
    bool refs_ok = true;
    for (const TrackingObjective* o : objs) {
      const OutputEval e = eval_output(*o, model_, state.q, state.v);
      if (!o->reference.defined_at(t)) {
        refs_ok = false;
        break;
      }
      j_y.middleRows(r, o->dim()) = e.jacobian;
      ydot_des.segment(r, o->dim()) = o->reference.sample(t).ydot;
      r += o->dim();
    }
    if (refs_ok) {
      try {
        const ProjectedVelocity proj = projected_velocity(
            model_, state.q, state.v, impact_jac.j_full,
            impact_jac.j_unambiguous, j_y, ydot_des);
        v_proj = proj.v_proj;
        v_eff = state.v + out.alpha * (v_proj - state.v);
      } catch (const DegenerateProjectionError& e) {
        ++degenerate_count_;
        out.projection_degenerate = true;
        if (degenerate_count_ <= 3) {
          std::cerr << "osc: projection degenerate at t=" << t << ": "
                    << e.what() << "\n";
        }
      }
    }
  }

  const ModelState eff_state{state.q, v_eff};
  std::vector<VecX> cmds;
  std::vector<double> scales;
  cmds.reserve(objs.size());
  for (const TrackingObjective* o : objs) {
    const OutputEval e = eval_output(*o, model_, state.q, state.v);
    const VecX ydot_meas = e.jacobian * state.v;
    const VecX ydot_proj = e.jacobian * v_proj;
    cmds.push_back(commanded_acceleration(*o, t, e.y, ydot_meas, ydot_proj,
                                          out.alpha, config_.strategy));
    const double phase = std::clamp(mode_phase, 0.0, 1.0);
    scales.push_back(o->weight_ramp_start +
                     (o->weight_ramp_end - o->weight_ramp_start) * phase);

    ObjectiveDiagnostics diag;
    diag.name = o->name;
    const ReferenceSample ref = o->reference.sample(t);
    diag.y_err = ref.y - e.y;
    diag.ydot_err = ref.ydot - ydot_meas;
    diag.ydot_err_proj = ref.ydot - (ydot_meas + out.alpha * (ydot_proj - ydot_meas));
    diag.yddot_cmd = cmds.back();
    out.objectives.push_back(std::move(diag));
  }

  QuadraticProgram qp = assemble_osc_qp(model_, eff_state, active, objs, cmds,
                                        scales, config_);
  const std::vector<int>* warm =
      (warm_mode_ == mode && !warm_active_.empty()) ? &warm_active_ : nullptr;
  const QpSolution sol = solve_qp(qp, warm);

  out.qp_status = sol.status;
  out.solve_time = sol.solve_time;
  out.qp_iterations = sol.iterations;
  const int n_u = model_.n_u();
  const int n_c = active.dimension();
  if (sol.status == QpStatus::kOptimal) {
    out.u = sol.z.head(n_u);
    out.lambda = sol.z.segment(n_u, n_c);
    out.qdd = sol.z.tail(model_.n_q());
    prev_u_ = out.u;
    warm_active_ = sol.active_set;
    warm_mode_ = mode;
  } else {
    out.fault = true;
    out.u = prev_u_;
    out.lambda = VecX::Zero(n_c);
    out.qdd = VecX::Zero(model_.n_q());
    warm_active_.clear();
    warm_mode_ = -1;
  }
  return out;
}

}  // namespace stride
