#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <random>

#include "stride/gait.hpp"
#include "stride/osc.hpp"
#include "stride/sim.hpp"
#include "test_models.hpp"

using namespace stride;
using namespace stride::testing;

namespace {

TrackingObjective joint_objective(const std::string& name, int joint,
                                  double kp, double kd, double w,
                                  const Reference& ref) {
  TrackingObjective obj;
  obj.name = name;
  obj.kind = OutputKind::kJointAngle;
  obj.joint = joint;
  obj.kp = VecX::Constant(1, kp);
  obj.kd = VecX::Constant(1, kd);
  obj.weight = VecX::Constant(1, w);
  obj.reference = ref;
  return obj;
}

Reference constant_ref(const VecX& y, double t0 = 0.0, double t1 = 100.0) {
  return Reference(PiecewisePolynomial::constant(y, t0, t1));
}

ConstraintSet both_feet() {
  ConstraintSet s;
  s.constraints.push_back(Constraint::point_contact("left_foot"));
  s.constraints.push_back(Constraint::point_contact("right_foot"));
  return s;
}

// Standing configuration with a split stance.
ModelState standing_state(const RobotModel& m) {
  ModelState s;
  s.q = biped_ik(m, Vec2(0.0, 0.68), 0.0, Vec2(-0.1, 0.0), Vec2(0.1, 0.0));
  s.v = VecX::Zero(m.n_q());
  return s;
}

}  // namespace

TEST_CASE("blend alpha: window shape") {
  const double ts = 1.0, T = 0.05, tau = 0.002;
  CHECK(blend_alpha(ts - 1.5 * T - 1e-9, ts, T, tau) == 0.0);
  CHECK(blend_alpha(ts + 1.5 * T + 1e-9, ts, T, tau) == 0.0);
  CHECK(blend_alpha(ts, ts, T, tau) >= 0.99);
  // dense grid: range, unimodality (non-decreasing then non-increasing)
  double prev = -1.0;
  bool decreasing = false;
  for (int i = 0; i <= 400; ++i) {
    const double t = ts - 2.0 * T + 4.0 * T * i / 400.0;
    const double a = blend_alpha(t, ts, T, tau);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    if (a < prev - 1e-12) decreasing = true;
    if (decreasing) CHECK(a <= prev + 1e-12);
    prev = a;
  }
  // window 0 disables the blend entirely
  CHECK(blend_alpha(ts, ts, 0.0, tau) == 0.0);
}

TEST_CASE("commanded acceleration: zero error and blend off") {
  const RobotModel m = biped();
  VecX y_des(1), ydot_des(1);
  y_des << 0.4;
  ydot_des << 0.0;
  TrackingObjective obj =
      joint_objective("hip", 3, 100.0, 10.0, 1.0, constant_ref(y_des));
  // zero errors -> commanded equals reference acceleration (zero here)
  VecX cmd = commanded_acceleration(obj, 1.0, y_des, ydot_des, ydot_des, 0.0,
                                    ImpactStrategy::kProjection);
  CHECK(cmd.cwiseAbs().maxCoeff() < 1e-14);

  // alpha = 0 reduces to the plain PD law regardless of the projected value
  VecX y(1), ydot(1), ydot_proj(1);
  y << 0.5;
  ydot << -0.2;
  ydot_proj << 3.0;
  const VecX plain = commanded_acceleration(obj, 1.0, y, ydot, ydot_proj, 0.0,
                                            ImpactStrategy::kNone);
  const VecX blended = commanded_acceleration(obj, 1.0, y, ydot, ydot_proj,
                                              0.0, ImpactStrategy::kProjection);
  CHECK((plain - blended).cwiseAbs().maxCoeff() == 0.0);
  const double expected = 100.0 * (0.4 - 0.5) + 10.0 * (0.0 - (-0.2));
  CHECK(plain(0) == doctest::Approx(expected));
}

TEST_CASE("commanded acceleration: reference undefined raises out_of_range") {
  VecX y(1);
  y << 0.0;
  TrackingObjective obj =
      joint_objective("hip", 3, 1.0, 1.0, 1.0, constant_ref(y, 0.0, 1.0));
  CHECK_THROWS_AS(commanded_acceleration(obj, 5.0, y, y, y, 0.0,
                                         ImpactStrategy::kNone),
                  std::out_of_range);
}

TEST_CASE("assemble: no objectives, no contacts gives free fall") {
  const RobotModel m = biped();
  std::mt19937_64 rng(3);
  ModelState s;
  s.q = random_vector(rng, m.n_q(), 0.5);
  s.v = random_vector(rng, m.n_q(), 0.5);
  OscConfig cfg;
  cfg.w_input = 1e-2;
  cfg.w_accel = 1e-8;
  cfg.w_force = 1e-6;
  const QuadraticProgram qp =
      assemble_osc_qp(m, s, ConstraintSet{}, {}, {}, {}, cfg);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  const int n_u = m.n_u();
  CHECK(sol.z.head(n_u).cwiseAbs().maxCoeff() < 1e-6);
  const BiasForces bf = bias_and_gravity(m, s.q, s.v);
  const VecX qdd_free =
      mass_matrix(m, s.q).llt().solve(bf.gravity - bf.coriolis);
  CHECK((sol.z.tail(m.n_q()) - qdd_free).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("assemble: actuated joint objective reproduces the command") {
  const RobotModel m = body_with_pendulum();
  std::mt19937_64 rng(5);
  ModelState s;
  s.q = random_vector(rng, m.n_q(), 0.5);
  s.v = random_vector(rng, m.n_q(), 0.5);
  VecX y(1);
  y << 0.3;
  TrackingObjective obj =
      joint_objective("rod", 3, 50.0, 5.0, 1.0, constant_ref(y));
  OscConfig cfg;
  cfg.w_input = 1e-10;
  cfg.w_accel = 1e-10;
  cfg.w_force = 1e-10;
  VecX cmd(1);
  cmd << 2.7;
  const QuadraticProgram qp =
      assemble_osc_qp(m, s, ConstraintSet{}, {&obj}, {cmd}, {1.0}, cfg);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  const VecX qdd = sol.z.tail(m.n_q());
  CHECK(std::abs(qdd[3] - 2.7) < 1e-8);

  // analytic single-input inverse dynamics oracle
  const MatX minv = mass_matrix(m, s.q).inverse();
  const BiasForces bf = bias_and_gravity(m, s.q, s.v);
  const MatX b = m.actuation_matrix();
  const double denom = (minv.row(3) * b)(0);
  const double u_expected =
      (2.7 - (minv.row(3) * (bf.gravity - bf.coriolis))(0)) / denom;
  CHECK(std::abs(sol.z(0) - u_expected) < 1e-6);
}

TEST_CASE("double support with a downward pelvis command stays feasible") {
  const RobotModel m = biped();
  const ModelState s = standing_state(m);
  TrackingObjective pelvis;
  pelvis.name = "pelvis";
  pelvis.kind = OutputKind::kFramePosition;
  pelvis.frame = "pelvis";
  pelvis.kp = VecX::Constant(2, 50.0);
  pelvis.kd = VecX::Constant(2, 10.0);
  pelvis.weight = VecX::Constant(2, 10.0);
  pelvis.reference = constant_ref(s.q.head(2));
  OscConfig cfg;
  VecX cmd(2);
  cmd << 0.0, -30.0;  // accelerate the pelvis hard toward the ground
  const QuadraticProgram qp =
      assemble_osc_qp(m, s, both_feet(), {&pelvis}, {cmd}, {1.0}, cfg);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  const VecX lambda = sol.z.segment(m.n_u(), 4);
  CHECK(lambda(1) >= -1e-9);
  CHECK(lambda(3) >= -1e-9);
  CHECK(std::abs(lambda(0)) <= cfg.friction * lambda(1) + 1e-8);
  CHECK(std::abs(lambda(2)) <= cfg.friction * lambda(3) + 1e-8);
  // dynamics residual at the solution
  const BiasForces bf = bias_and_gravity(m, s.q, s.v);
  const StackedJacobian jac = stacked_jacobian(both_feet(), m, s.q, s.v);
  const VecX resid = mass_matrix(m, s.q) * sol.z.tail(m.n_q()) + bf.coriolis -
                     bf.gravity - m.actuation_matrix() * sol.z.head(m.n_u()) -
                     jac.j_full.transpose() * lambda;
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-8);
}

namespace {

OscController make_walking_style_controller(const RobotModel& m,
                                            ImpactStrategy strategy) {
  std::vector<TrackingObjective> objs;
  const ModelState s0 = standing_state(m);
  for (int j = 0; j < 4; ++j) {
    objs.push_back(joint_objective("joint" + std::to_string(j), 3 + j, 400.0,
                                   40.0, 1.0,
                                   constant_ref(s0.q.segment(3 + j, 1))));
  }
  std::map<int, ConstraintSet> modes;
  modes[0] = both_feet();
  OscConfig cfg;
  cfg.strategy = strategy;
  cfg.window = 0.05;
  cfg.tau = 0.002;
  return OscController(m, std::move(objs), std::move(modes), cfg);
}

}  // namespace

TEST_CASE("control step: determinism across identical ticks") {
  const RobotModel m = biped();
  OscController c = make_walking_style_controller(m, ImpactStrategy::kNone);
  const ModelState s = standing_state(m);
  const OscOutput a = c.control_step(s, 0, 0.1);
  const OscOutput b = c.control_step(s, 0, 0.1);
  REQUIRE(!a.fault);
  REQUIRE(!b.fault);
  CHECK(memcmp(a.u.data(), b.u.data(), sizeof(double) * a.u.size()) == 0);
}

TEST_CASE("control step: alpha=0 matches the unmodified controller bitwise") {
  const RobotModel m = biped();
  OscController plain = make_walking_style_controller(m, ImpactStrategy::kNone);
  OscController proj =
      make_walking_style_controller(m, ImpactStrategy::kProjection);
  ModelState s = standing_state(m);
  std::mt19937_64 rng(7);
  s.v = random_vector(rng, m.n_q(), 0.3);
  // window far in the future: alpha = 0
  ImpactWindow w;
  w.t_switch = 50.0;
  w.constraints = both_feet();
  const OscOutput a = plain.control_step(s, 0, 0.1);
  const OscOutput b = proj.control_step(s, 0, 0.1, w);
  REQUIRE(!a.fault);
  REQUIRE(!b.fault);
  CHECK(b.alpha == 0.0);
  CHECK(memcmp(a.u.data(), b.u.data(), sizeof(double) * a.u.size()) == 0);
}

TEST_CASE("control step: torques invariant to contact impulses at alpha=1") {
  const RobotModel m = biped();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    OscController c1 =
        make_walking_style_controller(m, ImpactStrategy::kProjection);
    OscController c2 =
        make_walking_style_controller(m, ImpactStrategy::kProjection);
    ModelState s = standing_state(m);
    s.q.segment(3, 4) += random_vector(rng, 4, 0.2);
    s.v = random_vector(rng, m.n_q(), 0.5);

    ImpactWindow w;
    w.t_switch = 0.1;  // alpha ~= 1 at t = t_switch
    w.constraints = both_feet();
    const StackedJacobian jac =
        stacked_jacobian(w.constraints, m, s.q, s.v);
    const MatX g = mass_matrix(m, s.q).llt().solve(jac.j_full.transpose());
    const VecX impulse = random_vector(rng, 4, 25.0);

    ModelState sp = s;
    sp.v += g * impulse;
    const OscOutput a = c1.control_step(s, 0, 0.1, w);
    const OscOutput b = c2.control_step(sp, 0, 0.1, w);
    REQUIRE(!a.fault);
    REQUIRE(!b.fault);
    REQUIRE(!a.projection_degenerate);
    CHECK((a.u - b.u).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("control step: solver fault holds the previous torque") {
  const RobotModel m = biped();
  std::vector<TrackingObjective> objs;
  const ModelState s0 = standing_state(m);
  objs.push_back(joint_objective("j", 3, 100.0, 10.0, 1.0,
                                 constant_ref(s0.q.segment(3, 1))));
  std::map<int, ConstraintSet> modes;
  modes[0] = both_feet();
  // impossible torque limits make the QP infeasible
  OscConfig cfg;
  cfg.strategy = ImpactStrategy::kNone;
  cfg.input_limits = VecX::Constant(4, -1.0);
  OscController c(m, std::move(objs), std::move(modes), cfg);
  const OscOutput out = c.control_step(s0, 0, 0.0);
  CHECK(out.fault);
  CHECK(out.u.cwiseAbs().maxCoeff() == 0.0);  // no previous command yet
}

TEST_CASE("step response follows the second-order gain envelope") {
  // Pelvis-height objective on the standing biped; the closed-loop output
  // should follow edot2 = -kp e - kd edot from the commanded acceleration.
  const RobotModel m = biped();
  const ModelState s0 = standing_state(m);
  const double kp = 100.0, kd = 20.0;  // critically damped, wn = 10
  TrackingObjective pelvis;
  pelvis.name = "pelvis_z";
  pelvis.kind = OutputKind::kFramePosition;
  pelvis.frame = "pelvis";
  pelvis.kp = VecX::Constant(2, kp);
  pelvis.kd = VecX::Constant(2, kd);
  pelvis.weight = VecX::Constant(2, 10.0);
  VecX target = s0.q.head(2);
  const double step_size = 0.02;
  target(1) += step_size;
  pelvis.reference = constant_ref(target);
  TrackingObjective pitch;
  pitch.name = "pitch";
  pitch.kind = OutputKind::kLinkOrientation;
  pitch.link = 0;
  pitch.kp = VecX::Constant(1, 100.0);
  pitch.kd = VecX::Constant(1, 20.0);
  pitch.weight = VecX::Constant(1, 1.0);
  pitch.reference = constant_ref(VecX::Zero(1));
  std::map<int, ConstraintSet> modes;
  modes[0] = both_feet();
  auto controller = std::make_shared<OscController>(
      m, std::vector<TrackingObjective>{pelvis, pitch}, std::move(modes),
      OscConfig{});

  HybridSchedule schedule;
  schedule.modes.push_back({0, both_feet()});
  schedule.initial_mode = 0;
  SimOptions opts;
  const SimTrace trace = simulate(
      m, schedule,
      [&](double t, const ModelState& st) {
        return controller->control_step(st, 0, t).u;
      },
      s0, 1.0, opts);
  REQUIRE(trace.completed);

  // critically damped analytic envelope: e(t) = e0 (1 + wn t) exp(-wn t)
  const double wn = std::sqrt(kp);
  double worst = 0.0;
  for (const TraceRow& row : trace.rows) {
    const double e_sim = target(1) - row.q(1);
    const double e_ref = step_size * (1.0 + wn * row.t) * std::exp(-wn * row.t);
    worst = std::max(worst, std::abs(e_sim - e_ref));
  }
  CHECK(worst < 0.15 * step_size);
}
