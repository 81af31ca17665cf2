#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stride/contact.hpp"
#include "stride/errors.hpp"
#include "stride/gait.hpp"
#include "test_models.hpp"

using namespace stride;
using namespace stride::testing;

TEST_CASE("adapted timings: identity at nominal, clipped at the bounds") {
  GaitTimings t;
  t.stance = 0.3;
  t.flight = 0.09;
  t.stance_variance = 0.2;
  t.flight_variance = 0.1;
  const double l = 0.7;
  const GaitTimings nominal = adapt_mode_timings(l, 0.0, l, t);
  CHECK(nominal.adapted_stance == doctest::Approx(0.3).epsilon(1e-12));

  // strong compression: stance would stretch far beyond the clip bound
  const GaitTimings clipped = adapt_mode_timings(0.3, 0.0, l, t);
  CHECK(clipped.adapted_stance == doctest::Approx(1.2 * 0.3));
  const GaitTimings clipped_low = adapt_mode_timings(2.0, 0.0, l, t);
  CHECK(clipped_low.adapted_stance == doctest::Approx(0.8 * 0.3));
  CHECK(clipped.adapted_flight >= (1.0 - t.flight_variance) * t.flight);
  CHECK(clipped.adapted_flight <= (1.0 + t.flight_variance) * t.flight);
}

TEST_CASE("ballistic flight prediction matches a point-mass simulation") {
  GaitTimings t;
  t.flight_variance = 10.0;  // effectively unclipped for this check
  t.flight = 0.2;
  const double l = 0.7, g = 9.81;
  const double y0 = 0.78, v0 = 0.6;
  const GaitTimings adapted = adapt_mode_timings(y0, v0, l, t, g);

  // simulate z(t) = y0 + v0 t - g t^2/2 until it falls to l
  double tm = 0.0, dt = 1e-7, z = y0, v = v0;
  while (true) {
    const double zn = y0 + v0 * (tm + dt) - 0.5 * g * (tm + dt) * (tm + dt);
    if (zn <= l) {
      const double frac = (z - l) / (z - zn);
      tm += frac * dt;
      break;
    }
    z = zn;
    v -= g * dt;
    tm += dt;
  }
  CHECK(std::abs(adapted.adapted_flight - tm) < 1e-6);
}

TEST_CASE("running FSM cycles LS -> LF -> RS -> RF -> LS") {
  FsmCycle cycle;
  cycle.stages = {{mode::kLS, FsmStage::Duration::kStance, 0.0},
                  {mode::kLF, FsmStage::Duration::kFlight, 0.0},
                  {mode::kRS, FsmStage::Duration::kStance, 0.0},
                  {mode::kRF, FsmStage::Duration::kFlight, 0.0}};
  GaitTimings t;
  t.adapted_stance = 0.3;
  t.adapted_flight = 0.09;
  FsmState fsm = fsm_init(cycle, 0.0, t);
  CHECK(fsm.mode == mode::kLS);
  // below the switch time: no-op
  CHECK(fsm_advance(cycle, fsm, 0.2, t).mode == mode::kLS);
  std::vector<int> seen;
  double clock = 0.0;
  for (int i = 0; i < 4; ++i) {
    clock = fsm.switch_time;
    fsm = fsm_advance(cycle, fsm, clock, t);
    seen.push_back(fsm.mode);
  }
  CHECK(seen == std::vector<int>{mode::kLF, mode::kRS, mode::kRF, mode::kLS});
  // full cycle duration is 2 (T_s* + T_f*)
  CHECK(clock == doctest::Approx(2.0 * (0.3 + 0.09)));
}

TEST_CASE("slip command: equilibrium, paper gains, oscillation frequency") {
  CHECK(slip_pelvis_command(0.85, 0.85, 0.0, 115.0, 5.0) == 0.0);
  // 5 cm compression at rest with kp = 115
  CHECK(slip_pelvis_command(0.85, 0.80, 0.0, 115.0, 0.0) ==
        doctest::Approx(5.75));

  // closed-loop linear dynamics: natural frequency sqrt(kp), damping
  // kd / (2 sqrt(kp)); verify the damped period by simulating the scalar ODE
  const double kp = 115.0, kd = 5.0, l = 0.85;
  double y = l - 0.05, v = 0.0, dt = 1e-6;
  std::vector<double> crossings;
  double prev = y - l;
  for (double t = 0.0; t < 2.0; t += dt) {
    const double a = slip_pelvis_command(l, y, v, kp, kd);
    v += a * dt;
    y += v * dt;
    const double e = y - l;
    if (prev < 0.0 && e >= 0.0) crossings.push_back(t);
    prev = e;
  }
  REQUIRE(crossings.size() >= 3);
  const double period = crossings[2] - crossings[1];
  const double wn = std::sqrt(kp);
  const double zeta = kd / (2.0 * wn);
  const double wd = wn * std::sqrt(1.0 - zeta * zeta);
  CHECK(period == doctest::Approx(2.0 * M_PI / wd).epsilon(1e-3));
}

TEST_CASE("raibert footstep: zero feedback at the target velocity") {
  RaibertParams p;
  p.k_x = 0.01;
  p.rest_length = 0.85;
  p.neutral_coeff = 0.0;
  const Vec2 at_target = raibert_footstep(1.5, 1.5, p);
  CHECK(at_target.x() == 0.0);
  CHECK(at_target.y() == doctest::Approx(-0.85));
  // feedback as printed: slower than commanded places the foot forward
  CHECK(raibert_footstep(1.0, 1.5, p).x() == doctest::Approx(0.005));
  // neutral-point term
  p.neutral_coeff = 1.0;
  p.stance_duration = 0.3;
  CHECK(raibert_footstep(2.0, 2.0, p).x() == doctest::Approx(2.0 * 0.15));
  // default configuration ships the deployed sagittal gain
  CHECK(RaibertParams{}.k_x == doctest::Approx(0.01));
}

TEST_CASE("swing spline: interpolation, continuity, and apex clearance") {
  const Vec2 y0(0.1, 0.0), y2(0.5, 0.02);
  const double T = 0.48, d = 0.2;
  const PiecewisePolynomial pp = swing_foot_spline(y0, y2, T, d);
  CHECK((pp.value(0.0) - VecX(y0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pp.value(T) - VecX(y2)).cwiseAbs().maxCoeff() < 1e-12);
  // C1 at the interior break
  const double h1 = 0.6 * T;
  CHECK(pp.max_value_discontinuity() < 1e-10);
  const VecX dl = pp.derivative(h1 - 1e-12);
  const VecX dr = pp.derivative(h1 + 1e-12);
  CHECK((dl - dr).cwiseAbs().maxCoeff() < 1e-6);

  // equal endpoints: apex exactly d above, at the waypoint
  const PiecewisePolynomial sym = swing_foot_spline(y0, y0, T, d);
  double zmax = -1e9;
  double argmax = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double t = T * i / 2000.0;
    const double z = sym.value(t)(1);
    if (z > zmax) {
      zmax = z;
      argmax = t;
    }
  }
  CHECK(zmax == doctest::Approx(y0.y() + d).epsilon(1e-9));
  CHECK(std::abs(argmax - h1) < T / 1000.0);
}

TEST_CASE("walking reference: symmetry, periodicity, impact-consistent jump") {
  const RobotModel m = biped();
  WalkingGaitParams params;
  params.step_length = 0.0;  // stepping in place
  params.period = 0.6;
  params.clearance = 0.06;
  params.pelvis_height = 0.7;
  const WalkingReference in_place = walking_reference(m, params, 2);
  // left/right references mirror between consecutive steps
  for (double t = 0.0; t < 0.6; t += 0.05) {
    CHECK(std::abs(in_place.left_hip.value(t)(0) -
                   in_place.right_hip.value(t + 0.6)(0)) < 1e-10);
    CHECK(std::abs(in_place.left_knee.value(t)(0) -
                   in_place.right_knee.value(t + 0.6)(0)) < 1e-10);
  }

  params.step_length = 0.3;
  const WalkingReference ref = walking_reference(m, params, 3);
  REQUIRE(ref.impact_times.size() == 3);
  CHECK(ref.impact_times[0] == doctest::Approx(0.6));

  // periodic after relabeling: q(t + T) = swap_legs(q(t)) + step shift
  for (double t = 0.05; t < 0.55; t += 0.1) {
    const VecX a = ref.full_q.value(t);
    const VecX b = ref.full_q.value(t + params.period);
    CHECK(std::abs(b[0] - (a[0] + params.step_length)) < 1e-9);
    CHECK(std::abs(b[1] - a[1]) < 1e-9);
    CHECK(std::abs(b[2] - a[2]) < 1e-9);
    CHECK(std::abs(b[3] - a[5]) < 1e-9);
    CHECK(std::abs(b[4] - a[6]) < 1e-9);
    CHECK(std::abs(b[5] - a[3]) < 1e-9);
    CHECK(std::abs(b[6] - a[4]) < 1e-9);
  }

  // the reference velocity jump at the impact equals the impact map applied
  // to the pre-impact reference state (lies in range(M^-1 J^T))
  const double t_impact = ref.impact_times[0];
  const VecX q_minus = ref.full_q.value(t_impact - 1e-9);
  const VecX v_minus = ref.full_q.derivative(t_impact - 1e-9);
  const VecX v_plus_ref = ref.full_q.derivative(t_impact + 1e-9);
  ConstraintSet landing;
  landing.constraints.push_back(Constraint::point_contact("right_foot"));
  const StackedJacobian jac =
      stacked_jacobian(landing, m, q_minus, VecX::Zero(m.n_q()));
  const ImpactResult r = impact_map(m, q_minus, v_minus, jac.j_full);
  CHECK((v_plus_ref - r.v_plus).cwiseAbs().maxCoeff() < 1e-6);
  // and the jump is exactly in the impulse range space
  const InvariantBasis basis = invariant_basis(m, q_minus, jac.j_full);
  CHECK((basis.basis * (v_plus_ref - v_minus)).cwiseAbs().maxCoeff() < 1e-6);

  // configuration continuity across the break
  CHECK(ref.full_q.max_value_discontinuity() < 1e-9);
}

TEST_CASE("walking reference rejects unreachable parameters") {
  const RobotModel m = biped();
  WalkingGaitParams params;
  params.step_length = 1.2;  // longer than both legs
  params.pelvis_height = 0.75;
  CHECK_THROWS_AS(walking_reference(m, params, 1), GenerationError);
}

TEST_CASE("jump reference: apex, ballistic flight, closed-form touchdown") {
  const RobotModel m = biped();
  JumpParams p;
  p.apex_height = 0.15;
  p.stand_pelvis_height = 0.7;
  const JumpReference ref = jump_reference(m, p);

  // apex is encoded 0.15 m above the standing pelvis height
  double zmax = -1e9;
  for (double t = ref.liftoff_time; t <= ref.touchdown_time; t += 1e-4) {
    zmax = std::max(zmax, ref.pelvis.value(t)(1));
  }
  CHECK(zmax == doctest::Approx(0.7 + 0.15).epsilon(1e-4));

  // the flight segment is exactly ballistic
  for (double t = ref.liftoff_time + 0.01; t < ref.touchdown_time; t += 0.05) {
    CHECK(ref.pelvis.second_derivative(t)(1) == doctest::Approx(-9.81));
  }

  // nominal touchdown from the closed-form fall time
  const double v_lo = std::sqrt(2.0 * 9.81 * 0.15);
  CHECK(ref.touchdown_time ==
        doctest::Approx(ref.liftoff_time + 2.0 * v_lo / 9.81).epsilon(1e-9));

  // generation errors for impossible parameters
  JumpParams bad = p;
  bad.crouch_depth = 1.0;
  CHECK_THROWS_AS(jump_reference(m, bad), GenerationError);
}

TEST_CASE("biped IK places the feet where asked") {
  const RobotModel m = biped();
  const Vec2 pelvis(0.2, 0.68);
  const Vec2 lf(0.05, 0.0), rf(0.4, 0.1);
  const VecX q = biped_ik(m, pelvis, 0.1, lf, rf);
  const VecX v = VecX::Zero(m.n_q());
  CHECK((frame_kinematics(m, q, v, "left_foot").position - lf).norm() < 1e-10);
  CHECK((frame_kinematics(m, q, v, "right_foot").position - rf).norm() <
        1e-10);
  CHECK(q[2] == doctest::Approx(0.1));
  // knees bend backwards
  CHECK(q[4] < 0.0);
  CHECK(q[6] < 0.0);
}
