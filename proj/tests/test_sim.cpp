#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stride/errors.hpp"
#include "stride/gait.hpp"
#include "stride/sim.hpp"
#include "test_models.hpp"

using namespace stride;
using namespace stride::testing;

namespace {

ConstraintSet pin_base(const Vec2& anchor = Vec2::Zero()) {
  ConstraintSet s;
  s.constraints.push_back(Constraint::point_contact("origin", anchor));
  return s;
}

}  // namespace

TEST_CASE("unconstrained dynamics equal M^-1 (Bu + g - C)") {
  const RobotModel m = body_with_pendulum();
  std::mt19937_64 rng(3);
  ModelState s;
  s.q = random_vector(rng, m.n_q(), 1.0);
  s.v = random_vector(rng, m.n_q(), 1.0);
  const VecX u = random_vector(rng, m.n_u(), 5.0);
  const StackedJacobian jac = stacked_jacobian(ConstraintSet{}, m, s.q, s.v);
  const ConstrainedDynamicsResult dyn = constrained_dynamics(m, s, u, jac);
  const BiasForces bf = bias_and_gravity(m, s.q, s.v);
  const VecX expected = mass_matrix(m, s.q).llt().solve(
      m.actuation_matrix() * u + bf.gravity - bf.coriolis);
  CHECK((dyn.qdd - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pinned body at rest carries its weight in the constraint force") {
  // free body pinned at its frame 'origin', COM hanging below
  const RobotModel m = free_body(2.0, 0.1, 0.3);
  ModelState s;
  s.q = VecX::Zero(3);
  s.v = VecX::Zero(3);
  const ConstraintSet pin = pin_base();
  const StackedJacobian jac = stacked_jacobian(pin, m, s.q, s.v);
  const ConstrainedDynamicsResult dyn =
      constrained_dynamics(m, s, VecX::Zero(0), jac);
  CHECK(dyn.qdd.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(dyn.lambda(0)) < 1e-9);
  CHECK(dyn.lambda(1) == doctest::Approx(2.0 * 9.81).epsilon(1e-9));
}

TEST_CASE("acceleration-level constraint residual vanishes") {
  const RobotModel m = biped();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    ModelState s;
    s.q = random_vector(rng, m.n_q(), 0.8);
    s.v = random_vector(rng, m.n_q(), 1.0);
    ConstraintSet set;
    set.constraints.push_back(Constraint::point_contact(
        "left_foot", frame_kinematics(m, s.q, s.v, "left_foot").position));
    const StackedJacobian jac = stacked_jacobian(set, m, s.q, s.v);
    const BaumgarteGains gains;
    const ConstrainedDynamicsResult dyn =
        constrained_dynamics(m, s, VecX::Zero(4), jac, gains);
    const VecX resid = jac.j_full * dyn.qdd + jac.jdot_v +
                       2.0 * gains.zeta * gains.omega * (jac.j_full * s.v) +
                       gains.omega * gains.omega * jac.position_error;
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("ballistic flight matches the closed form to first order") {
  const RobotModel m = free_body(1.0, 1.0);
  ModelState s;
  s.q = VecX::Zero(3);
  s.v = VecX::Zero(3);
  s.v << 1.0, 2.0, 0.5;
  const double dt = 5e-4, duration = 1.0;
  ModelState cur = s;
  for (int k = 0; k < static_cast<int>(duration / dt); ++k) {
    cur = integrate_step(m, cur, VecX::Zero(0), ConstraintSet{}, dt);
  }
  // closed-form oracle
  const double g = 9.81;
  CHECK(std::abs(cur.q[0] - 1.0 * duration) < 1e-9);
  CHECK(std::abs(cur.q[1] - (2.0 * duration - 0.5 * g * duration * duration)) <
        g * dt * duration);  // first-order position bound
  CHECK(std::abs(cur.v[1] - (2.0 - g * duration)) < 1e-9);

  // the symplectic-shifted energy of the discrete flow is conserved exactly
  const double e0 = 0.5 * s.v.squaredNorm() + g * s.q[1] - 0.5 * dt * g * s.v[1];
  const double e1 =
      0.5 * cur.v.squaredNorm() + g * cur.q[1] - 0.5 * dt * g * cur.v[1];
  CHECK(std::abs(e1 - e0) < 1e-6);
}

TEST_CASE("energy rate equals input power along unconstrained motion") {
  const RobotModel m = body_with_pendulum();
  std::mt19937_64 rng(7);
  ModelState s;
  s.q = random_vector(rng, m.n_q(), 0.5);
  s.v = random_vector(rng, m.n_q(), 0.5);
  const VecX u = random_vector(rng, m.n_u(), 2.0);
  const double dt = 1e-5;
  const ModelState next = integrate_step(m, s, u, ConstraintSet{}, dt);
  const double ke0 = 0.5 * s.v.dot(mass_matrix(m, s.q) * s.v);
  const double ke1 = 0.5 * next.v.dot(mass_matrix(m, next.q) * next.v);
  const BiasForces bf = bias_and_gravity(m, s.q, s.v);
  const double power =
      s.v.dot(m.actuation_matrix() * u + bf.gravity - bf.coriolis);
  CHECK(std::abs((ke1 - ke0) / dt - power) < 1e-2 * (1.0 + std::abs(power)));
}

TEST_CASE("pinned constraint drift stays bounded over 10 s") {
  const RobotModel m = free_body(1.0, 0.2, 0.3);
  ModelState s;
  s.q = VecX::Zero(3);
  s.v = VecX::Zero(3);
  s.v[2] = 2.0;  // swing
  const ConstraintSet pin = pin_base();
  ModelState cur = s;
  double worst = 0.0;
  for (int k = 0; k < 20000; ++k) {
    cur = integrate_step(m, cur, VecX::Zero(0), pin, 5e-4);
    worst = std::max(worst, cur.q.head<2>().norm());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("halving dt shrinks the trajectory error about linearly") {
  const RobotModel m = free_body(1.0, 0.2, 0.3);
  auto run = [&](double dt) {
    ModelState cur;
    cur.q = VecX::Zero(3);
    cur.v = VecX::Zero(3);
    cur.v[2] = 1.0;
    for (int k = 0; k < static_cast<int>(0.5 / dt); ++k) {
      cur = integrate_step(m, cur, VecX::Zero(0), ConstraintSet{}, dt);
    }
    return cur.q;
  };
  const VecX ref = run(1e-6);
  const double e1 = (run(1e-3) - ref).cwiseAbs().maxCoeff();
  const double e2 = (run(5e-4) - ref).cwiseAbs().maxCoeff();
  CHECK(e1 / e2 > 1.5);
  CHECK(e1 / e2 < 3.0);
}

TEST_CASE("event time: linear guard and ballistic foot height") {
  const RobotModel m = free_body(1.0, 1.0);
  ModelState before, after;
  before.q = VecX::Zero(3);
  before.v = VecX::Zero(3);
  after = before;
  after.q[1] = -1.0;
  // guard linear in z: crosses zero mid-step
  const double t_event = find_event_time(
      [](double, const ModelState& s) { return s.q[1] + 0.5; }, before, after,
      0.0, 1.0, nullptr);
  CHECK(std::abs(t_event - 0.5) < 1e-9);

  // ballistic drop from 5 cm: root of z0 - g t^2 / 2
  ModelState s;
  s.q = VecX::Zero(3);
  s.q[1] = 0.05;
  s.v = VecX::Zero(3);
  const double dt = 5e-4;
  ModelState cur = s;
  double t = 0.0;
  double hit = -1.0;
  for (int k = 0; k < 1000; ++k) {
    const ModelState next =
        integrate_step(m, cur, VecX::Zero(0), ConstraintSet{}, dt);
    if (next.q[1] <= 0.0) {
      ModelState at;
      hit = find_event_time(
          [](double, const ModelState& st) { return st.q[1]; }, cur, next, t,
          dt, &at);
      break;
    }
    cur = next;
    t += dt;
  }
  REQUIRE(hit > 0.0);
  // the discrete flow hits z=0 slightly off the continuous root; bound by dt
  const double root = std::sqrt(2.0 * 0.05 / 9.81);
  CHECK(std::abs(hit - root) < 2.0 * dt);

  // interpolated-state residual at the reported event is tiny
  ModelState at;
  find_event_time([](double, const ModelState& st) { return st.q[1]; }, cur,
                  integrate_step(m, cur, VecX::Zero(0), ConstraintSet{}, dt),
                  t, dt, &at);
  CHECK(std::abs(at.q[1]) < 1e-7);
}

TEST_CASE("event time: no crossing raises, tangential touch is degenerate") {
  ModelState a, b;
  a.q = VecX::Ones(3);
  a.v = VecX::Zero(3);
  b = a;
  CHECK_THROWS_AS(find_event_time(
                      [](double, const ModelState&) { return 1.0; }, a, b, 0.0,
                      1.0, nullptr),
                  NotAnEventError);
  // guard dips to exactly zero at the midpoint: quadratic in the interpolant
  b.q[0] = -1.0;  // interpolation parameter s runs 0..1 over q[0] from 1 to -1
  const double t = find_event_time(
      [](double, const ModelState& s) { return s.q[0] * s.q[0]; }, a, b, 0.0,
      1.0, nullptr);
  CHECK(std::abs(t - 0.5) < 1e-6);
}

TEST_CASE("scripted drop produces exactly one impact with a dead foot") {
  const RobotModel m = biped();
  // start airborne, feet 5 cm up
  ModelState s;
  s.q = biped_ik(m, Vec2(0.0, 0.73), 0.0, Vec2(-0.1, 0.05), Vec2(0.1, 0.05));
  s.v = VecX::Zero(m.n_q());

  HybridSchedule schedule;
  SimMode air{0, ConstraintSet{}};
  ConstraintSet both;
  both.constraints.push_back(Constraint::point_contact("left_foot"));
  both.constraints.push_back(Constraint::point_contact("right_foot"));
  SimMode land{1, both};
  schedule.modes = {air, land};
  Guard g;
  g.name = "touchdown";
  g.value = [&m](double, const ModelState& st, ConstVecRef, ConstVecRef) {
    const double zl = frame_kinematics(m, st.q, st.v, "left_foot").position.y();
    const double zr =
        frame_kinematics(m, st.q, st.v, "right_foot").position.y();
    return std::min(zl, zr);
  };
  g.target_mode = 1;
  g.apply_impact = true;
  schedule.guards[0].push_back(g);
  schedule.initial_mode = 0;

  const SimTrace trace = simulate(
      m, schedule, [&](double, const ModelState&) { return VecX::Zero(4); }, s,
      0.3, SimOptions{});
  REQUIRE(trace.completed);
  int impacts = 0;
  for (const SimEvent& e : trace.events) {
    if (e.kind == "impact") {
      ++impacts;
      CHECK(e.post_constraint_speed < 1e-8);
      // configuration continuous, velocity jump in range(M^-1 J^T), energy drop
      CHECK((e.q_event - e.q_event).cwiseAbs().maxCoeff() == 0.0);
      const MatX mm = mass_matrix(m, e.q_event);
      const double ke_pre = 0.5 * e.v_minus.dot(mm * e.v_minus);
      const double ke_post = 0.5 * e.v_plus.dot(mm * e.v_plus);
      CHECK(ke_post <= ke_pre + 1e-12);
      const StackedJacobian jac =
          stacked_jacobian(both, m, e.q_event, VecX::Zero(m.n_q()));
      const InvariantBasis basis = invariant_basis(m, e.q_event, jac.j_full);
      CHECK((basis.basis * (e.v_plus - e.v_minus)).cwiseAbs().maxCoeff() <
            1e-9);
    }
  }
  CHECK(impacts == 1);
}

TEST_CASE("simulate is deterministic and keeps time accounting") {
  const RobotModel m = free_body(1.0, 1.0);
  ModelState s;
  s.q = VecX::Zero(3);
  s.q[1] = 2.0;
  s.v = VecX::Zero(3);
  HybridSchedule schedule;
  schedule.modes = {SimMode{0, ConstraintSet{}}};
  schedule.initial_mode = 0;
  auto ctrl = [](double, const ModelState&) { return VecX::Zero(0); };
  const SimTrace a = simulate(m, schedule, ctrl, s, 0.5, SimOptions{});
  const SimTrace b = simulate(m, schedule, ctrl, s, 0.5, SimOptions{});
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(std::abs(a.rows.back().t - 0.5) < 5e-4 + 1e-12);
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(memcmp(a.rows[i].q.data(), b.rows[i].q.data(),
                 sizeof(double) * a.rows[i].q.size()) == 0);
    CHECK(memcmp(a.rows[i].v.data(), b.rows[i].v.data(),
                 sizeof(double) * a.rows[i].v.size()) == 0);
  }
}

TEST_CASE("divergence truncates the trace with a reason") {
  const RobotModel m = free_body(1.0, 1.0);
  ModelState s;
  s.q = VecX::Zero(3);
  s.v = VecX::Zero(3);
  HybridSchedule schedule;
  schedule.modes = {SimMode{0, ConstraintSet{}}};
  schedule.initial_mode = 0;
  const SimTrace trace = simulate(
      m, schedule,
      [](double t, const ModelState&) {
        VecX u(0);
        if (t > 0.1) throw std::runtime_error("controller exploded");
        return u;
      },
      s, 1.0, SimOptions{});
  CHECK(!trace.completed);
  CHECK(trace.failure_reason.find("exploded") != std::string::npos);
  CHECK(!trace.rows.empty());
}

TEST_CASE("trace round-trips through csv and binary") {
  const RobotModel m = free_body(1.0, 1.0);
  ModelState s;
  s.q = VecX::Zero(3);
  s.q[1] = 1.0;
  s.v = VecX::Zero(3);
  HybridSchedule schedule;
  schedule.modes = {SimMode{0, ConstraintSet{}}};
  schedule.initial_mode = 0;
  const SimTrace t = simulate(
      m, schedule, [](double, const ModelState&) { return VecX::Zero(0); }, s,
      0.1, SimOptions{});
  write_trace_csv(t, "/tmp/stride_trace.csv");
  write_trace_binary(t, "/tmp/stride_trace.bin");
  const SimTrace from_csv = read_trace("/tmp/stride_trace.csv");
  const SimTrace from_bin = read_trace("/tmp/stride_trace.bin");
  REQUIRE(from_csv.rows.size() == t.rows.size());
  REQUIRE(from_bin.rows.size() == t.rows.size());
  CHECK(from_bin.rows.back().q[1] == t.rows.back().q[1]);  // bit-exact
  CHECK(std::abs(from_csv.rows.back().q[1] - t.rows.back().q[1]) < 1e-10);
}
