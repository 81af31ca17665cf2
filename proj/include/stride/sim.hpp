#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stride/contact.hpp"
#include "stride/model.hpp"

namespace stride {

struct BaumgarteGains {
  double omega = 50.0;  // rad/s
  double zeta = 1.0;
};

struct SimMode {
  int id = 0;
  ConstraintSet constraints;
};

/// Zero-crossing event attached to a source mode. Fires when the guard value
/// passes from positive to negative across a step; the state is then advanced
/// to the bisected event time, the impact reset (with the target mode's
/// constraints) applied when requested, and the mode switched.
struct Guard {
  std::string name;
  // The last constraint-force solution of the current mode is passed in, so
  // liftoff guards can read the normal force directly.
  std::function<double(double t, const ModelState& state, ConstVecRef u,
                       ConstVecRef lambda)>
      value;
  int target_mode = 0;
  bool apply_impact = true;
};

struct TimedSwitch {
  double time = 0.0;
  int target_mode = 0;
  bool apply_impact = false;
};

struct HybridSchedule {
  std::vector<SimMode> modes;
  std::map<int, std::vector<Guard>> guards;  // keyed by source mode id
  std::vector<TimedSwitch> timed_switches;   // must be sorted by time
  int initial_mode = 0;

  const SimMode& mode(int id) const;
};

struct ConstrainedDynamicsResult {
  VecX qdd;
  VecX lambda;
};

/// Index-reduced constrained dynamics: solves the KKT system
///   [M  -J^T] [qdd   ]   [B u + g - C]
///   [J   0  ] [lambda] = [-Jdot v - stabilization]
/// with Baumgarte feedback on the acceleration-level constraint. Throws
/// SingularConstraintError when the constraint block is rank deficient.
ConstrainedDynamicsResult constrained_dynamics(const RobotModel& model,
                                               const ModelState& state,
                                               ConstVecRef u,
                                               const StackedJacobian& jac,
                                               const BaumgarteGains& gains = {});

/// One semi-implicit Euler step (v first, then q) under the given constraints.
ModelState integrate_step(const RobotModel& model, const ModelState& state,
                          ConstVecRef u, const ConstraintSet& constraints,
                          double dt, const BaumgarteGains& gains = {});

/// Bisection for the zero of a guard across one step, on states interpolated
/// linearly between `before` and `after`. Returns the event time and writes
/// the interpolated state at the event. Throws NotAnEventError when the guard
/// does not change sign (a tangential touch is flagged degenerate by taking
/// the interval minimum).
double find_event_time(
    const std::function<double(double t, const ModelState&)>& guard,
    const ModelState& before, const ModelState& after, double t0, double dt,
    ModelState* state_at_event);

struct SimEvent {
  double t = 0.0;
  std::string kind;  // "impact", "switch", "timed"
  int from_mode = 0;
  int to_mode = 0;
  double impulse_norm = 0.0;
  double post_constraint_speed = 0.0;  // |J v+| at the reset, impacts only
  // Event-instant states (kept in memory for analysis; not serialized).
  VecX q_event, v_minus, v_plus;
};

struct TraceRow {
  double t = 0.0;
  VecX q, v, u;
  VecX lambda;  // padded with zeros to the widest mode
  int mode = 0;
  bool event = false;  // an event occurred since the previous row
};

struct SimTrace {
  std::vector<TraceRow> rows;
  std::vector<SimEvent> events;
  bool completed = true;
  std::string failure_reason;
  bool slip_valid = true;  // no tick exceeded the friction ratio check
  int n_q = 0, n_u = 0, max_nc = 0;

  double duration() const {
    return rows.empty() ? 0.0 : rows.back().t - rows.front().t;
  }
};

using ControllerFn = std::function<VecX(double t, const ModelState& state)>;

struct SimOptions {
  double control_dt = 2e-3;  // zero-order hold on torques
  double sim_dt = 5e-4;
  BaumgarteGains baumgarte;
  double friction_check = 0.0;  // >0: flag slip_valid when |ft/fn| exceeds it
  // Optional early-out (e.g. fall detection); stops the run with
  // completed=false and failure_reason="stopped".
  std::function<bool(double t, const ModelState&)> stop_predicate;
};

/// Hybrid simulation: constrained dynamics inside each mode, guard-triggered
/// impacts/releases, time-triggered switches, torque zero-order hold at the
/// control rate. The trace is sampled once per control tick.
SimTrace simulate(const RobotModel& model, const HybridSchedule& schedule,
                  const ControllerFn& controller, const ModelState& initial,
                  double duration, const SimOptions& options = {});

// Trace serialization: CSV (documented header) and a compact binary log.
void write_trace_csv(const SimTrace& trace, const std::string& path);
void write_trace_binary(const SimTrace& trace, const std::string& path);
SimTrace read_trace(const std::string& path);  // sniffs csv vs binary

}  // namespace stride
