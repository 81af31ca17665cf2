#include "stride/sim.hpp"

#include <Eigen/LU>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stride/errors.hpp"

namespace stride {
namespace {

constexpr double kGuardTol = 1e-8;
constexpr int kBisectIters = 40;

ModelState lerp_state(const ModelState& a, const ModelState& b, double s) {
  ModelState out;
  out.q = (1.0 - s) * a.q + s * b.q;
  out.v = (1.0 - s) * a.v + s * b.v;
  return out;
}

void check_finite(const ModelState& state, double t) {
  if (!state.q.allFinite() || !state.v.allFinite()) {
    throw DivergenceError("simulated state diverged at t=" +
                          std::to_string(t));
  }
}

}  // namespace

const SimMode& HybridSchedule::mode(int id) const {
  for (const SimMode& m : modes) {
    if (m.id == id) return m;
  }
  throw std::out_of_range("schedule has no mode " + std::to_string(id));
}

ConstrainedDynamicsResult constrained_dynamics(const RobotModel& model,
                                               const ModelState& state,
                                               ConstVecRef u,
                                               const StackedJacobian& jac,
                                               const BaumgarteGains& gains) {
  const int n_q = model.n_q();
  const int n_c = static_cast<int>(jac.j_full.rows());
  const MatX mass = mass_matrix(model, state.q);
  const BiasForces bias = bias_and_gravity(model, state.q, state.v);
  const VecX rhs_top =
      model.actuation_matrix() * u + bias.gravity - bias.coriolis;

  ConstrainedDynamicsResult out;
  if (n_c == 0) {
    out.qdd = mass.llt().solve(rhs_top);
    out.lambda = VecX();
    return out;
  }

  MatX kkt = MatX::Zero(n_q + n_c, n_q + n_c);
  kkt.topLeftCorner(n_q, n_q) = mass;
  kkt.topRightCorner(n_q, n_c) = -jac.j_full.transpose();
  kkt.bottomLeftCorner(n_c, n_q) = jac.j_full;
  VecX rhs(n_q + n_c);
  rhs.head(n_q) = rhs_top;
  rhs.tail(n_c) = -jac.jdot_v -
                  2.0 * gains.zeta * gains.omega * (jac.j_full * state.v) -
                  gains.omega * gains.omega * jac.position_error;

  Eigen::FullPivLU<MatX> lu(kkt);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw SingularConstraintError(
        "constrained dynamics: singular constraint block (" +
        std::to_string(n_c) + " rows)");
  }
  const VecX sol = lu.solve(rhs);
  out.qdd = sol.head(n_q);
  out.lambda = sol.tail(n_c);
  return out;
}

ModelState integrate_step(const RobotModel& model, const ModelState& state,
                          ConstVecRef u, const ConstraintSet& constraints,
                          double dt, const BaumgarteGains& gains) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be > 0");
  const StackedJacobian jac =
      stacked_jacobian(constraints, model, state.q, state.v);
  const ConstrainedDynamicsResult dyn =
      constrained_dynamics(model, state, u, jac, gains);
  ModelState next;
  next.v = state.v + dt * dyn.qdd;
  next.q = state.q + dt * next.v;
  check_finite(next, 0.0);
  return next;
}

double find_event_time(
    const std::function<double(double t, const ModelState&)>& guard,
    const ModelState& before, const ModelState& after, double t0, double dt,
    ModelState* state_at_event) {
  const double g0 = guard(t0, before);
  const double g1 = guard(t0 + dt, after);
  if (g0 > 0.0 && g1 > 0.0) {
    // Possible tangential touch: take the interval minimum by ternary search
    // and accept it as a degenerate event only if it reaches zero.
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 60; ++i) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      const double v1 = guard(t0 + m1 * dt, lerp_state(before, after, m1));
      const double v2 = guard(t0 + m2 * dt, lerp_state(before, after, m2));
      if (v1 < v2) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    const double s = 0.5 * (lo + hi);
    const ModelState st = lerp_state(before, after, s);
    if (guard(t0 + s * dt, st) <= kGuardTol) {
      if (state_at_event != nullptr) *state_at_event = st;
      return t0 + s * dt;
    }
    throw NotAnEventError("guard does not change sign across the step");
  }
  if (g0 <= 0.0) {
    // already at/past the event when entering the step
    if (state_at_event != nullptr) *state_at_event = before;
    return t0;
  }

  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < kBisectIters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double g = guard(t0 + mid * dt, lerp_state(before, after, mid));
    if (std::abs(g) <= kGuardTol) {
      lo = hi = mid;
      break;
    }
    if (g > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double s = hi;  // first known non-positive point
  if (state_at_event != nullptr) *state_at_event = lerp_state(before, after, s);
  return t0 + s * dt;
}

SimTrace simulate(const RobotModel& model, const HybridSchedule& schedule,
                  const ControllerFn& controller, const ModelState& initial,
                  double duration, const SimOptions& options) {
  const double ratio = options.control_dt / options.sim_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw std::invalid_argument(
        "simulate: control_dt must be an integer multiple of sim_dt");
  }
  const int ticks = static_cast<int>(std::round(duration / options.control_dt));

  SimTrace trace;
  trace.n_q = model.n_q();
  trace.n_u = model.n_u();
  for (const SimMode& m : schedule.modes) {
    trace.max_nc = std::max(trace.max_nc, m.constraints.dimension());
  }

  // Working copies of the mode constraint sets; point-contact anchors are
  // re-pinned to the current frame position whenever a mode is entered.
  std::vector<SimMode> modes = schedule.modes;
  auto mode_ref = [&](int id) -> SimMode& {
    for (SimMode& m : modes) {
      if (m.id == id) return m;
    }
    throw std::out_of_range("schedule has no mode " + std::to_string(id));
  };
  ModelState state = initial;
  int mode = schedule.initial_mode;
  auto pin_anchors = [&](int id, const ModelState& at) {
    for (Constraint& c : mode_ref(id).constraints.constraints) {
      if (c.kind == Constraint::Kind::kPointContact) {
        c.anchor = frame_kinematics(model, at.q, at.v, c.frame).position;
      }
    }
  };
  pin_anchors(mode, state);

  size_t next_timed = 0;
  bool pending_event = false;

  auto log_row = [&](double t, const VecX& u, const VecX& lambda) {
    TraceRow row;
    row.t = t;
    row.q = state.q;
    row.v = state.v;
    row.u = u;
    row.lambda = VecX::Zero(trace.max_nc);
    row.lambda.head(lambda.size()) = lambda;
    row.mode = mode;
    row.event = pending_event;
    pending_event = false;
    trace.rows.push_back(std::move(row));
  };

  // Guards are armed once their value has been clearly positive in the
  // current mode, so a foot resting at the ground plane does not retrigger
  // the touchdown event it just produced.
  std::map<std::string, bool> armed;
  auto switch_mode = [&](int target, double t, bool impact) {
    SimEvent ev;
    ev.t = t;
    ev.from_mode = mode;
    ev.to_mode = target;
    ev.q_event = state.q;
    ev.v_minus = state.v;
    if (impact) {
      const SimMode& tm = mode_ref(target);
      const StackedJacobian jac =
          stacked_jacobian(tm.constraints, model, state.q, state.v);
      const ImpactResult r = impact_map(model, state.q, state.v, jac.j_full,
                                        tm.constraints.row_labels());
      state.v = r.v_plus;
      ev.kind = "impact";
      ev.impulse_norm = r.impulse.norm();
      ev.post_constraint_speed =
          jac.j_full.rows() > 0
              ? (jac.j_full * state.v).cwiseAbs().maxCoeff()
              : 0.0;
    } else {
      ev.kind = "switch";
    }
    ev.v_plus = state.v;
    trace.events.push_back(std::move(ev));
    mode = target;
    pin_anchors(mode, state);
    armed.clear();
    pending_event = true;
  };

  try {
    for (int tick = 0; tick < ticks; ++tick) {
      const double t_tick = tick * options.control_dt;
      check_finite(state, t_tick);
      if (options.stop_predicate && options.stop_predicate(t_tick, state)) {
        trace.completed = false;
        trace.failure_reason = "stopped";
        break;
      }
      const VecX u = controller(t_tick, state);
      VecX last_lambda;

      double t_local = t_tick;
      const double t_end = t_tick + options.control_dt;
      int guard_fires = 0;
      while (t_local < t_end - 1e-12) {
        // timed switches first
        if (next_timed < schedule.timed_switches.size() &&
            schedule.timed_switches[next_timed].time <= t_local + 1e-12) {
          const TimedSwitch& sw = schedule.timed_switches[next_timed];
          switch_mode(sw.target_mode, t_local, sw.apply_impact);
          ++next_timed;
          continue;
        }
        double h = std::min(options.sim_dt, t_end - t_local);
        if (next_timed < schedule.timed_switches.size()) {
          h = std::min(h, schedule.timed_switches[next_timed].time - t_local);
        }
        if (h <= 1e-12) {
          t_local += 1e-12;
          continue;
        }

        const SimMode& cur = mode_ref(mode);
        const StackedJacobian jac =
            stacked_jacobian(cur.constraints, model, state.q, state.v);
        const ConstrainedDynamicsResult dyn =
            constrained_dynamics(model, state, u, jac, options.baumgarte);
        last_lambda = dyn.lambda;

        if (options.friction_check > 0.0) {
          for (const int off : cur.constraints.contact_row_offsets()) {
            const double fn = dyn.lambda(off + 1);
            const double ft = dyn.lambda(off);
            if (std::abs(ft) > options.friction_check * std::max(fn, 0.0) +
                                   1e-9) {
              trace.slip_valid = false;
            }
          }
        }

        ModelState next;
        next.v = state.v + h * dyn.qdd;
        next.q = state.q + h * next.v;
        check_finite(next, t_local + h);

        // guard handling; lambda-dependent guards get the force solution
        // recomputed at the state under test
        auto lambda_at = [&](const ModelState& s) -> VecX {
          const StackedJacobian j =
              stacked_jacobian(cur.constraints, model, s.q, s.v);
          return constrained_dynamics(model, s, u, j, options.baumgarte)
              .lambda;
        };
        const auto git = schedule.guards.find(mode);
        bool fired = false;
        if (git != schedule.guards.end() && guard_fires < 8) {
          double best_t = std::numeric_limits<double>::infinity();
          const Guard* best_guard = nullptr;
          ModelState best_state;
          for (const Guard& g : git->second) {
            const double val_before = g.value(t_local, state, u, dyn.lambda);
            if (val_before > 1e-8) armed[g.name] = true;
            if (!armed[g.name]) continue;
            const double val_after =
                g.value(t_local + h, next, u, lambda_at(next));
            if (val_after > 0.0) continue;
            ModelState at_event;
            const double t_event = find_event_time(
                [&](double te, const ModelState& s) {
                  return g.value(te, s, u, lambda_at(s));
                },
                state, next, t_local, h, &at_event);
            if (t_event < best_t) {
              best_t = t_event;
              best_guard = &g;
              best_state = at_event;
            }
          }
          if (best_guard != nullptr) {
            state = best_state;
            t_local = best_t;
            switch_mode(best_guard->target_mode, best_t,
                        best_guard->apply_impact);
            ++guard_fires;
            fired = true;
          }
        }
        if (!fired) {
          state = next;
          t_local += h;
        }
      }
      log_row(t_end, u, last_lambda);
    }
  } catch (const std::exception& e) {
    trace.completed = false;
    trace.failure_reason = e.what();
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Serialization.
//
// CSV column order: t, mode, event, q[0..n_q), v[0..n_q), u[0..n_u),
// lambda[0..max_nc). One row per control tick.

void write_trace_csv(const SimTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,mode,event";
  for (int i = 0; i < trace.n_q; ++i) out << ",q" << i;
  for (int i = 0; i < trace.n_q; ++i) out << ",v" << i;
  for (int i = 0; i < trace.n_u; ++i) out << ",u" << i;
  for (int i = 0; i < trace.max_nc; ++i) out << ",lambda" << i;
  out << "\n";
  char buf[32];
  auto emit = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    out << ',' << buf;
  };
  for (const TraceRow& r : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%.12g", r.t);
    out << buf << ',' << r.mode << ',' << (r.event ? 1 : 0);
    for (int i = 0; i < trace.n_q; ++i) emit(r.q[i]);
    for (int i = 0; i < trace.n_q; ++i) emit(r.v[i]);
    for (int i = 0; i < trace.n_u; ++i) emit(r.u[i]);
    for (int i = 0; i < trace.max_nc; ++i) emit(r.lambda[i]);
    out << "\n";
  }
}

namespace {
constexpr char kTraceMagic[8] = {'S', 'T', 'R', 'D', 'T', 'R', 'C', '1'};

int event_kind_code(const std::string& kind) {
  if (kind == "impact") return 1;
  if (kind == "switch") return 2;
  return 0;
}

std::string event_kind_name(int code) {
  switch (code) {
    case 1: return "impact";
    case 2: return "switch";
    default: return "timed";
  }
}
}  // namespace

void write_trace_binary(const SimTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kTraceMagic, sizeof(kTraceMagic));
  const std::int32_t header[4] = {trace.n_q, trace.n_u, trace.max_nc,
                                  trace.completed ? 1 : 0};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  const std::int64_t counts[2] = {
      static_cast<std::int64_t>(trace.rows.size()),
      static_cast<std::int64_t>(trace.events.size())};
  out.write(reinterpret_cast<const char*>(counts), sizeof(counts));
  for (const TraceRow& r : trace.rows) {
    out.write(reinterpret_cast<const char*>(&r.t), sizeof(double));
    const std::int32_t meta[2] = {r.mode, r.event ? 1 : 0};
    out.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    out.write(reinterpret_cast<const char*>(r.q.data()),
              sizeof(double) * trace.n_q);
    out.write(reinterpret_cast<const char*>(r.v.data()),
              sizeof(double) * trace.n_q);
    out.write(reinterpret_cast<const char*>(r.u.data()),
              sizeof(double) * trace.n_u);
    out.write(reinterpret_cast<const char*>(r.lambda.data()),
              sizeof(double) * trace.max_nc);
  }
  for (const SimEvent& e : trace.events) {
    out.write(reinterpret_cast<const char*>(&e.t), sizeof(double));
    const std::int32_t meta[3] = {event_kind_code(e.kind), e.from_mode,
                                  e.to_mode};
    out.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    out.write(reinterpret_cast<const char*>(&e.impulse_norm), sizeof(double));
  }
}

namespace {

SimTrace read_trace_binary(std::ifstream& in) {
  SimTrace trace;
  std::int32_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  trace.n_q = header[0];
  trace.n_u = header[1];
  trace.max_nc = header[2];
  trace.completed = header[3] != 0;
  std::int64_t counts[2];
  in.read(reinterpret_cast<char*>(counts), sizeof(counts));
  for (std::int64_t k = 0; k < counts[0]; ++k) {
    TraceRow r;
    in.read(reinterpret_cast<char*>(&r.t), sizeof(double));
    std::int32_t meta[2];
    in.read(reinterpret_cast<char*>(meta), sizeof(meta));
    r.mode = meta[0];
    r.event = meta[1] != 0;
    r.q.resize(trace.n_q);
    r.v.resize(trace.n_q);
    r.u.resize(trace.n_u);
    r.lambda.resize(trace.max_nc);
    in.read(reinterpret_cast<char*>(r.q.data()), sizeof(double) * trace.n_q);
    in.read(reinterpret_cast<char*>(r.v.data()), sizeof(double) * trace.n_q);
    in.read(reinterpret_cast<char*>(r.u.data()), sizeof(double) * trace.n_u);
    in.read(reinterpret_cast<char*>(r.lambda.data()),
            sizeof(double) * trace.max_nc);
    trace.rows.push_back(std::move(r));
  }
  for (std::int64_t k = 0; k < counts[1]; ++k) {
    SimEvent e;
    in.read(reinterpret_cast<char*>(&e.t), sizeof(double));
    std::int32_t meta[3];
    in.read(reinterpret_cast<char*>(meta), sizeof(meta));
    e.kind = event_kind_name(meta[0]);
    e.from_mode = meta[1];
    e.to_mode = meta[2];
    in.read(reinterpret_cast<char*>(&e.impulse_norm), sizeof(double));
    trace.events.push_back(std::move(e));
  }
  if (!in) throw std::runtime_error("truncated binary trace");
  return trace;
}

SimTrace read_trace_csv(std::ifstream& in) {
  SimTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace csv");
  // count columns per kind from the header
  int n_q = 0, n_u = 0, max_nc = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.size() > 1 && col[0] == 'q') ++n_q;
      if (col.size() > 1 && col[0] == 'u') ++n_u;
      if (col.rfind("lambda", 0) == 0) ++max_nc;
    }
  }
  trace.n_q = n_q;
  trace.n_u = n_u;
  trace.max_nc = max_nc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    const size_t expected = 3 + 2 * n_q + n_u + max_nc;
    if (vals.size() != expected) {
      throw std::runtime_error("trace csv row has wrong column count");
    }
    TraceRow r;
    size_t i = 0;
    r.t = vals[i++];
    r.mode = static_cast<int>(vals[i++]);
    r.event = vals[i++] != 0.0;
    r.q.resize(n_q);
    for (int k = 0; k < n_q; ++k) r.q[k] = vals[i++];
    r.v.resize(n_q);
    for (int k = 0; k < n_q; ++k) r.v[k] = vals[i++];
    r.u.resize(n_u);
    for (int k = 0; k < n_u; ++k) r.u[k] = vals[i++];
    r.lambda.resize(max_nc);
    for (int k = 0; k < max_nc; ++k) r.lambda[k] = vals[i++];
    trace.rows.push_back(std::move(r));
  }
  return trace;
}

}  // namespace

SimTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in && std::memcmp(magic, kTraceMagic, sizeof(magic)) == 0) {
    return read_trace_binary(in);
  }
  in.close();
  std::ifstream text(path);
  return read_trace_csv(text);
}

}  // namespace stride
