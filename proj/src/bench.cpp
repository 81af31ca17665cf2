#include "stride/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <random>
#include <thread>

#include "stride/errors.hpp"
#include "stride/gait.hpp"
#include "stride/osc.hpp"

namespace stride {
namespace {

namespace fs = std::filesystem;

ConstraintSet one_foot(const std::string& frame) {
  ConstraintSet s;
  s.constraints.push_back(Constraint::point_contact(frame));
  return s;
}

ConstraintSet both_feet() {
  ConstraintSet s;
  s.constraints.push_back(Constraint::point_contact("left_foot"));
  s.constraints.push_back(Constraint::point_contact("right_foot"));
  return s;
}

ImpactStrategy strategy_for(const std::string& variant) {
  if (variant == kVariantImpactInvariant) return ImpactStrategy::kProjection;
  if (variant == kVariantNoDerivative) return ImpactStrategy::kNoDerivative;
  if (variant == kVariantDefault) return ImpactStrategy::kNone;
  throw std::runtime_error("unknown variant: " + variant);
}

std::vector<std::string> resolve_variants(const ExperimentConfig& cfg) {
  if (!cfg.variants.empty()) return cfg.variants;
  return {kVariantDefault, kVariantNoDerivative, kVariantImpactInvariant};
}

std::function<bool(double, const ModelState&)> fall_predicate(
    double min_pelvis, double max_pitch) {
  return [=](double, const ModelState& s) {
    return s.q[1] < min_pelvis || std::abs(s.q[2]) > max_pitch;
  };
}

double peak_torque_jump(const SimTrace& trace) {
  double worst = 0.0;
  for (size_t i = 1; i < trace.rows.size(); ++i) {
    worst = std::max(
        worst,
        (trace.rows[i].u - trace.rows[i - 1].u).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t cell,
                         std::uint64_t trial) {
  // splitmix64 over a mixed key
  std::uint64_t z = base ^ (cell * 0x9E3779B97F4A7C15ULL) ^
                    (trial * 0xBF58476D1CE4E5B9ULL) ^ 0x94D049BB133111EBULL;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool run_succeeded(const SimTrace& trace, double min_pelvis_height,
                   double max_pitch) {
  if (!trace.completed || trace.rows.empty()) return false;
  for (const TraceRow& row : trace.rows) {
    if (row.q[1] < min_pelvis_height) return false;
    if (std::abs(row.q[2]) > max_pitch) return false;
  }
  return true;
}

double input_cost(const SimTrace& trace, double w_input) {
  double cost = 0.0;
  for (size_t i = 1; i < trace.rows.size(); ++i) {
    const double dt = trace.rows[i].t - trace.rows[i - 1].t;
    const double a = trace.rows[i - 1].u.squaredNorm();
    const double b = trace.rows[i].u.squaredNorm();
    cost += 0.5 * w_input * (a + b) * dt;
  }
  return cost;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path);
  nlohmann::json j;
  in >> j;
  ExperimentConfig cfg;
  cfg.kind = j.at("kind").get<std::string>();
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };
  cfg.model_file = resolve(j.at("model").get<std::string>());
  cfg.experiment_file = resolve(j.at("experiment").get<std::string>());
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  cfg.seed = j.value("seed", 0ULL);
  cfg.workers = j.value("workers", 1);
  cfg.trials_per_cell = j.value("trials", 5);
  if (j.contains("offsets")) {
    cfg.offsets = j["offsets"].get<std::vector<double>>();
  }
  if (j.contains("windows")) {
    cfg.windows = j["windows"].get<std::vector<double>>();
  }
  cfg.perturbation = j.value("perturbation", 0.1);
  cfg.ramp_target = j.value("ramp_target", 2.0);
  cfg.run_duration = j.value("run_duration", 20.0);
  if (j.contains("variants")) {
    cfg.variants = j["variants"].get<std::vector<std::string>>();
  }
  cfg.write_traces = j.value("write_traces", true);
  return cfg;
}

// ---------------------------------------------------------------------------
// Walking comparison

namespace {

struct WalkingSetup {
  RobotModel model;
  ExperimentFile exp;
  WalkingReference ref;
  int num_steps = 3;
};

std::vector<TrackingObjective> walking_objectives(const WalkingSetup& s) {
  struct Def {
    const char* name;
    int joint;
    const PiecewisePolynomial* pp;
  };
  const Def defs[] = {{"left_hip", 3, &s.ref.left_hip},
                      {"left_knee", 4, &s.ref.left_knee},
                      {"right_hip", 5, &s.ref.right_hip},
                      {"right_knee", 6, &s.ref.right_knee}};
  std::vector<TrackingObjective> objs;
  for (const Def& d : defs) {
    TrackingObjective o;
    o.name = d.name;
    o.kind = OutputKind::kJointAngle;
    o.joint = d.joint;
    o.reference = Reference(*d.pp);
    apply_gains(s.exp.controller, o);
    objs.push_back(std::move(o));
  }
  return objs;
}

HybridSchedule walking_schedule(const RobotModel& model) {
  HybridSchedule schedule;
  schedule.modes = {SimMode{mode::kLeftStance, one_foot("left_foot")},
                    SimMode{mode::kRightStance, one_foot("right_foot")}};
  auto height_guard = [&model](const std::string& frame) {
    return [&model, frame](double, const ModelState& s, ConstVecRef,
                           ConstVecRef) {
      return frame_kinematics(model, s.q, s.v, frame).position.y();
    };
  };
  Guard to_right;
  to_right.name = "right_touchdown";
  to_right.value = height_guard("right_foot");
  to_right.target_mode = mode::kRightStance;
  schedule.guards[mode::kLeftStance].push_back(to_right);
  Guard to_left;
  to_left.name = "left_touchdown";
  to_left.value = height_guard("left_foot");
  to_left.target_mode = mode::kLeftStance;
  schedule.guards[mode::kRightStance].push_back(to_left);
  schedule.initial_mode = mode::kLeftStance;
  return schedule;
}

}  // namespace

ExperimentResult run_walking_comparison(const ExperimentConfig& cfg) {
  WalkingSetup setup{load_robot_model(cfg.model_file),
                     load_experiment_file(cfg.experiment_file),
                     WalkingReference{}, 3};
  if (!setup.exp.has_walking) {
    throw std::runtime_error("experiment file has no walking section");
  }
  setup.ref =
      walking_reference(setup.model, setup.exp.walking, setup.num_steps);
  const RobotModel& model = setup.model;
  const double period = setup.exp.walking.period;

  // Perturb the swing-foot (right) vertical velocity by the least-norm
  // generalized-velocity change.
  ModelState init = setup.ref.initial_state;
  {
    const FrameKinematics fk =
        frame_kinematics(model, init.q, init.v, "right_foot");
    const RowVecX row = fk.jacobian.row(1);
    init.v += row.transpose() * (cfg.perturbation / row.squaredNorm());
  }

  ExperimentResult result;
  result.experiment = "walk-compare";
  const double duration = period + 0.25;
  const double stand = setup.exp.walking.pelvis_height;

  for (const std::string& variant : resolve_variants(cfg)) {
    OscConfig osc_cfg = setup.exp.controller.osc;
    osc_cfg.strategy = strategy_for(variant);
    std::map<int, ConstraintSet> modes;
    modes[mode::kLeftStance] = one_foot("left_foot");
    modes[mode::kRightStance] = one_foot("right_foot");
    auto controller = std::make_shared<OscController>(
        model, walking_objectives(setup), modes, osc_cfg);

    const WalkingReference& ref = setup.ref;
    const int num_steps = setup.num_steps;
    ControllerFn fn = [controller, &ref, period, num_steps](
                          double t, const ModelState& s) {
      int step = std::clamp(static_cast<int>(t / period), 0, num_steps - 1);
      const int m = ref.stance_modes[step];
      // nearest anticipated impact: start or end of the current step
      const double t_prev = step * period;
      const double t_next = (step + 1) * period;
      ImpactWindow w;
      if (step > 0 && t - t_prev < t_next - t) {
        w.t_switch = t_prev;
        w.constraints = one_foot(ref.stance_modes[step] == mode::kLeftStance
                                     ? "left_foot"
                                     : "right_foot");
      } else {
        w.t_switch = t_next;
        const int next_step = std::min(step + 1, num_steps - 1);
        w.constraints =
            one_foot(ref.stance_modes[next_step] == mode::kLeftStance
                         ? "left_foot"
                         : "right_foot");
      }
      const double phase = std::clamp((t - t_prev) / period, 0.0, 1.0);
      return controller->control_step(s, m, t, w, phase).u;
    };

    SimOptions opts;
    opts.friction_check = osc_cfg.friction;
    opts.stop_predicate = fall_predicate(0.6 * stand, 1.0);
    const SimTrace trace =
        simulate(model, walking_schedule(model), fn, init, duration, opts);

    // first touchdown after the step is underway
    double t_impact = -1.0;
    for (const SimEvent& e : trace.events) {
      if (e.kind == "impact" && e.t > 0.2 * period) {
        t_impact = e.t;
        break;
      }
    }

    auto joint_vel_err = [&](const TraceRow& row, int joint,
                             const PiecewisePolynomial& pp) {
      return pp.defined_at(row.t) ? pp.derivative(row.t)(0) - row.v[joint]
                                  : 0.0;
    };
    auto rms_over = [&](double t0, double t1, bool impacting_leg) {
      double sum = 0.0;
      int n = 0;
      for (const TraceRow& row : trace.rows) {
        if (row.t < t0 || row.t > t1) continue;
        if (impacting_leg) {
          sum += std::pow(joint_vel_err(row, 5, setup.ref.right_hip), 2) +
                 std::pow(joint_vel_err(row, 6, setup.ref.right_knee), 2);
        } else {
          sum += std::pow(joint_vel_err(row, 3, setup.ref.left_hip), 2) +
                 std::pow(joint_vel_err(row, 4, setup.ref.left_knee), 2);
        }
        n += 2;
      }
      return n > 0 ? std::sqrt(sum / n) : 0.0;
    };

    MetricsRow row;
    row.experiment = result.experiment;
    row.variant = variant;
    row.seed = cfg.seed;
    row.success = t_impact > 0.0 && trace.completed;
    if (t_impact > 0.0) {
      row.rms_impacting = rms_over(t_impact, t_impact + 0.1, true);
      row.rms_nonimpacting = rms_over(t_impact, t_impact + 0.1, false);
    }
    {
      const double t_nom = period;  // first nominal impact
      const double w_half = osc_cfg.window;
      auto rms_both = [&](double t0, double t1) {
        const double a = rms_over(t0, t1, true), b = rms_over(t0, t1, false);
        return std::sqrt(0.5 * (a * a + b * b));
      };
      row.rms_pre = rms_both(0.0, t_nom - w_half);
      row.rms_window = rms_both(t_nom - w_half, t_nom + w_half);
    }
    row.input_cost = input_cost(trace, osc_cfg.w_input);
    row.peak_torque_jump = peak_torque_jump(trace);
    result.rows.push_back(row);

    // error-vs-time plot data (impacting / non-impacting leg RMS per tick)
    ExperimentResult::PlotData plot;
    plot.name = "walk_error_" + variant;
    plot.header = "t,err_right_hip,err_right_knee,err_left_hip,err_left_knee";
    for (const TraceRow& r : trace.rows) {
      plot.values.push_back({r.t, joint_vel_err(r, 5, setup.ref.right_hip),
                             joint_vel_err(r, 6, setup.ref.right_knee),
                             joint_vel_err(r, 3, setup.ref.left_hip),
                             joint_vel_err(r, 4, setup.ref.left_knee)});
    }
    result.plots.push_back(std::move(plot));
    result.traces["walk_" + variant] = trace;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Jump sweep

namespace {

struct JumpOutcome {
  bool success = false;
  double ju = 0.0;
};

JumpOutcome run_jump_once(const RobotModel& model, const ExperimentFile& exp,
                          const JumpReference& ref, double offset,
                          double window, std::uint64_t seed) {
  OscConfig osc_cfg = exp.controller.osc;
  osc_cfg.strategy = ImpactStrategy::kProjection;
  osc_cfg.window = window;

  std::vector<TrackingObjective> objs;
  {
    TrackingObjective pelvis;
    pelvis.name = "pelvis";
    pelvis.kind = OutputKind::kFramePosition;
    pelvis.frame = "pelvis";
    pelvis.reference = Reference(ref.pelvis);
    pelvis.active_modes = {mode::kCrouch, mode::kLand};
    apply_gains(exp.controller, pelvis);
    objs.push_back(pelvis);

    TrackingObjective pitch;
    pitch.name = "pitch";
    pitch.kind = OutputKind::kLinkOrientation;
    pitch.link = 0;
    pitch.reference = Reference(ref.torso_pitch);
    pitch.active_modes = {mode::kCrouch, mode::kJumpFlight, mode::kLand};
    apply_gains(exp.controller, pitch);
    objs.push_back(pitch);

    for (int side = 0; side < 2; ++side) {
      TrackingObjective foot;
      foot.name = side == 0 ? "left_foot" : "right_foot";
      foot.kind = OutputKind::kRelativeFramePosition;
      foot.frame = foot.name;
      foot.base_frame = "pelvis";
      foot.reference = Reference(side == 0 ? ref.foot_left : ref.foot_right);
      foot.active_modes = {mode::kJumpFlight};
      apply_gains(exp.controller, foot);
      objs.push_back(foot);
    }
  }
  std::map<int, ConstraintSet> modes;
  modes[mode::kCrouch] = both_feet();
  modes[mode::kJumpFlight] = ConstraintSet{};
  modes[mode::kLand] = both_feet();
  auto controller =
      std::make_shared<OscController>(model, objs, modes, osc_cfg);

  const double t_land_ctrl = ref.touchdown_time + offset;
  ControllerFn fn = [controller, &ref, t_land_ctrl](double t,
                                                    const ModelState& s) {
    int m = mode::kCrouch;
    if (t >= t_land_ctrl) {
      m = mode::kLand;
    } else if (t >= ref.liftoff_time) {
      m = mode::kJumpFlight;
    }
    ImpactWindow w;
    w.t_switch = t_land_ctrl;
    w.constraints = both_feet();
    return controller->control_step(s, m, t, w).u;
  };

  HybridSchedule schedule;
  schedule.modes = {SimMode{mode::kCrouch, both_feet()},
                    SimMode{mode::kJumpFlight, ConstraintSet{}},
                    SimMode{mode::kLand, both_feet()}};
  schedule.timed_switches.push_back(
      TimedSwitch{ref.liftoff_time, mode::kJumpFlight, false});
  Guard touchdown;
  touchdown.name = "touchdown";
  touchdown.value = [&model](double, const ModelState& s, ConstVecRef,
                             ConstVecRef) {
    const double zl = frame_kinematics(model, s.q, s.v, "left_foot").position.y();
    const double zr =
        frame_kinematics(model, s.q, s.v, "right_foot").position.y();
    return std::min(zl, zr);
  };
  touchdown.target_mode = mode::kLand;
  schedule.guards[mode::kJumpFlight].push_back(touchdown);
  schedule.initial_mode = mode::kCrouch;

  // small seeded initial-state noise on the joints
  ModelState init = ref.initial_state;
  {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nq(0.0, 0.005), nv(0.0, 0.02);
    for (int j = 3; j < model.n_q(); ++j) {
      init.q[j] += nq(rng);
      init.v[j] += nv(rng);
    }
  }

  const double stand = exp.jump.stand_pelvis_height;
  SimOptions opts;
  opts.friction_check = osc_cfg.friction;
  opts.stop_predicate = fall_predicate(0.5 * stand, 1.0);
  const SimTrace trace =
      simulate(model, schedule, fn, init, ref.end_time, opts);

  JumpOutcome out;
  out.success = run_succeeded(trace, 0.5 * stand, 1.0);
  out.ju = input_cost(trace, osc_cfg.w_input);
  return out;
}

}  // namespace

ExperimentResult run_jump_sweep(const ExperimentConfig& cfg) {
  const RobotModel model = load_robot_model(cfg.model_file);
  const ExperimentFile exp = load_experiment_file(cfg.experiment_file);
  if (!exp.has_jump) {
    throw std::runtime_error("experiment file has no jump section");
  }
  const JumpReference ref = jump_reference(model, exp.jump);

  std::vector<double> offsets = cfg.offsets;
  if (offsets.empty()) {
    for (int i = 0; i <= 10; ++i) offsets.push_back(-0.025 + 0.005 * i);
  }
  std::vector<double> windows = cfg.windows;
  if (windows.empty()) windows = {0.0, 0.025, 0.05, 0.075, 0.1};
  const int trials = std::max(1, cfg.trials_per_cell);

  struct Task {
    int cell, oi, wi, trial;
  };
  std::vector<Task> tasks;
  for (int wi = 0; wi < static_cast<int>(windows.size()); ++wi) {
    for (int oi = 0; oi < static_cast<int>(offsets.size()); ++oi) {
      const int cell = wi * static_cast<int>(offsets.size()) + oi;
      for (int k = 0; k < trials; ++k) tasks.push_back({cell, oi, wi, k});
    }
  }
  std::vector<JumpOutcome> outcomes(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < tasks.size();
         i = next.fetch_add(1)) {
      const Task& t = tasks[i];
      outcomes[i] = run_jump_once(
          model, exp, ref, offsets[t.oi], windows[t.wi],
          trial_seed(cfg.seed, static_cast<std::uint64_t>(t.cell),
                     static_cast<std::uint64_t>(t.trial)));
    }
  };
  const int n_workers = std::max(1, cfg.workers);
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  // merge per cell, deterministically by index
  ExperimentResult result;
  result.experiment = "jump-sweep";
  struct Cell {
    int successes = 0;
    double ju_sum = 0.0;
  };
  std::vector<Cell> cells(offsets.size() * windows.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    Cell& c = cells[tasks[i].cell];
    if (outcomes[i].success) {
      c.successes += 1;
      c.ju_sum += outcomes[i].ju;
    }
  }
  double ju_max = 0.0;
  for (const Cell& c : cells) {
    if (c.successes > 0) ju_max = std::max(ju_max, c.ju_sum / c.successes);
  }
  ExperimentResult::PlotData heat;
  heat.name = "jump_sweep_heatmap";
  heat.header = "offset,window,success,input_cost_normalized";
  for (int wi = 0; wi < static_cast<int>(windows.size()); ++wi) {
    for (int oi = 0; oi < static_cast<int>(offsets.size()); ++oi) {
      const Cell& c = cells[wi * offsets.size() + oi];
      const bool ok = c.successes * 2 > trials;
      MetricsRow row;
      row.experiment = result.experiment;
      row.variant = kVariantImpactInvariant;
      row.cell_offset = offsets[oi];
      row.cell_window = windows[wi];
      row.success = ok;
      if (ok && ju_max > 0.0) {
        row.input_cost = (c.ju_sum / c.successes) / ju_max;
      }
      row.seed = cfg.seed;
      result.rows.push_back(row);
      heat.values.push_back({offsets[oi], windows[wi], ok ? 1.0 : 0.0,
                             row.input_cost.value_or(-1.0)});
    }
  }
  result.plots.push_back(std::move(heat));
  return result;
}

// ---------------------------------------------------------------------------
// Running

namespace {

// Online running controller: time-based FSM over {LS, LF, RS, RF} with
// adapted timings, SLIP-like pelvis regulation in stance, swing-foot splines
// toward Raibert touchdown targets, pitch regulation throughout.
class PlanarRunner {
 public:
  struct Refs {
    PiecewisePolynomial left_swing, right_swing;  // foot relative to pelvis
    double left_t0 = 0.0, right_t0 = 0.0;
    bool left_valid = false, right_valid = false;
    double rest_length = 0.7;
    double thrust_velocity = 0.0;
  };

  PlanarRunner(const RobotModel& model, const ExperimentFile& exp,
               const std::string& variant,
               std::function<double(double)> v_des)
      : model_(model),
        exp_(exp),
        v_des_(std::move(v_des)),
        refs_(std::make_shared<Refs>()) {
    refs_->rest_length = exp.running_rest_length;
    refs_->thrust_velocity = exp.running_thrust;
    timings_ = exp.running_timings;
    cycle_.stages = {{mode::kLS, FsmStage::Duration::kStance, 0.0},
                     {mode::kLF, FsmStage::Duration::kFlight, 0.0},
                     {mode::kRS, FsmStage::Duration::kStance, 0.0},
                     {mode::kRF, FsmStage::Duration::kFlight, 0.0}};
    fsm_ = fsm_init(cycle_, 0.0, timings_);

    OscConfig osc_cfg = exp.controller.osc;
    osc_cfg.strategy = strategy_for(variant);
    std::map<int, ConstraintSet> modes;
    modes[mode::kLS] = one_foot("left_foot");
    modes[mode::kRS] = one_foot("right_foot");
    modes[mode::kLF] = ConstraintSet{};
    modes[mode::kRF] = ConstraintSet{};
    osc_ = std::make_unique<OscController>(model, build_objectives(), modes,
                                           osc_cfg);
  }

  ModelState initial_state() const {
    const double l = refs_->rest_length;
    VecX q = biped_ik(model_, Vec2(0.0, l), 0.0, Vec2(0.0, 0.0),
                      Vec2(-0.03, 0.04));
    VecX v = VecX::Zero(model_.n_q());
    v[1] = -0.5 * 9.81 * timings_.flight;  // arrive like after a nominal hop
    ModelState s{q, v};
    return s;
  }

  VecX operator()(double t, const ModelState& s) {
    if (!initialized_) {
      build_swing(/*left=*/false, 0.0, s,
                  timings_.adapted_stance + timings_.adapted_flight);
      initialized_ = true;
    }
    while (t >= fsm_.switch_time) {
      handle_switch(fsm_.switch_time, s);
    }
    const int m = fsm_.mode;
    const ImpactWindow w = window_for(m, t);
    const double phase = std::clamp(
        (t - fsm_.entry_time) /
            std::max(fsm_.switch_time - fsm_.entry_time, 1e-9),
        0.0, 1.0);
    const OscOutput out = osc_->control_step(s, m, t, w, phase);
    record(t, out);
    return out.u;
  }

  int strides() const { return strides_; }
  const std::vector<std::array<double, 3>>& error_history() const {
    return errors_;  // (t, |foot err|, |slip err|)
  }

 private:
  std::vector<TrackingObjective> build_objectives() {
    std::vector<TrackingObjective> objs;
    const double l = refs_->rest_length;
    auto slip_ref = [this, l](double) {
      ReferenceSample r;
      r.y = VecX::Zero(2);
      r.y(1) = l;
      r.ydot = VecX::Zero(2);
      r.ydot(1) = refs_->thrust_velocity;
      r.yddot = VecX::Zero(2);
      return r;
    };
    for (int side = 0; side < 2; ++side) {
      TrackingObjective slip;
      slip.name = side == 0 ? "slip_left" : "slip_right";
      slip.kind = OutputKind::kRelativeFramePosition;
      slip.frame = "pelvis";
      slip.base_frame = side == 0 ? "left_foot" : "right_foot";
      slip.reference = Reference(slip_ref, 0.0, 1e9);
      slip.active_modes = {side == 0 ? mode::kLS : mode::kRS};
      apply_gains(exp_.controller, slip);
      objs.push_back(slip);
    }
    auto swing_ref = [this](bool left) {
      return [this, left](double t) {
        const Refs& r = *refs_;
        const PiecewisePolynomial& pp = left ? r.left_swing : r.right_swing;
        const double t0 = left ? r.left_t0 : r.right_t0;
        const bool valid = left ? r.left_valid : r.right_valid;
        ReferenceSample out;
        if (!valid || pp.empty()) {
          out.y = VecX::Zero(2);
          out.y(1) = -r.rest_length;
          out.ydot = VecX::Zero(2);
          out.yddot = VecX::Zero(2);
          return out;
        }
        const double tc =
            std::clamp(t - t0, pp.start_time(), pp.end_time());
        out.y = pp.value(tc);
        const bool inside = t - t0 >= pp.start_time() && t - t0 <= pp.end_time();
        out.ydot = inside ? pp.derivative(tc) : VecX::Zero(2).eval();
        out.yddot = inside ? pp.second_derivative(tc) : VecX::Zero(2).eval();
        return out;
      };
    };
    for (int side = 0; side < 2; ++side) {
      TrackingObjective foot;
      foot.name = side == 0 ? "foot_left" : "foot_right";
      foot.kind = OutputKind::kRelativeFramePosition;
      foot.frame = side == 0 ? "left_foot" : "right_foot";
      foot.base_frame = "pelvis";
      foot.reference = Reference(swing_ref(side == 0), 0.0, 1e9);
      foot.active_modes = side == 0
                              ? std::set<int>{mode::kLF, mode::kRS, mode::kRF}
                              : std::set<int>{mode::kRF, mode::kLS, mode::kLF};
      apply_gains(exp_.controller, foot);
      objs.push_back(foot);
    }
    TrackingObjective pitch;
    pitch.name = "pitch";
    pitch.kind = OutputKind::kLinkOrientation;
    pitch.link = 0;
    pitch.reference =
        Reference(PiecewisePolynomial::constant(VecX::Zero(1), 0.0, 1e9));
    pitch.active_modes = {mode::kLS, mode::kLF, mode::kRS, mode::kRF};
    apply_gains(exp_.controller, pitch);
    objs.push_back(pitch);
    return objs;
  }

  void handle_switch(double t_switch, const ModelState& s) {
    // adapt the upcoming transition times from the current SLIP state
    const std::string stance_frame =
        (fsm_.mode == mode::kLS || fsm_.mode == mode::kLF) ? "left_foot"
                                                           : "right_foot";
    const FrameKinematics pelvis =
        frame_kinematics(model_, s.q, s.v, "pelvis");
    const FrameKinematics foot =
        frame_kinematics(model_, s.q, s.v, stance_frame);
    const double y = std::max(pelvis.position.y() - foot.position.y(), 0.05);
    const double ydot = pelvis.velocity.y() - foot.velocity.y();
    timings_ = adapt_mode_timings(y, ydot, refs_->rest_length, timings_,
                                  model_.gravity);
    fsm_ = fsm_advance(cycle_, fsm_, t_switch, timings_);
    if (fsm_.mode == mode::kLF) {
      build_swing(/*left=*/true, t_switch, s,
                  2.0 * timings_.adapted_flight + timings_.adapted_stance);
    } else if (fsm_.mode == mode::kRF) {
      build_swing(/*left=*/false, t_switch, s,
                  2.0 * timings_.adapted_flight + timings_.adapted_stance);
    } else {
      ++strides_;  // entered a stance: one touchdown scheduled
    }
  }

  void build_swing(bool left, double t0, const ModelState& s, double duration) {
    const FrameKinematics pelvis =
        frame_kinematics(model_, s.q, s.v, "pelvis");
    const FrameKinematics foot = frame_kinematics(
        model_, s.q, s.v, left ? "left_foot" : "right_foot");
    const Vec2 y0 = foot.position - pelvis.position;
    RaibertParams rp = exp_.raibert;
    rp.rest_length = refs_->rest_length;
    rp.stance_duration = timings_.adapted_stance;
    const Vec2 y2 = raibert_footstep(s.v[0], v_des_(t0), rp);
    const PiecewisePolynomial pp =
        swing_foot_spline(y0, y2, duration, exp_.running_clearance);
    if (left) {
      refs_->left_swing = pp;
      refs_->left_t0 = t0;
      refs_->left_valid = true;
    } else {
      refs_->right_swing = pp;
      refs_->right_t0 = t0;
      refs_->right_valid = true;
    }
  }

  ImpactWindow window_for(int m, double t) const {
    ImpactWindow w;
    double next_td, prev_td;
    std::string next_foot, prev_foot;
    switch (m) {
      case mode::kLS:
        prev_td = fsm_.entry_time;
        prev_foot = "left_foot";
        next_td = fsm_.switch_time + timings_.adapted_flight;
        next_foot = "right_foot";
        break;
      case mode::kLF:
        prev_td = fsm_.entry_time - timings_.adapted_stance;
        prev_foot = "left_foot";
        next_td = fsm_.switch_time;
        next_foot = "right_foot";
        break;
      case mode::kRS:
        prev_td = fsm_.entry_time;
        prev_foot = "right_foot";
        next_td = fsm_.switch_time + timings_.adapted_flight;
        next_foot = "left_foot";
        break;
      default:  // kRF
        prev_td = fsm_.entry_time - timings_.adapted_stance;
        prev_foot = "right_foot";
        next_td = fsm_.switch_time;
        next_foot = "left_foot";
        break;
    }
    if (t - prev_td < next_td - t) {
      w.t_switch = prev_td;
      w.constraints = one_foot(prev_foot);
    } else {
      w.t_switch = next_td;
      w.constraints = one_foot(next_foot);
    }
    return w;
  }

  void record(double t, const OscOutput& out) {
    double foot_err = 0.0, slip_err = 0.0;
    for (const ObjectiveDiagnostics& d : out.objectives) {
      if (d.name.rfind("foot_", 0) == 0) {
        foot_err = std::max(foot_err, d.y_err.norm());
      }
      if (d.name.rfind("slip_", 0) == 0) {
        slip_err = std::max(slip_err, std::abs(d.y_err(1)));
      }
    }
    errors_.push_back({t, foot_err, slip_err});
  }

  const RobotModel& model_;
  const ExperimentFile& exp_;
  std::function<double(double)> v_des_;
  std::shared_ptr<Refs> refs_;
  GaitTimings timings_;
  FsmCycle cycle_;
  FsmState fsm_;
  std::unique_ptr<OscController> osc_;
  bool initialized_ = false;
  int strides_ = 0;
  std::vector<std::array<double, 3>> errors_;
};

HybridSchedule running_schedule(const RobotModel& model) {
  HybridSchedule schedule;
  schedule.modes = {SimMode{mode::kLS, one_foot("left_foot")},
                    SimMode{mode::kLF, ConstraintSet{}},
                    SimMode{mode::kRS, one_foot("right_foot")},
                    SimMode{mode::kRF, ConstraintSet{}}};
  auto liftoff_guard = [](int target) {
    Guard g;
    g.name = "liftoff";
    g.value = [](double, const ModelState&, ConstVecRef, ConstVecRef lambda) {
      return lambda.size() >= 2 ? lambda(1) : 1.0;  // normal force
    };
    g.target_mode = target;
    g.apply_impact = false;
    return g;
  };
  auto touchdown_guard = [&model](const std::string& frame, int target) {
    Guard g;
    g.name = frame + "_touchdown";
    g.value = [&model, frame](double, const ModelState& s, ConstVecRef,
                              ConstVecRef) {
      return frame_kinematics(model, s.q, s.v, frame).position.y();
    };
    g.target_mode = target;
    g.apply_impact = true;
    return g;
  };
  schedule.guards[mode::kLS].push_back(liftoff_guard(mode::kLF));
  schedule.guards[mode::kLF].push_back(
      touchdown_guard("right_foot", mode::kRS));
  schedule.guards[mode::kRS].push_back(liftoff_guard(mode::kRF));
  schedule.guards[mode::kRF].push_back(touchdown_guard("left_foot", mode::kLS));
  schedule.initial_mode = mode::kLS;
  return schedule;
}

}  // namespace

ExperimentResult run_running_ramp(const ExperimentConfig& cfg) {
  const RobotModel model = load_robot_model(cfg.model_file);
  const ExperimentFile exp = load_experiment_file(cfg.experiment_file);
  if (!exp.has_running) {
    throw std::runtime_error("experiment file has no running section");
  }
  const double duration = cfg.run_duration;
  const double target = cfg.ramp_target;
  auto v_des = [duration, target](double t) {
    const double up = 0.4 * duration, down = 0.8 * duration;
    if (t < up) return target * (t / up);
    if (t < down) return target * (1.0 - (t - up) / (down - up));
    return 0.0;
  };

  ExperimentResult result;
  result.experiment = "run-ramp";
  const double stand = exp.running_rest_length;

  for (const std::string& variant : resolve_variants(cfg)) {
    PlanarRunner runner(model, exp, variant, v_des);
    SimOptions opts;
    opts.friction_check = exp.controller.osc.friction;
    opts.stop_predicate = fall_predicate(0.5 * stand, 1.0);
    const SimTrace trace =
        simulate(model, running_schedule(model),
                 [&runner](double t, const ModelState& s) { return runner(t, s); },
                 runner.initial_state(), duration, opts);

    int touchdowns = 0;
    double first_touchdown = -1.0;
    for (const SimEvent& e : trace.events) {
      if (e.kind == "impact") {
        ++touchdowns;
        if (first_touchdown < 0.0) first_touchdown = e.t;
      }
    }
    const bool fell = !run_succeeded(trace, 0.5 * stand, 1.0);
    const double t_end = trace.rows.empty() ? 0.0 : trace.rows.back().t;

    double speed_sum = 0.0;
    int speed_n = 0;
    for (const TraceRow& row : trace.rows) {
      speed_sum += row.v[0];
      ++speed_n;
    }

    MetricsRow row;
    row.experiment = result.experiment;
    row.variant = variant;
    row.success = !fell;
    row.mean_speed = speed_n > 0 ? speed_sum / speed_n : 0.0;
    row.input_cost = input_cost(trace, exp.controller.osc.w_input);
    row.peak_torque_jump = peak_torque_jump(trace);
    row.seed = cfg.seed;
    // reuse the sweep coordinates to report survival time and strides
    row.cell_offset = t_end;
    row.cell_window = touchdowns;
    result.rows.push_back(row);

    ExperimentResult::PlotData plot;
    plot.name = "run_speed_" + variant;
    plot.header = "t,v_des,v_actual";
    for (const TraceRow& r : trace.rows) {
      plot.values.push_back({r.t, v_des(r.t), r.v[0]});
    }
    result.plots.push_back(std::move(plot));
    result.traces["run_" + variant] = trace;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output emission

void emit_outputs(const ExperimentResult& result, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "metrics.csv");
    if (!out) throw std::runtime_error("cannot write metrics.csv in " + dir);
    out << "experiment,variant,offset,window,success,input_cost,"
           "rms_impacting,rms_nonimpacting,rms_pre,rms_window,"
           "peak_torque_jump,mean_speed,seed\n";
    for (const MetricsRow& r : result.rows) {
      out << r.experiment << ',' << r.variant << ',' << fmt(r.cell_offset)
          << ',' << fmt(r.cell_window) << ',' << (r.success ? 1 : 0) << ','
          << (r.input_cost ? fmt(*r.input_cost) : std::string()) << ','
          << fmt(r.rms_impacting) << ',' << fmt(r.rms_nonimpacting) << ','
          << fmt(r.rms_pre) << ',' << fmt(r.rms_window) << ','
          << fmt(r.peak_torque_jump) << ',' << fmt(r.mean_speed) << ','
          << r.seed << "\n";
    }
  }
  for (const auto& [name, trace] : result.traces) {
    write_trace_csv(trace, (fs::path(dir) / (name + "_trace.csv")).string());
    write_trace_binary(trace, (fs::path(dir) / (name + "_trace.bin")).string());
    std::ofstream ev(fs::path(dir) / (name + "_events.csv"));
    ev << "t,kind,from_mode,to_mode,impulse_norm\n";
    for (const SimEvent& e : trace.events) {
      ev << fmt(e.t) << ',' << e.kind << ',' << e.from_mode << ','
         << e.to_mode << ',' << fmt(e.impulse_norm) << "\n";
    }
  }
  for (const ExperimentResult::PlotData& plot : result.plots) {
    std::ofstream out(fs::path(dir) / (plot.name + ".csv"));
    out << plot.header << "\n";
    for (const std::vector<double>& row : plot.values) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << fmt(row[i]);
      }
      out << "\n";
    }
  }
}

}  // namespace stride
