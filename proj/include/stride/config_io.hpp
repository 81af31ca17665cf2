#pragma once

#include <map>
#include <string>

#include "stride/gait.hpp"
#include "stride/model.hpp"
#include "stride/osc.hpp"

namespace stride {

/// Loads a robot description from JSON (schema documented in the README:
/// link list, frames, actuated joints, gravity, torque limit, joint limits).
/// The returned model has been validated.
RobotModel load_robot_model(const std::string& path);

struct ObjectiveGains {
  VecX kp, kd, weight;
  double ramp_start = 1.0, ramp_end = 1.0;
};

struct ControllerConfig {
  OscConfig osc;
  std::map<std::string, ObjectiveGains> gains;  // keyed by objective name
};

/// Experiment file: controller section plus one gait section. Unused gait
/// sections may be absent.
struct ExperimentFile {
  ControllerConfig controller;
  WalkingGaitParams walking;
  JumpParams jump;
  GaitTimings running_timings;
  RaibertParams raibert;
  double running_rest_length = 0.7;
  double running_clearance = 0.2;
  double running_thrust = 0.0;  // stance reference vertical-rate bias, m/s
  double slip_kp = 115.0, slip_kd = 5.0;
  bool has_walking = false, has_jump = false, has_running = false;
};

ExperimentFile load_experiment_file(const std::string& path);

/// Applies a gains entry to an objective (throws std::out_of_range when the
/// config has no entry for it).
void apply_gains(const ControllerConfig& config, TrackingObjective& objective);

}  // namespace stride
