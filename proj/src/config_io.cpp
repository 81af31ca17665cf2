#include "stride/config_io.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace stride {
namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

VecX to_vector(const json& j) {
  if (j.is_number()) {
    VecX v(1);
    v[0] = j.get<double>();
    return v;
  }
  VecX v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

RobotModel load_robot_model(const std::string& path) {
  const json j = load_json(path);
  RobotModel m;
  m.name = j.value("name", "robot");
  m.gravity = j.value("gravity", 9.81);

  for (const json& lj : j.at("links")) {
    LinkParams l;
    l.name = lj.at("name").get<std::string>();
    l.mass = lj.at("mass").get<double>();
    l.inertia = lj.at("inertia").get<double>();
    l.length = lj.at("length").get<double>();
    l.com_offset = lj.at("com_offset").get<double>();
    l.parent = lj.at("parent").get<int>();
    l.joint_offset = lj.value("joint_offset", 0.0);
    m.links.push_back(l);
  }
  for (const json& fj : j.at("frames")) {
    FrameDef f;
    f.name = fj.at("name").get<std::string>();
    f.link = m.link_index(fj.at("link").get<std::string>());
    f.offset = fj.at("offset").get<double>();
    m.frames.push_back(f);
  }
  for (const json& aj : j.at("actuated_joints")) {
    m.actuated.push_back(m.link_index(aj.get<std::string>()));
  }
  if (j.contains("torque_limit")) m.torque_limit = to_vector(j["torque_limit"]);
  if (j.contains("joint_limits")) {
    m.joint_lower = to_vector(j["joint_limits"]["lower"]);
    m.joint_upper = to_vector(j["joint_limits"]["upper"]);
  }
  validate(m);
  return m;
}

ExperimentFile load_experiment_file(const std::string& path) {
  const json j = load_json(path);
  ExperimentFile out;

  const json& cj = j.at("controller");
  OscConfig& osc = out.controller.osc;
  osc.friction = cj.value("friction", 0.6);
  osc.w_input = cj.value("w_input", 1e-4);
  osc.w_accel = cj.value("w_accel", 1e-6);
  osc.w_force = cj.value("w_force", 1e-6);
  osc.window = cj.value("window", 0.05);
  osc.tau = cj.value("tau", 0.005);
  const std::string strategy = cj.value("strategy", "impact-invariant");
  if (strategy == "impact-invariant" || strategy == "projection") {
    osc.strategy = ImpactStrategy::kProjection;
  } else if (strategy == "no-derivative") {
    osc.strategy = ImpactStrategy::kNoDerivative;
  } else if (strategy == "default" || strategy == "none") {
    osc.strategy = ImpactStrategy::kNone;
  } else {
    throw std::runtime_error("unknown impact strategy: " + strategy);
  }
  if (cj.contains("input_limits")) {
    osc.input_limits = to_vector(cj["input_limits"]);
  }
  for (const auto& [name, gj] : cj.at("gains").items()) {
    ObjectiveGains g;
    g.kp = to_vector(gj.at("kp"));
    g.kd = to_vector(gj.at("kd"));
    g.weight = to_vector(gj.at("weight"));
    g.ramp_start = gj.value("ramp_start", 1.0);
    g.ramp_end = gj.value("ramp_end", 1.0);
    out.controller.gains[name] = g;
  }

  if (j.contains("walking")) {
    const json& wj = j["walking"];
    out.walking.step_length = wj.value("step_length", 0.35);
    out.walking.period = wj.value("period", 0.6);
    out.walking.clearance = wj.value("clearance", 0.06);
    out.walking.pelvis_height = wj.value("pelvis_height", 0.7);
    out.has_walking = true;
  }
  if (j.contains("jump")) {
    const json& jj = j["jump"];
    out.jump.apex_height = jj.value("apex_height", 0.15);
    out.jump.crouch_depth = jj.value("crouch_depth", 0.12);
    out.jump.crouch_duration = jj.value("crouch_duration", 0.7);
    out.jump.land_duration = jj.value("land_duration", 1.0);
    out.jump.stand_pelvis_height = jj.value("stand_pelvis_height", 0.7);
    out.jump.flight_foot_clearance = jj.value("flight_foot_clearance", 0.15);
    out.has_jump = true;
  }
  if (j.contains("running")) {
    const json& rj = j["running"];
    out.running_timings.stance = rj.value("stance_duration", 0.3);
    out.running_timings.flight = rj.value("flight_duration", 0.09);
    out.running_timings.stance_variance = rj.value("stance_variance", 0.2);
    out.running_timings.flight_variance = rj.value("flight_variance", 0.1);
    out.running_timings.adapted_stance = out.running_timings.stance;
    out.running_timings.adapted_flight = out.running_timings.flight;
    out.running_rest_length = rj.value("rest_length", 0.7);
    out.running_clearance = rj.value("clearance", 0.2);
    out.running_thrust = rj.value("thrust_velocity", 0.0);
    out.raibert.k_x = rj.value("raibert_kx", 0.01);
    out.raibert.rest_length = out.running_rest_length;
    out.raibert.neutral_coeff = rj.value("raibert_neutral_coeff", 0.0);
    out.raibert.stance_duration = out.running_timings.stance;
    out.slip_kp = rj.value("slip_kp", 115.0);
    out.slip_kd = rj.value("slip_kd", 5.0);
    out.has_running = true;
  }
  return out;
}

void apply_gains(const ControllerConfig& config, TrackingObjective& objective) {
  const auto it = config.gains.find(objective.name);
  if (it == config.gains.end()) {
    throw std::out_of_range("no gains configured for objective '" +
                            objective.name + "'");
  }
  const ObjectiveGains& g = it->second;
  auto expand = [&](const VecX& v) -> VecX {
    if (v.size() == objective.dim()) return v;
    if (v.size() == 1) return VecX::Constant(objective.dim(), v[0]);
    throw std::out_of_range("gain size mismatch for objective '" +
                            objective.name + "'");
  };
  objective.kp = expand(g.kp);
  objective.kd = expand(g.kd);
  objective.weight = expand(g.weight);
  objective.weight_ramp_start = g.ramp_start;
  objective.weight_ramp_end = g.ramp_end;
}

}  // namespace stride
