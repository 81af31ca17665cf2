#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stride/contact.hpp"
#include "stride/model.hpp"
#include "stride/qp.hpp"
#include "stride/trajectory.hpp"

namespace stride {

enum class OutputKind {
  kFramePosition,          // world position of a frame (2)
  kRelativeFramePosition,  // frame position minus base_frame position (2)
  kJointAngle,             // one generalized coordinate (1)
  kLinkOrientation,        // absolute angle of a link (1)
};

struct ReferenceSample {
  VecX y;
  VecX ydot;
  VecX yddot;
};

/// Time-indexed reference: either a stored piecewise polynomial or an online
/// generator (used by the running controller, whose targets depend on state).
class Reference {
 public:
  Reference() = default;
  explicit Reference(PiecewisePolynomial traj);
  Reference(std::function<ReferenceSample(double)> generator, double t_start,
            double t_end);

  bool defined_at(double t) const;
  ReferenceSample sample(double t) const;  // throws std::out_of_range

 private:
  PiecewisePolynomial traj_;
  std::function<ReferenceSample(double)> generator_;
  double gen_start_ = 0.0, gen_end_ = 0.0;
};

struct TrackingObjective {
  std::string name;
  OutputKind kind = OutputKind::kJointAngle;
  std::string frame;       // frame outputs
  std::string base_frame;  // kRelativeFramePosition
  int joint = -1;          // generalized-coordinate index, kJointAngle
  int link = 0;            // kLinkOrientation
  VecX kp, kd, weight;     // diagonal entries, one per output dimension
  std::set<int> active_modes;
  Reference reference;
  // Linear weight multiplier across the active mode, evaluated at the mode
  // phase in [0, 1]. (1, 1) keeps the weight constant.
  double weight_ramp_start = 1.0;
  double weight_ramp_end = 1.0;

  int dim() const;
};

struct OutputEval {
  VecX y;
  MatX jacobian;  // dim x n_q
  VecX jdot_v;
};

OutputEval eval_output(const TrackingObjective& obj, const RobotModel& model,
                       ConstVecRef q, ConstVecRef v);

/// Gain/weight sanity plus a finite-difference check of the output Jacobian
/// at a handful of pseudo-random states. Throws std::invalid_argument.
void validate_objective(const TrackingObjective& obj, const RobotModel& model);

enum class ImpactStrategy { kNone, kNoDerivative, kProjection };

struct OscConfig {
  double friction = 0.6;   // mu
  double w_input = 1e-4;   // uniform diagonal regularizer on u
  double w_accel = 1e-6;   // on qdd
  double w_force = 1e-6;   // on lambda
  VecX input_limits;       // per actuator; empty -> model torque_limit
  double window = 0.05;    // T, s (half-width of the projection window)
  double tau = 0.005;      // blend time constant, s
  ImpactStrategy strategy = ImpactStrategy::kProjection;
};

/// Anticipated impact the controller should blend its correction around:
/// the nominal switch time and the constraints of the post-impact mode.
struct ImpactWindow {
  double t_switch = 0.0;
  ConstraintSet constraints;
};

/// Smooth activation in [0, 1]: a symmetric logistic ramp that plateaus near
/// 1 inside |t - t_switch| < T and is exactly 0 outside 1.5 T.
double blend_alpha(double t, double t_switch, double window, double tau);

/// PD feedback on the output with the impact-window velocity treatment:
/// projection blends the measured output velocity toward its projected value,
/// the no-derivative baseline scales Kd by (1 - alpha) instead.
VecX commanded_acceleration(const TrackingObjective& obj, double t,
                            ConstVecRef y, ConstVecRef ydot,
                            ConstVecRef ydot_proj, double alpha,
                            ImpactStrategy strategy);

/// Assembles the whole-body QP over z = (u, lambda, qdd): tracking costs
/// plus regularizers, dynamics and constraint-acceleration equalities,
/// friction-pyramid / normal-force / torque-limit inequalities.
/// `yddot_cmd` and `weight_scales` are per entry of `objectives`.
QuadraticProgram assemble_osc_qp(const RobotModel& model,
                                 const ModelState& state,
                                 const ConstraintSet& active,
                                 const std::vector<const TrackingObjective*>& objectives,
                                 const std::vector<VecX>& yddot_cmd,
                                 const std::vector<double>& weight_scales,
                                 const OscConfig& config);

struct ObjectiveDiagnostics {
  std::string name;
  VecX y_err;
  VecX ydot_err;       // from the measured velocity
  VecX ydot_err_proj;  // from the blended/projected velocity
  VecX yddot_cmd;
};

struct OscOutput {
  VecX u;       // actuator torques
  VecX lambda;  // contact/constraint forces of the active mode
  VecX qdd;
  double alpha = 0.0;
  bool fault = false;                  // QP failed; u holds the previous command
  bool projection_degenerate = false;  // fell back to the unprojected velocity
  QpStatus qp_status = QpStatus::kOptimal;
  double solve_time = 0.0;
  int qp_iterations = 0;
  std::vector<ObjectiveDiagnostics> objectives;
};

/// Operational space controller. Owns warm-start state across ticks; one
/// instance per control loop (instances are independent, a single instance is
/// not safe for concurrent calls).
class OscController {
 public:
  OscController(RobotModel model, std::vector<TrackingObjective> objectives,
                std::map<int, ConstraintSet> mode_constraints, OscConfig config);

  /// One control tick. `window`, when set, is the anticipated impact whose
  /// correction is blended in; `mode_phase` in [0, 1] drives objective weight
  /// ramps. Solver failures latch the previous torque command and set fault.
  OscOutput control_step(const ModelState& state, int mode, double t,
                         const std::optional<ImpactWindow>& window = std::nullopt,
                         double mode_phase = 0.0);

  const OscConfig& config() const { return config_; }
  OscConfig& mutable_config() { return config_; }
  const RobotModel& model() const { return model_; }
  std::vector<TrackingObjective>& objectives() { return objectives_; }
  int degenerate_projection_count() const { return degenerate_count_; }
  void reset();

 private:
  RobotModel model_;
  std::vector<TrackingObjective> objectives_;
  std::map<int, ConstraintSet> mode_constraints_;
  OscConfig config_;
  std::vector<int> warm_active_;
  int warm_mode_ = -1;
  VecX prev_u_;
  int degenerate_count_ = 0;
};

}  // namespace stride
