#pragma once

#include <string>
#include <vector>

#include "stride/contact.hpp"
#include "stride/model.hpp"
#include "stride/trajectory.hpp"

namespace stride {

// Mode ids shared by the finite state machines, the controller's objective
// activation sets, and the simulator traces.
namespace mode {
// walking
inline constexpr int kLeftStance = 0;
inline constexpr int kRightStance = 1;
// jumping
inline constexpr int kCrouch = 10;
inline constexpr int kJumpFlight = 11;
inline constexpr int kLand = 12;
// running
inline constexpr int kLS = 20;  // left stance
inline constexpr int kLF = 21;  // flight after left stance
inline constexpr int kRS = 22;  // right stance
inline constexpr int kRF = 23;  // flight after right stance

std::string name(int mode);
}  // namespace mode

/// Nominal and adapted stance/flight durations with their clip fractions.
struct GaitTimings {
  double stance = 0.3;           // T_s, s
  double flight = 0.09;          // T_f, s
  double stance_variance = 0.2;  // sigma_s
  double flight_variance = 0.1;  // sigma_f
  double adapted_stance = 0.3;   // T_s*, recomputed at mode switches
  double adapted_flight = 0.09;  // T_f*
};

/// Scale the stance duration by the leg-compression ratio and predict the
/// flight duration from the ballistic fall back to the rest length, both
/// clipped to (1 +- variance) of nominal.
GaitTimings adapt_mode_timings(double y_slip, double ydot_slip,
                               double rest_length, GaitTimings timings,
                               double gravity = 9.81);

struct FsmStage {
  int mode = 0;
  enum class Duration { kStance, kFlight, kFixed } kind = Duration::kFixed;
  double fixed = 0.0;  // s, used with kFixed
};

struct FsmCycle {
  std::vector<FsmStage> stages;
  bool loop = true;  // final stage holds forever when false
};

struct FsmState {
  int stage = 0;
  int mode = 0;
  double entry_time = 0.0;
  double switch_time = 0.0;  // scheduled next transition
};

double stage_duration(const FsmStage& stage, const GaitTimings& timings);

FsmState fsm_init(const FsmCycle& cycle, double t0, const GaitTimings& timings);

/// Advances through the declared cycle while t has passed the scheduled
/// switch time, re-reading (possibly adapted) stage durations at each switch.
FsmState fsm_advance(const FsmCycle& cycle, FsmState fsm, double t,
                     const GaitTimings& timings);

/// Full biped configuration from a pelvis pose and both foot positions,
/// using the canonical link/frame naming of config/rabbit.json. Knees bend
/// backwards. Throws GenerationError when a foot target is out of reach.
VecX biped_ik(const RobotModel& model, const Vec2& pelvis, double pitch,
              const Vec2& left_foot, const Vec2& right_foot);

// ---------------------------------------------------------------------------
// Walking

struct WalkingGaitParams {
  double step_length = 0.35;   // m between consecutive footholds
  double period = 0.6;         // s per step
  double clearance = 0.06;     // m swing-foot apex height
  double pelvis_height = 0.7;  // m during stance
};

/// Periodic joint-space walking reference. Joint trajectories are cubic
/// splines over each step whose boundary velocities absorb the rigid-impact
/// velocity jump, so the reference velocity discontinuity at each nominal
/// impact time is exactly the impact map applied to the pre-impact reference
/// state.
struct WalkingReference {
  PiecewisePolynomial left_hip, left_knee, right_hip, right_knee;  // 1-dim each
  PiecewisePolynomial full_q;  // n_q-dim reference configuration
  std::vector<double> impact_times;
  std::vector<int> stance_modes;  // mode during step k (kLeftStance/kRightStance)
  ModelState initial_state;
  double step_period = 0.0;
};

WalkingReference walking_reference(const RobotModel& model,
                                   const WalkingGaitParams& params,
                                   int num_steps);

// ---------------------------------------------------------------------------
// Jumping

struct JumpParams {
  double apex_height = 0.15;    // m, pelvis apex above standing height
  double crouch_depth = 0.12;   // m
  double crouch_duration = 0.7; // s, includes the extension to liftoff
  double land_duration = 1.0;   // s to settle after touchdown
  double stand_pelvis_height = 0.7;  // m
  double flight_foot_clearance = 0.15;  // m feet tuck at apex
};

struct JumpReference {
  PiecewisePolynomial pelvis;       // 2-dim (x, z), world frame
  PiecewisePolynomial torso_pitch;  // 1-dim
  PiecewisePolynomial foot_left;    // 2-dim, relative to pelvis
  PiecewisePolynomial foot_right;
  double liftoff_time = 0.0;
  double touchdown_time = 0.0;  // nominal, from the ballistic flight
  double end_time = 0.0;
  ModelState initial_state;
};

/// Crouch -> ballistic flight -> landing reference. The flight segment is an
/// exact parabola, so the nominal touchdown time is the closed-form fall time
/// from apex. Throws GenerationError for ballistically impossible parameters.
JumpReference jump_reference(const RobotModel& model, const JumpParams& params);

// ---------------------------------------------------------------------------
// Running building blocks

/// Spring-like vertical pelvis regulation about the rest length l:
/// yddot = kp (l - y) - kd ydot.
double slip_pelvis_command(double rest_length, double y_slip, double ydot_slip,
                           double kp, double kd);

struct RaibertParams {
  double k_x = 0.01;          // m per m/s of sagittal velocity error
  double rest_length = 0.85;  // m, target leg length at touchdown
  double neutral_coeff = 0.0; // scales the v * T_s / 2 neutral-point term
  double stance_duration = 0.3;  // s, used by the neutral-point term
};

/// Touchdown target for the swing foot, relative to the pelvis:
/// x = k_x (v_des - v) + neutral_coeff * v * T_s / 2, z = -l.
Vec2 raibert_footstep(double v_x, double v_des_x, const RaibertParams& params);

/// Two quadratic segments with breaks [0, 0.6 T, T]. The interior waypoint
/// sits at 80% of the chord from y0 to y2, raised by the clearance d, and is
/// the stationary point of both segments, so a symmetric swing peaks exactly
/// d above the endpoints and the foot descends into the target over the last
/// 40% of the swing.
PiecewisePolynomial swing_foot_spline(const Vec2& y0, const Vec2& y2,
                                      double t_total, double clearance);

}  // namespace stride
