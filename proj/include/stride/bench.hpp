#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stride/config_io.hpp"
#include "stride/sim.hpp"

namespace stride {

struct ExperimentConfig {
  std::string kind;  // walk-compare | jump-sweep | run-ramp
  std::string model_file;
  std::string experiment_file;
  std::string out_dir;  // empty: keep results in memory only
  std::uint64_t seed = 0;
  int workers = 1;
  int trials_per_cell = 5;
  std::vector<double> offsets;  // jump sweep: controller transition offsets, s
  std::vector<double> windows;  // jump sweep: projection window durations, s
  double perturbation = 0.1;    // walking: swing-foot vertical velocity, m/s
  double ramp_target = 1.3;     // running: peak commanded speed, m/s
  double run_duration = 20.0;   // running: seconds simulated per variant
  std::vector<std::string> variants;  // empty = all that apply
  bool write_traces = true;
};

ExperimentConfig load_experiment_config(const std::string& path);

inline constexpr const char* kVariantDefault = "default";
inline constexpr const char* kVariantNoDerivative = "no-derivative";
inline constexpr const char* kVariantImpactInvariant = "impact-invariant";

struct MetricsRow {
  std::string experiment;
  std::string variant;
  double cell_offset = 0.0;  // sweep coordinates (0 when not swept)
  double cell_window = 0.0;
  bool success = false;
  std::optional<double> input_cost;  // J_u, empty for failed cells
  double rms_impacting = 0.0;        // post-impact velocity error, impacting leg
  double rms_nonimpacting = 0.0;
  double rms_pre = 0.0;     // all tracked joints, before the window
  double rms_window = 0.0;  // all tracked joints, inside the window
  double peak_torque_jump = 0.0;  // max consecutive-tick |du|, N m
  double mean_speed = 0.0;        // running
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<MetricsRow> rows;
  std::map<std::string, SimTrace> traces;  // keyed by deterministic run name
  // Auxiliary plot data (error-vs-time, ramp profile, ...), one block per
  // output file: (name, csv header, rows).
  struct PlotData {
    std::string name;
    std::string header;
    std::vector<std::vector<double>> values;
  };
  std::vector<PlotData> plots;
};

/// Walking robustness comparison: all configured variants tracking the same
/// periodic gait with the swing-foot vertical velocity perturbed, projection
/// and no-derivative variants active in a window around the nominal impact.
ExperimentResult run_walking_comparison(const ExperimentConfig& config);

/// Grid over (controller transition-time offset) x (projection window
/// duration) with repeated noisy trials per cell; a cell fails when more than
/// half its trials fall. Input costs are normalized so the largest is 1.
ExperimentResult run_jump_sweep(const ExperimentConfig& config);

/// Running with the commanded speed ramped 0 -> target -> 0 for the
/// impact-invariant, no-derivative, and no-projection variants.
ExperimentResult run_running_ramp(const ExperimentConfig& config);

/// Writes metrics.csv, per-run trace CSVs, and plot-data files into `dir`.
/// File contents are deterministic for a fixed seed/config. Throws
/// std::runtime_error when the directory cannot be created or written.
void emit_outputs(const ExperimentResult& result, const std::string& dir);

/// Common success predicate: trace completed and the pelvis stayed above the
/// height threshold with |pitch| within bound throughout.
bool run_succeeded(const SimTrace& trace, double min_pelvis_height,
                   double max_pitch = 1.0);

/// Trapezoidal integral of u^T W_u u over the trace.
double input_cost(const SimTrace& trace, double w_input);

/// Deterministic per-trial RNG stream: hashes (seed, cell, trial).
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t cell,
                         std::uint64_t trial);

}  // namespace stride
