// Experiment harness CLI: reproduces the walking comparison, the jump
// transition-time x projection-window sweep, and the running velocity ramp,
// and replays recorded traces. Failed runs are data, not errors: the exit
// code is nonzero only when a run could not be executed at all.

#include <CLI11.hpp>
#include <iostream>

#include "stride/bench.hpp"

using namespace stride;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string variant;
  bool seed_set = false;
  bool workers_set = false;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config, "experiment config file (json)")
      ->required();
  cmd->add_option("--out", args->out, "output directory");
  cmd->add_option("--seed", args->seed, "random seed override")
      ->each([args](const std::string&) { args->seed_set = true; });
  cmd->add_option("--workers", args->workers, "worker thread count")
      ->each([args](const std::string&) { args->workers_set = true; });
  cmd->add_option("--variant", args->variant,
                  "restrict to one controller variant "
                  "(default|no-derivative|impact-invariant)");
}

ExperimentConfig make_config(const CommonArgs& args, const char* kind) {
  ExperimentConfig cfg = load_experiment_config(args.config);
  if (cfg.kind != kind) {
    std::cerr << "note: config kind '" << cfg.kind << "' run as '" << kind
              << "'\n";
  }
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.seed_set) cfg.seed = args.seed;
  if (args.workers_set) cfg.workers = args.workers;
  if (!args.variant.empty()) cfg.variants = {args.variant};
  return cfg;
}

int emit_and_report(const ExperimentResult& result, const std::string& out) {
  if (!out.empty()) {
    emit_outputs(result, out);
    std::cout << "wrote " << result.rows.size() << " metric rows to " << out
              << "\n";
  }
  for (const MetricsRow& r : result.rows) {
    std::cout << r.experiment << " " << r.variant;
    if (r.experiment == "jump-sweep") {
      std::cout << " offset=" << r.cell_offset << " window=" << r.cell_window;
    }
    std::cout << (r.success ? " ok" : " FAIL");
    if (r.input_cost) std::cout << " J_u=" << *r.input_cost;
    if (r.experiment == "run-ramp") {
      std::cout << " mean_speed=" << r.mean_speed;
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planar legged-robot benchmark harness"};
  app.require_subcommand(1);

  CommonArgs walk_args, jump_args, run_args;
  CLI::App* walk = app.add_subcommand("walk-compare",
                                      "three-variant walking robustness "
                                      "comparison with a perturbed swing foot");
  add_common(walk, &walk_args);
  CLI::App* jump = app.add_subcommand(
      "jump-sweep", "transition-time x projection-window jump sweep");
  add_common(jump, &jump_args);
  CLI::App* run = app.add_subcommand("run-ramp",
                                     "running with a ramped speed command");
  add_common(run, &run_args);

  std::string replay_file, replay_csv;
  CLI::App* replay = app.add_subcommand("replay", "inspect a recorded trace");
  replay->add_option("file", replay_file, "trace file (csv or binary)")
      ->required();
  replay->add_option("--csv", replay_csv, "re-emit the trace as csv here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (walk->parsed()) {
      return emit_and_report(
          run_walking_comparison(make_config(walk_args, "walk-compare")),
          walk_args.out);
    }
    if (jump->parsed()) {
      return emit_and_report(
          run_jump_sweep(make_config(jump_args, "jump-sweep")), jump_args.out);
    }
    if (run->parsed()) {
      return emit_and_report(
          run_running_ramp(make_config(run_args, "run-ramp")), run_args.out);
    }
    if (replay->parsed()) {
      const SimTrace trace = read_trace(replay_file);
      std::cout << "rows: " << trace.rows.size()
                << ", events: " << trace.events.size()
                << ", completed: " << (trace.completed ? "yes" : "no");
      if (!trace.failure_reason.empty()) {
        std::cout << " (" << trace.failure_reason << ")";
      }
      std::cout << "\n";
      if (!trace.rows.empty()) {
        const TraceRow& last = trace.rows.back();
        std::cout << "duration: " << trace.duration()
                  << " s, final pelvis: (" << last.q[0] << ", " << last.q[1]
                  << "), final mode: " << last.mode << "\n";
      }
      for (const SimEvent& e : trace.events) {
        std::cout << "  t=" << e.t << " " << e.kind << " " << e.from_mode
                  << "->" << e.to_mode;
        if (e.kind == "impact") std::cout << " |impulse|=" << e.impulse_norm;
        std::cout << "\n";
      }
      if (!replay_csv.empty()) {
        write_trace_csv(trace, replay_csv);
        std::cout << "wrote " << replay_csv << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
