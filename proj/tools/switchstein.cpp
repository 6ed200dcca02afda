// Batch front-end: parse an experiment config, run the requested experiment,
// write CSV/JSON reports. Exit codes: 0 success, 2 config error, 3 runtime
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "switchstein/switchstein.hpp"

namespace fs = std::filesystem;
using namespace switchstein;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool dump_path = false;
  bool dump_noise = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool with_dump = false) {
  cmd->add_option("--config", args.config_path, "experiment config file")->required();
  cmd->add_option("--scheme", args.scheme,
                  "override the scheme list (euler|milstein|milstein-ablated)");
  cmd->add_option("--seed", args.seed, "override the seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  if (with_dump) {
    cmd->add_flag("--dump-path", args.dump_path, "also dump the chain's jump list");
    cmd->add_flag("--dump-noise", args.dump_noise,
                  "also dump the driving path (time, w1..wm)");
  }
}

ExperimentConfig load_with_overrides(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out_dir) cfg.out_dir = *args.out_dir;
  if (args.scheme) cfg.schemes = std::vector<std::string>{*args.scheme};
  return cfg;
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out_dir.value_or("out");
  fs::create_directories(dir);
  return dir;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

GeneratorMatrix resolve_generator(const ExperimentConfig& cfg) {
  if (cfg.generator) {
    const std::size_t n = cfg.generator->size();
    const auto m0 = std::size_t(std::llround(std::sqrt(double(n))));
    if (m0 * m0 != n)
      throw error(errc::bad_config, "key 'generator': need a square row-major matrix");
    Mat q(m0, m0);
    q.a = *cfg.generator;
    return validate_generator(q);
  }
  if (cfg.problem) return find_problem(*cfg.problem).default_generator;
  throw error(errc::bad_config, "need either 'generator' or 'problem' in the config");
}

int cmd_converge(const CommonArgs& args) {
  ExperimentConfig cfg;
  ExperimentPlan plan;
  fs::path dir;
  try {
    cfg = load_with_overrides(args);
    plan = build_plan(cfg);
    print_warnings(finalize_plan(plan));
    dir = ensure_out_dir(cfg);
  } catch (const error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const std::string stem = plan.problem.name;
    write_manifest((dir / (stem + "_converge_manifest.json")).string(), "converge", cfg, &plan);
    const ConvergenceReport report = run_strong_error(plan);
    write_strong_error_csv((dir / (stem + "_strong_error.csv")).string(), report);
    if (cfg.emit_plot_data.value_or(true))
      for (const auto& s : report.slopes)
        write_loglog_data(
            (dir / (stem + "_" + scheme_name(s.scheme) + "_loglog.dat")).string(), report,
            s.scheme);
    write_summary_json((dir / (stem + "_summary.json")).string(), report);
    for (const auto& s : report.slopes)
      std::printf("%s %s slope=%.4f +-%.4f\n", stem.c_str(), scheme_name(s.scheme),
                  s.fit.slope, s.fit.ci95_half_width);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_chain_stats(const CommonArgs& args) {
  ExperimentConfig cfg;
  GeneratorMatrix gen;
  std::vector<double> hs;
  fs::path dir;
  std::size_t n_intervals = 0;
  std::uint64_t seed = 0;
  int initial_state = 1;
  try {
    cfg = load_with_overrides(args);
    gen = resolve_generator(cfg);
    if (!cfg.steps) throw error(errc::bad_config, "missing required key 'steps'");
    hs = *cfg.steps;
    n_intervals = cfg.n_intervals.value_or(1000000);
    seed = cfg.seed.value_or(42);
    initial_state = cfg.initial_state.value_or(1);
    if (initial_state < 1 || initial_state > gen.states)
      throw error(errc::bad_config, "initial_state out of range");
    for (double h : hs)
      if (gen.max_rate * h > 0.5)
        throw error(errc::step_too_large,
                    "h = " + std::to_string(h) + " violates q*h <= 1/2");
    dir = ensure_out_dir(cfg);
  } catch (const error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const std::string stem = cfg.problem.value_or("generator");
    write_manifest((dir / (stem + "_chain_stats_manifest.json")).string(), "chain-stats", cfg,
                   nullptr);
    std::vector<ChainStatsReport> reports;
    for (double h : hs) {
      reports.push_back(run_chain_statistics(gen, h, n_intervals, seed, 0, initial_state));
      const auto& r = reports.back();
      for (const auto& row : r.rows)
        std::printf("h=%g %s empirical=%.6g bound=%.6g slack=%.3g %s\n", h,
                    row.statistic.c_str(), row.empirical, row.bound, row.slack,
                    row.pass ? "PASS" : "FAIL");
    }
    write_chain_stats_csv((dir / (stem + "_chain_stats.csv")).string(), reports);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_simulate(const CommonArgs& args) {
  ExperimentConfig cfg;
  SdewmsProblem problem;
  GeneratorMatrix gen;
  double h = 0.0, h_ref = 0.0;
  SchemeKind kind = SchemeKind::milstein;
  std::uint64_t seed = 0;
  fs::path dir;
  try {
    cfg = load_with_overrides(args);
    if (!cfg.problem) throw error(errc::bad_config, "missing required key 'problem'");
    problem = find_problem(*cfg.problem);
    if (cfg.horizon) problem.horizon = *cfg.horizon;
    if (!cfg.steps || cfg.steps->size() != 1)
      throw error(errc::bad_config, "simulate needs exactly one value in 'steps'");
    h = cfg.steps->front();
    gen = cfg.generator ? resolve_generator(cfg) : problem.default_generator;
    ExperimentPlan probe;  // reuse the plan checks for the single step
    probe.problem = problem;
    probe.generator = gen;
    probe.steps = {h};
    probe.n_paths = 2;
    probe.schemes = {SchemeKind::milstein};
    probe.reference = problem.closed_form ? ReferenceMode::closed_form
                                          : ReferenceMode::fine_milstein;
    probe.h_ref = cfg.h_ref.value_or(h);
    print_warnings(finalize_plan(probe));
    h_ref = probe.h_ref;
    seed = cfg.seed.value_or(42);
    if (cfg.schemes) {
      if (cfg.schemes->size() != 1)
        throw error(errc::bad_config, "simulate needs exactly one scheme");
      kind = scheme_from_name(cfg.schemes->front());
    }
    dir = ensure_out_dir(cfg);
  } catch (const error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const std::string stem = problem.name;
    write_manifest((dir / (stem + "_simulate_manifest.json")).string(), "simulate", cfg,
                   nullptr);
    RandomStream chain_stream(seed, 0, StreamPurpose::chain);
    const ChainPath chain =
        sample_chain_path(gen, problem.initial_regime, problem.horizon, chain_stream);
    const TimeGrid grid = build_merged_grid(problem.horizon, h_ref, chain);
    RandomStream noise_stream(seed, 0, StreamPurpose::noise);
    const DrivingNoise noise = sample_noise(grid, problem.dim_w, noise_stream);
    const Trajectory traj = simulate_trajectory(problem, kind, h, chain, noise, &gen);
    write_trajectory_csv((dir / (stem + "_trajectory.csv")).string(), traj);
    if (args.dump_path) write_jumps_csv((dir / (stem + "_jumps.csv")).string(), chain);
    if (args.dump_noise) write_noise_csv((dir / (stem + "_noise.csv")).string(), noise);
    std::printf("%s %s h=%g nodes=%zu jumps=%zu\n", stem.c_str(), scheme_name(kind), h,
                traj.times.size(), chain.jumps.size());
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_validate_model(const CommonArgs& args) {
  ExperimentConfig cfg;
  SdewmsProblem problem;
  int probes = 1000;
  std::uint64_t seed = 0;
  fs::path dir;
  try {
    cfg = load_with_overrides(args);
    if (!cfg.problem) throw error(errc::bad_config, "missing required key 'problem'");
    problem = find_problem(*cfg.problem);
    probes = cfg.probes.value_or(1000);
    seed = cfg.seed.value_or(42);
    dir = ensure_out_dir(cfg);
  } catch (const error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    write_manifest((dir / (problem.name + "_validate_manifest.json")).string(),
                   "validate-model", cfg, nullptr);
    RandomStream stream(seed, 0, StreamPurpose::probe);
    const ValidationReport report = validate_problem(problem, probes, stream);
    for (const auto& c : report.checks)
      std::printf("%-32s worst=%.6g bound=%.6g %s\n", c.name.c_str(), c.worst, c.bound,
                  c.pass ? "PASS" : "FAIL");
    std::printf("%s: %s\n", problem.name.c_str(),
                report.all_pass ? "all checks passed" : "violations flagged (report-only)");
    write_validation_csv((dir / (problem.name + "_validation.csv")).string(), report);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"switchstein - strong-convergence laboratory for SDEs with Markovian switching"};
  app.require_subcommand(1);

  CommonArgs converge_args, stats_args, simulate_args, validate_args;
  CLI::App* converge = app.add_subcommand(
      "converge", "strong-error measurement and order regression");
  add_common_flags(converge, converge_args);
  CLI::App* stats = app.add_subcommand(
      "chain-stats", "empirical jump-count statistics against their bounds");
  add_common_flags(stats, stats_args);
  CLI::App* simulate = app.add_subcommand("simulate", "dump one trajectory as CSV");
  add_common_flags(simulate, simulate_args, /*with_dump=*/true);
  CLI::App* validate = app.add_subcommand(
      "validate-model", "probe the regularity assumptions of a catalog problem");
  add_common_flags(validate, validate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (converge->parsed()) return cmd_converge(converge_args);
  if (stats->parsed()) return cmd_chain_stats(stats_args);
  if (simulate->parsed()) return cmd_simulate(simulate_args);
  if (validate->parsed()) return cmd_validate_model(validate_args);
  return kExitConfig;
}
