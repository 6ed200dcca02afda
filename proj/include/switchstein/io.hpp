#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/config.hpp"
#include "switchstein/convergence.hpp"
#include "switchstein/model.hpp"
#include "switchstein/scheme.hpp"

namespace switchstein {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

/// Fixed %.12g formatting: enough digits for the quantities we report, and a
/// deterministic byte representation of identical doubles.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error(errc::bad_config, "cannot write file '" + path + "'");
  return out;
}

}  // namespace detail

inline void write_strong_error_csv(const std::string& path, const ConvergenceReport& r) {
  auto out = detail::open_out(path);
  out << "scheme,h,n_paths,mean_sup_sq_error,rms_error,std_err,wall_ms\n";
  for (const auto& l : r.levels)
    out << scheme_name(l.scheme) << ',' << detail::fmt(l.h) << ',' << l.n_paths << ','
        << detail::fmt(l.mean_sup_sq) << ',' << detail::fmt(l.rms) << ','
        << detail::fmt(l.std_err) << ',' << detail::fmt(l.wall_ms) << '\n';
}

/// Two-column log-log data for external plotting, one file per scheme.
inline void write_loglog_data(const std::string& path, const ConvergenceReport& r,
                              SchemeKind scheme) {
  auto out = detail::open_out(path);
  out << "log2h,log2rms\n";
  for (const auto& l : r.levels)
    if (l.scheme == scheme)
      out << detail::fmt(std::log2(l.h)) << ',' << detail::fmt(std::log2(l.rms)) << '\n';
}

inline nlohmann::ordered_json report_to_json(const ConvergenceReport& r) {
  nlohmann::ordered_json j;
  j["problem"] = r.problem;
  j["reference"] = reference_name(r.reference);
  j["seed"] = r.seed;
  j["h_ref"] = r.h_ref;
  j["n_paths"] = r.n_paths;
  j["warnings"] = r.warnings;
  auto& slopes = j["slopes"];
  for (const auto& s : r.slopes) {
    nlohmann::ordered_json js;
    js["scheme"] = scheme_name(s.scheme);
    js["slope"] = s.fit.slope;
    js["ci95_half_width"] = s.fit.ci95_half_width;
    js["stderr"] = s.fit.stderr_slope;
    js["n_points"] = s.fit.n_points;
    slopes.push_back(js);
  }
  auto& levels = j["levels"];
  for (const auto& l : r.levels) {
    nlohmann::ordered_json jl;
    jl["scheme"] = scheme_name(l.scheme);
    jl["h"] = l.h;
    jl["n_paths"] = l.n_paths;
    jl["mean_sup_sq_error"] = l.mean_sup_sq;
    jl["rms_error"] = l.rms;
    jl["std_err"] = l.std_err;
    jl["wall_ms"] = l.wall_ms;
    levels.push_back(jl);
  }
  j["total_wall_ms"] = r.total_wall_ms;
  return j;
}

inline void write_summary_json(const std::string& path, const ConvergenceReport& r,
                               const ResolutionCheck* resolution = nullptr) {
  nlohmann::ordered_json j = report_to_json(r);
  if (resolution) {
    nlohmann::ordered_json jr;
    jr["h_ref"] = resolution->h_ref;
    jr["h_ref_half"] = resolution->h_ref_half;
    jr["slope_at_h_ref"] = resolution->slope_at_h_ref.slope;
    jr["slope_at_half"] = resolution->slope_at_half.slope;
    jr["slope_change"] = resolution->slope_change;
    j["resolution_check"] = jr;
  }
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline void write_chain_stats_csv(const std::string& path,
                                  const std::vector<ChainStatsReport>& reports) {
  auto out = detail::open_out(path);
  out << "h,n_intervals,statistic,empirical,bound,slack,pass\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      out << detail::fmt(r.h) << ',' << r.n_intervals << ',' << row.statistic << ','
          << detail::fmt(row.empirical) << ',' << detail::fmt(row.bound) << ','
          << detail::fmt(row.slack) << ',' << (row.pass ? "true" : "false") << '\n';
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
  auto out = detail::open_out(path);
  out << "t,regime";
  for (std::size_t i = 0; i < tr.values.front().size(); ++i) out << ",y" << (i + 1);
  out << '\n';
  for (std::size_t n = 0; n < tr.times.size(); ++n) {
    out << detail::fmt(tr.times[n]) << ',' << tr.regimes[n];
    for (double v : tr.values[n]) out << ',' << detail::fmt(v);
    out << '\n';
  }
}

inline void write_jumps_csv(const std::string& path, const ChainPath& chain) {
  auto out = detail::open_out(path);
  out << "time,to_state\n";
  for (const auto& j : chain.jumps) out << detail::fmt(j.time) << ',' << j.to_state << '\n';
}

/// Debug dump of the driving path: W at every merged grid point, by prefix
/// summation of the stored increments.
inline void write_noise_csv(const std::string& path, const DrivingNoise& noise) {
  auto out = detail::open_out(path);
  out << "time";
  for (int l = 1; l <= noise.dimension; ++l) out << ",w" << l;
  out << '\n';
  Vec w(std::size_t(noise.dimension), 0.0);
  for (std::size_t i = 0; i < noise.grid.points.size(); ++i) {
    if (i > 0)
      for (int l = 0; l < noise.dimension; ++l)
        w[std::size_t(l)] += noise.cell_increment(i - 1, l);
    out << detail::fmt(noise.grid.points[i]);
    for (double v : w) out << ',' << detail::fmt(v);
    out << '\n';
  }
}

inline void write_validation_csv(const std::string& path, const ValidationReport& r) {
  auto out = detail::open_out(path);
  out << "check,worst,bound,pass\n";
  for (const auto& c : r.checks)
    out << c.name << ',' << detail::fmt(c.worst) << ',' << detail::fmt(c.bound) << ','
        << (c.pass ? "true" : "false") << '\n';
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  if (cfg.problem) j["problem"] = *cfg.problem;
  if (cfg.generator) j["generator"] = *cfg.generator;
  if (cfg.horizon) j["horizon"] = *cfg.horizon;
  if (cfg.steps) j["steps"] = *cfg.steps;
  if (cfg.n_paths) j["n_paths"] = *cfg.n_paths;
  if (cfg.seed) j["seed"] = *cfg.seed;
  if (cfg.schemes) j["schemes"] = *cfg.schemes;
  if (cfg.reference) j["reference"] = *cfg.reference;
  if (cfg.h_ref) j["h_ref"] = *cfg.h_ref;
  if (cfg.out_dir) j["out_dir"] = *cfg.out_dir;
  if (cfg.n_intervals) j["n_intervals"] = *cfg.n_intervals;
  if (cfg.initial_state) j["initial_state"] = *cfg.initial_state;
  if (cfg.probes) j["probes"] = *cfg.probes;
  if (cfg.emit_plot_data) j["emit_plot_data"] = *cfg.emit_plot_data;
  return j;
}

/// Everything needed to reproduce a run byte-for-byte: the raw config, the
/// resolved plan values, the seed and the tool version. Deliberately free of
/// timestamps and host details.
inline void write_manifest(const std::string& path, const std::string& command,
                           const ExperimentConfig& cfg, const ExperimentPlan* plan) {
  nlohmann::ordered_json j;
  j["tool"] = "switchstein";
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  if (plan) {
    nlohmann::ordered_json jp;
    jp["problem"] = plan->problem.name;
    jp["horizon"] = plan->problem.horizon;
    jp["steps"] = plan->steps;
    jp["n_paths"] = plan->n_paths;
    jp["seed"] = plan->seed;
    jp["reference"] = reference_name(plan->reference);
    jp["h_ref"] = plan->h_ref;
    std::vector<std::string> schemes;
    for (auto s : plan->schemes) schemes.emplace_back(scheme_name(s));
    jp["schemes"] = schemes;
    jp["generator"] = plan->generator.rates.a;
    jp["max_rate"] = plan->generator.max_rate;
    j["resolved"] = jp;
  }
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace switchstein
