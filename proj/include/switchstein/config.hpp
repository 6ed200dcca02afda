#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/convergence.hpp"
#include "switchstein/model.hpp"
#include "switchstein/scheme.hpp"

namespace switchstein {

/// Parsed experiment configuration: a flat key = value file, '#' comments,
/// whitespace-separated multi-token values. Every key is optional here;
/// each command checks for what it actually needs when the plan is built.
struct ExperimentConfig {
  std::optional<std::string> problem;
  std::optional<std::vector<double>> generator;  // row-major, square
  std::optional<double> horizon;
  std::optional<std::vector<double>> steps;
  std::optional<std::size_t> n_paths;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> schemes;
  std::optional<std::string> reference;
  std::optional<double> h_ref;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> n_intervals;   // chain-stats sample count
  std::optional<int> initial_state;         // chain-stats starting state
  std::optional<int> probes;                // validate-model probe count
  std::optional<bool> emit_plot_data;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string t;
  while (iss >> t) out.push_back(t);
  return out;
}

inline double parse_real(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw error(errc::bad_config, "key '" + key + "': cannot parse real '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw error(errc::bad_config, "key '" + key + "': cannot parse integer '" + s + "'");
  }
}

inline std::vector<double> parse_reals(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& t : tokens(s)) out.push_back(parse_real(t, key));
  if (out.empty()) throw error(errc::bad_config, "key '" + key + "' has no values");
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw error(errc::bad_config,
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty())
      throw error(errc::bad_config, "key '" + key + "' has an empty value");

    if (key == "problem") {
      cfg.problem = value;
    } else if (key == "generator") {
      cfg.generator = detail::parse_reals(value, key);
    } else if (key == "horizon") {
      cfg.horizon = detail::parse_real(value, key);
    } else if (key == "steps") {
      cfg.steps = detail::parse_reals(value, key);
    } else if (key == "n_paths") {
      cfg.n_paths = std::size_t(detail::parse_int(value, key));
    } else if (key == "seed") {
      cfg.seed = std::uint64_t(detail::parse_int(value, key));
    } else if (key == "schemes") {
      cfg.schemes = detail::tokens(value);
    } else if (key == "reference") {
      cfg.reference = value;
    } else if (key == "h_ref") {
      cfg.h_ref = detail::parse_real(value, key);
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "n_intervals") {
      cfg.n_intervals = std::size_t(detail::parse_int(value, key));
    } else if (key == "initial_state") {
      cfg.initial_state = int(detail::parse_int(value, key));
    } else if (key == "probes") {
      cfg.probes = int(detail::parse_int(value, key));
    } else if (key == "emit_plot_data") {
      if (value == "true" || value == "1")
        cfg.emit_plot_data = true;
      else if (value == "false" || value == "0")
        cfg.emit_plot_data = false;
      else
        throw error(errc::bad_config, "key 'emit_plot_data' must be true or false");
    } else {
      throw error(errc::bad_config, "unknown key '" + key + "'");
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::bad_config, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Resolve a config into a runnable plan. Catalog defaults fill anything the
/// file leaves out: six dyadic steps T/2^4 .. T/2^9, 2000 paths, seed 42,
/// milstein only, closed-form reference when the problem has one.
inline ExperimentPlan build_plan(const ExperimentConfig& cfg) {
  if (!cfg.problem) throw error(errc::bad_config, "missing required key 'problem'");
  ExperimentPlan plan;
  plan.problem = find_problem(*cfg.problem);
  if (cfg.horizon) {
    if (!(*cfg.horizon > 0.0)) throw error(errc::bad_config, "horizon must be positive");
    plan.problem.horizon = *cfg.horizon;
  }

  if (cfg.generator) {
    const std::size_t n = cfg.generator->size();
    const auto m0 = std::size_t(std::llround(std::sqrt(double(n))));
    if (m0 * m0 != n)
      throw error(errc::bad_config, "key 'generator': need a square row-major matrix");
    if (int(m0) != plan.problem.regimes)
      throw error(errc::bad_config,
                  "key 'generator': problem '" + plan.problem.name + "' has " +
                      std::to_string(plan.problem.regimes) + " regimes, matrix is " +
                      std::to_string(m0) + "x" + std::to_string(m0));
    Mat q(m0, m0);
    q.a = *cfg.generator;
    plan.generator = validate_generator(q);
  } else {
    plan.generator = plan.problem.default_generator;
  }

  const double T = plan.problem.horizon;
  if (cfg.steps) {
    plan.steps = *cfg.steps;
  } else {
    for (int k = 4; k <= 9; ++k) plan.steps.push_back(T * std::pow(2.0, -k));
  }
  plan.n_paths = cfg.n_paths.value_or(2000);
  plan.seed = cfg.seed.value_or(42);

  if (cfg.schemes) {
    for (const auto& s : *cfg.schemes) plan.schemes.push_back(scheme_from_name(s));
  } else {
    plan.schemes.push_back(SchemeKind::milstein);
  }

  if (cfg.reference) {
    if (*cfg.reference == "closed_form")
      plan.reference = ReferenceMode::closed_form;
    else if (*cfg.reference == "fine_milstein")
      plan.reference = ReferenceMode::fine_milstein;
    else
      throw error(errc::bad_config,
                  "key 'reference' must be closed_form or fine_milstein, got '" +
                      *cfg.reference + "'");
  } else {
    plan.reference = plan.problem.closed_form ? ReferenceMode::closed_form
                                              : ReferenceMode::fine_milstein;
  }
  plan.h_ref = cfg.h_ref.value_or(0.0);
  plan.threads = 0;  // finalize_plan reads SWITCHSTEIN_THREADS
  return plan;
}

}  // namespace switchstein
