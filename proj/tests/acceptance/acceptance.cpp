// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line. Run the whole binary or a single criterion via the doctest
// filter, e.g.  acceptance -tc='A2:*'
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "switchstein/switchstein.hpp"

namespace fs = std::filesystem;
using namespace switchstein;

namespace {

void verdict(const char* id, bool ok, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

std::vector<double> dyadic_steps(int from, int to) {
  std::vector<double> steps;
  for (int k = from; k <= to; ++k) steps.push_back(std::pow(2.0, -k));
  return steps;
}

ExperimentPlan base_plan(SdewmsProblem problem, std::vector<SchemeKind> schemes,
                         ReferenceMode ref, std::uint64_t seed = 42) {
  ExperimentPlan plan;
  plan.problem = std::move(problem);
  plan.generator = plan.problem.default_generator;
  plan.steps = dyadic_steps(4, 9);
  plan.n_paths = 2000;
  plan.seed = seed;
  plan.reference = ref;
  plan.schemes = std::move(schemes);
  plan.threads = 0;  // honor SWITCHSTEIN_THREADS
  return plan;
}

}  // namespace

TEST_CASE("A1: rate-1 strong convergence on the switching GBM") {
  ExperimentPlan plan = base_plan(make_p1_switching_gbm(), {SchemeKind::milstein},
                                  ReferenceMode::closed_form);
  const ConvergenceReport r = run_strong_error(plan);
  const double slope = r.slope(SchemeKind::milstein).slope;
  const bool ok = slope >= 0.85 && slope <= 1.15;
  verdict("A1", ok, fmt("milstein slope on p1 = %.4f, required in [0.85, 1.15]", slope));
  CHECK(ok);
}

TEST_CASE("A2: rate-1 with noncommutative noise and a stable Levy-area resolution") {
  ExperimentPlan plan = base_plan(make_p2_noncommutative(),
                                  {SchemeKind::milstein, SchemeKind::euler},
                                  ReferenceMode::fine_milstein);
  plan.h_ref = 0x1.0p-15;
  const ConvergenceReport r = run_strong_error(plan);
  const double slope = r.slope(SchemeKind::milstein).slope;
  const bool slope_ok = slope >= 0.85 && slope <= 1.15;
  verdict("A2a", slope_ok, fmt("milstein slope on p2 = %.4f, required in [0.85, 1.15]", slope));
  CHECK(slope_ok);

  // Milstein beats Euler at every step size here too.
  for (double h : plan.steps) {
    const LevelResult& ms = r.level(SchemeKind::milstein, h);
    const LevelResult& eu = r.level(SchemeKind::euler, h);
    const double pooled = std::sqrt(std::pow(ms.std_err / (2.0 * ms.rms), 2) +
                                    std::pow(eu.std_err / (2.0 * eu.rms), 2));
    CHECK(ms.rms <= eu.rms + 3.0 * pooled);
  }

  plan.schemes = {SchemeKind::milstein};
  const ResolutionCheck check = run_resolution_check(plan);
  const bool stable = check.slope_change < 0.03;
  verdict("A2b", stable,
          fmt("halving h_ref moves the slope by %.5f (%.4f -> %.4f), required < 0.03",
              check.slope_change, check.slope_at_h_ref.slope, check.slope_at_half.slope));
  CHECK(stable);
}

TEST_CASE("A3: Euler baseline converges with order 1/2 and never beats Milstein") {
  ExperimentPlan plan = base_plan(make_p1_switching_gbm(),
                                  {SchemeKind::milstein, SchemeKind::euler},
                                  ReferenceMode::closed_form);
  const ConvergenceReport r = run_strong_error(plan);
  const double slope = r.slope(SchemeKind::euler).slope;
  const bool slope_ok = slope >= 0.35 && slope <= 0.65;
  verdict("A3", slope_ok, fmt("euler slope on p1 = %.4f, required in [0.35, 0.65]", slope));
  CHECK(slope_ok);

  for (double h : plan.steps) {
    const LevelResult& ms = r.level(SchemeKind::milstein, h);
    const LevelResult& eu = r.level(SchemeKind::euler, h);
    const double se_rms_ms = ms.std_err / (2.0 * ms.rms);
    const double se_rms_eu = eu.std_err / (2.0 * eu.rms);
    const double pooled = std::sqrt(se_rms_ms * se_rms_ms + se_rms_eu * se_rms_eu);
    CHECK(ms.rms <= eu.rms + 3.0 * pooled);
  }
}

TEST_CASE("A4: ablating the switching correction costs at least 0.20 of order") {
  std::vector<double> full, ablated;
  for (std::uint64_t seed : {1, 2, 3}) {
    ExperimentPlan plan = base_plan(make_p4_additive(),
                                    {SchemeKind::milstein, SchemeKind::milstein_ablated},
                                    ReferenceMode::closed_form, seed);
    const ConvergenceReport r = run_strong_error(plan);
    full.push_back(r.slope(SchemeKind::milstein).slope);
    ablated.push_back(r.slope(SchemeKind::milstein_ablated).slope);
  }
  std::sort(full.begin(), full.end());
  std::sort(ablated.begin(), ablated.end());
  const double gap = full[1] - ablated[1];  // 3-seed medians
  const bool ok = gap >= 0.20;
  verdict("A4", ok,
          fmt("3-seed median slopes on p4: milstein %.4f vs ablated %.4f, gap %.4f >= 0.20",
              full[1], ablated[1], gap));
  CHECK(ok);
}

TEST_CASE("A5: jump-count tails and moments obey their bounds at one million intervals") {
  Mat q(2, 2);
  q(0, 0) = -1.0; q(0, 1) = 1.0;
  q(1, 0) = 1.0;  q(1, 1) = -1.0;
  const GeneratorMatrix gen = validate_generator(q);
  bool all_ok = true;
  std::string worst;
  for (double h : {0.1, 0.01}) {
    const ChainStatsReport r = run_chain_statistics(gen, h, 1000000, 42);
    for (const auto& row : r.rows) {
      if (!row.pass && worst.empty())
        worst = row.statistic + fmt(" at h=%.2f: %.5g > %.5g", h, row.empirical,
                                    row.bound + row.slack);
      all_ok = all_ok && row.pass;
    }
  }
  verdict("A5", all_ok,
          all_ok ? "tails P(N>=1..3), E N and E N^2 within bounds at h = 0.1 and 0.01"
                 : "violated: " + worst);
  CHECK(all_ok);
}

TEST_CASE("A6: scheme moments stay bounded and the path modulus scales like h") {
  ExperimentPlan plan = base_plan(make_p1_switching_gbm(), {SchemeKind::milstein},
                                  ReferenceMode::closed_form);
  const MomentReport r = run_moment_check(plan);
  const bool flat_ok = std::abs(r.y_moment_slope.slope) <= 0.15;
  verdict("A6a", flat_ok,
          fmt("log-log slope of E sup|Y|^2 = %.4f, required in [-0.15, 0.15]",
              r.y_moment_slope.slope));
  CHECK(flat_ok);
  const bool mod_ok = r.modulus_slope.slope >= 0.85 && r.modulus_slope.slope <= 1.15;
  verdict("A6b", mod_ok,
          fmt("modulus slope E sup |X(t)-X(s)|^2 ~ h^%.4f, required in [0.85, 1.15]",
              r.modulus_slope.slope));
  CHECK(mod_ok);
}

TEST_CASE("A7: exactness and identity suite") {
  // (a, b) Iterated-integral identities on sampled tables.
  SdewmsProblem p2 = make_p2_noncommutative();
  double worst_diag = 0.0, worst_pair = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    RandomStream cs(77, i, StreamPurpose::chain);
    const ChainPath chain = sample_chain_path(p2.default_generator, 1, 1.0, cs);
    const TimeGrid grid = build_merged_grid(1.0, 0x1.0p-9, chain);
    RandomStream ns(77, i, StreamPurpose::noise);
    const DrivingNoise noise = sample_noise(grid, 2, ns);
    const CoarseNoise cn = coarsen(noise, 0x1.0p-4);
    for (std::size_t k = 0; k < cn.n_cells; ++k) {
      const double* dw = cn.cell_dW(k);
      for (int l = 0; l < 2; ++l)
        worst_diag = std::max(worst_diag,
                              std::abs(cn.iterated[k](std::size_t(l), std::size_t(l)) -
                                       0.5 * (dw[l] * dw[l] - cn.h)));
      worst_pair = std::max(worst_pair,
                            std::abs(cn.iterated[k](0, 1) + cn.iterated[k](1, 0) -
                                     dw[0] * dw[1]));
    }
  }
  const bool diag_ok = worst_diag <= 1e-12;
  verdict("A7a", diag_ok, fmt("diagonal identity |I_ll - (dW^2-h)/2| worst = %.3g <= 1e-12",
                              worst_diag));
  CHECK(diag_ok);
  const bool pair_ok = worst_pair <= 1e-12;
  verdict("A7b", pair_ok,
          fmt("pairwise identity |I_12 + I_21 - dW_1 dW_2| worst = %.3g <= 1e-12", worst_pair));
  CHECK(pair_ok);

  // (c) Zero diffusion: milstein == deterministic euler, bitwise.
  SdewmsProblem flat = make_p3_single_regime();
  flat.diffusion_column = [](const Vec&, int, int, Vec& out) { out.assign(1, 0.0); };
  flat.diffusion_jacobian = [](const Vec&, int, int, Mat& out) { out = Mat(1, 1, 0.0); };
  ChainPath still;
  still.initial_state = 1;
  still.horizon = 1.0;
  const TimeGrid grid = build_merged_grid(1.0, 0x1.0p-7, still);
  RandomStream ns(3, 0, StreamPurpose::noise);
  const DrivingNoise noise = sample_noise(grid, 1, ns);
  const Trajectory ms = simulate_trajectory(flat, SchemeKind::milstein, 0x1.0p-7, still, noise);
  const Trajectory eu = simulate_trajectory(flat, SchemeKind::euler, 0x1.0p-7, still, noise);
  bool bitwise = true;
  double hand = 1.0;
  for (std::size_t n = 0; n < ms.values.size(); ++n) {
    bitwise = bitwise && (ms.values[n][0] == eu.values[n][0]);
    bitwise = bitwise && (ms.values[n][0] == hand);
    hand = hand + (0.5 * hand) * 0x1.0p-7;
  }
  verdict("A7c", bitwise, "zero-diffusion milstein == deterministic euler, bitwise");
  CHECK(bitwise);

  // (d) Coupling self-test: zero error when the measured step is the
  // reference step.
  ExperimentPlan plan = base_plan(make_p1_switching_gbm(), {SchemeKind::milstein},
                                  ReferenceMode::fine_milstein);
  plan.steps = dyadic_steps(4, 6);
  plan.h_ref = 0x1.0p-6;
  plan.n_paths = 500;
  const ConvergenceReport r = run_strong_error(plan);
  const double err_at_ref = r.level(SchemeKind::milstein, 0x1.0p-6).mean_sup_sq;
  const bool coupled = err_at_ref == 0.0;
  verdict("A7d", coupled, fmt("error at h = h_ref is exactly %.1g", err_at_ref));
  CHECK(coupled);
}

// ---------------------------------------------------------------------------
// A8 drives the installed CLI binary.
// ---------------------------------------------------------------------------

namespace {

int run_cli(const std::string& args, unsigned threads, const fs::path& workdir) {
  std::ostringstream cmd;
  cmd << "cd '" << workdir.string() << "' && SWITCHSTEIN_THREADS=" << threads << " '"
      << SWITCHSTEIN_CLI_PATH << "' " << args << " > cli_stdout.txt 2> cli_stderr.txt";
  const int rc = std::system(cmd.str().c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file ", p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Strip the wall-clock fields (the only legitimately nondeterministic bytes)
/// from a report: the wall_ms CSV column and any *wall_ms JSON line.
std::string mask_timings(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("wall_ms") != std::string::npos) {
      if (line.find(',') != std::string::npos && line.find(':') == std::string::npos) {
        out << line << '\n';  // CSV header row, keep as-is
      }
      continue;  // JSON timing line
    }
    const auto last_comma = line.rfind(',');
    if (last_comma != std::string::npos && line.find(':') == std::string::npos &&
        (line.rfind("milstein,", 0) == 0 || line.rfind("euler,", 0) == 0 ||
         line.rfind("milstein-ablated,", 0) == 0)) {
      out << line.substr(0, last_comma) << '\n';  // CSV data row: drop wall_ms
      continue;
    }
    out << line << '\n';
  }
  return out.str();
}

bool compare_run_dirs(const fs::path& a, const fs::path& b, std::string& mismatch) {
  std::vector<fs::path> rel;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  std::sort(rel.begin(), rel.end());
  for (const auto& r : rel) {
    if (!fs::exists(b / r)) {
      mismatch = "missing " + r.string();
      return false;
    }
    const std::string fa = mask_timings(slurp(a / r));
    const std::string fb = mask_timings(slurp(b / r));
    if (fa != fb) {
      mismatch = r.string();
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("A8: byte-identical reports for any seed-fixed rerun and thread count") {
  const fs::path base = fs::temp_directory_path() / "switchstein_acceptance_a8";
  fs::remove_all(base);
  fs::create_directories(base);

  std::ofstream cfg(base / "exp.cfg");
  cfg << "problem = p1_switching_gbm\n"
      << "steps = 0.0625 0.03125 0.015625\n"
      << "n_paths = 300\n"
      << "seed = 42\n"
      << "schemes = milstein euler\n";
  cfg.close();
  std::ofstream scfg(base / "stats.cfg");
  scfg << "problem = p1_switching_gbm\nsteps = 0.1\nn_intervals = 100000\nseed = 7\n";
  scfg.close();
  std::ofstream mcfg(base / "sim.cfg");
  mcfg << "problem = p4_additive\nsteps = 0.0625\nseed = 9\nh_ref = 0.015625\n";
  mcfg.close();

  bool all_ok = true;
  std::string detail = "CSV/JSON/dat outputs identical across reruns and threads 1 vs 2";
  const std::vector<std::pair<std::string, unsigned>> runs = {
      {"run1", 1}, {"run2", 1}, {"run4", 2}};
  for (const auto& [name, threads] : runs) {
    const fs::path dir = base / name;
    fs::create_directories(dir);
    int rc = run_cli("converge --config ../exp.cfg --out cout", threads, dir);
    all_ok = all_ok && rc == 0;
    rc = run_cli("chain-stats --config ../stats.cfg --out cout", threads, dir);
    all_ok = all_ok && rc == 0;
    rc = run_cli("simulate --config ../sim.cfg --out cout --dump-path", threads, dir);
    all_ok = all_ok && rc == 0;
    if (!all_ok) {
      detail = "CLI run failed in " + name;
      break;
    }
  }
  if (all_ok) {
    std::string mismatch;
    if (!compare_run_dirs(base / "run1" / "cout", base / "run2" / "cout", mismatch)) {
      all_ok = false;
      detail = "rerun with same seed differs: " + mismatch;
    } else if (!compare_run_dirs(base / "run1" / "cout", base / "run4" / "cout", mismatch)) {
      all_ok = false;
      detail = "thread count changed the results: " + mismatch;
    }
  }
  verdict("A8", all_ok, detail);
  CHECK(all_ok);
  if (all_ok) fs::remove_all(base);
}

TEST_CASE("A9: first-order Taylor remainders are quadratic for every catalog coefficient") {
  bool all_ok = true;
  std::string detail;
  for (const auto& p : builtin_catalog()) {
    RandomStream stream(2024, 0, StreamPurpose::probe);
    double worst_ratio = 0.0;
    Vec bx, by, sx, sy, tmp;
    Mat jac;
    for (int pair = 0; pair < 10000; ++pair) {
      Vec x(std::size_t(p.dim_x)), y(std::size_t(p.dim_x));
      for (auto& v : x) v = (2.0 * stream.uniform() - 1.0) * 10.0;
      for (auto& v : y) v = (2.0 * stream.uniform() - 1.0) * 10.0;
      double dist_sq = 0.0;
      for (int i = 0; i < p.dim_x; ++i)
        dist_sq += (x[std::size_t(i)] - y[std::size_t(i)]) * (x[std::size_t(i)] - y[std::size_t(i)]);
      if (dist_sq == 0.0) continue;
      Vec delta(std::size_t(p.dim_x));
      for (int i = 0; i < p.dim_x; ++i) delta[std::size_t(i)] = x[std::size_t(i)] - y[std::size_t(i)];

      for (int i0 = 1; i0 <= p.regimes; ++i0) {
        p.drift(x, i0, bx);
        p.drift(y, i0, by);
        p.drift_jacobian(y, i0, jac);
        mat_vec(jac, delta, tmp);
        double rem = 0.0, scale = 0.0;
        for (int i = 0; i < p.dim_x; ++i) {
          const double e = bx[std::size_t(i)] - by[std::size_t(i)] - tmp[std::size_t(i)];
          rem += e * e;
          scale = std::max(scale, std::abs(bx[std::size_t(i)]));
        }
        worst_ratio = std::max(worst_ratio,
                               (std::sqrt(rem) - 1e-12 * (1.0 + scale)) / dist_sq);
        for (int l = 0; l < p.dim_w; ++l) {
          p.diffusion_column(x, i0, l, sx);
          p.diffusion_column(y, i0, l, sy);
          p.diffusion_jacobian(y, i0, l, jac);
          mat_vec(jac, delta, tmp);
          rem = 0.0;
          scale = 0.0;
          for (int i = 0; i < p.dim_x; ++i) {
            const double e = sx[std::size_t(i)] - sy[std::size_t(i)] - tmp[std::size_t(i)];
            rem += e * e;
            scale = std::max(scale, std::abs(sx[std::size_t(i)]));
          }
          worst_ratio = std::max(worst_ratio,
                                 (std::sqrt(rem) - 1e-12 * (1.0 + scale)) / dist_sq);
        }
      }
    }
    const bool ok = worst_ratio <= p.lipschitz;
    if (!ok && detail.empty())
      detail = p.name + fmt(": remainder ratio %.3g exceeds C = %.2f", worst_ratio, p.lipschitz);
    all_ok = all_ok && ok;
  }
  verdict("A9", all_ok,
          all_ok ? "|f(x) - f(y) - Df(y)(x-y)| <= C |x-y|^2 on 10^4 pairs for all catalog "
                   "coefficients"
                 : detail);
  CHECK(all_ok);
}
