#include <doctest.h>

#include <cmath>
#include <vector>

#include "switchstein/convergence.hpp"
#include "test_util.hpp"

using namespace switchstein;

namespace {

ExperimentPlan p1_plan(std::vector<double> steps, std::size_t n_paths,
                       std::uint64_t seed = 42) {
  ExperimentPlan plan;
  plan.problem = make_p1_switching_gbm();
  plan.generator = plan.problem.default_generator;
  plan.steps = std::move(steps);
  plan.n_paths = n_paths;
  plan.seed = seed;
  plan.reference = ReferenceMode::closed_form;
  plan.schemes = {SchemeKind::milstein, SchemeKind::euler};
  plan.threads = 1;
  return plan;
}

}  // namespace

TEST_CASE("regression recovers exact slopes from collinear points") {
  // Synthetic errors rms = h: slope 1 with zero residual.
  const std::vector<double> h{0.0625, 0.03125, 0.015625, 0.0078125};
  std::vector<double> rms = h;
  SlopeFit fit = ols_loglog(h, rms);
  CHECK(fit.slope == 1.0);
  CHECK(fit.ci95_half_width == 0.0);

  // rms = sqrt(h): slope 1/2.
  for (std::size_t i = 0; i < h.size(); ++i) rms[i] = std::sqrt(h[i]);
  fit = ols_loglog(h, rms);
  CHECK(fit.slope == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(ols_fit({1.0}, {1.0}), error);
}

TEST_CASE("plan validation enforces nesting and the step-size policy") {
  SUBCASE("nested dyadic steps pass and h_ref defaults to the finest step") {
    ExperimentPlan plan = p1_plan({0.25, 0.125, 0.0625}, 10);
    const auto warnings = finalize_plan(plan);
    CHECK(warnings.empty());
    CHECK(plan.h_ref == 0.0625);
  }
  SUBCASE("fine-milstein reference defaults h_ref to h_K/64") {
    ExperimentPlan plan = p1_plan({0.25, 0.125}, 10);
    plan.reference = ReferenceMode::fine_milstein;
    finalize_plan(plan);
    CHECK(plan.h_ref == doctest::Approx(0.125 / 64.0));
  }
  SUBCASE("non-nested steps are rejected") {
    ExperimentPlan plan = p1_plan({0.25, 0.1}, 10);
    CHECK_THROWS_AS(finalize_plan(plan), error);
  }
  SUBCASE("steps at or above 1/q are rejected, between 1/(2q) and 1/q warned") {
    ExperimentPlan plan = p1_plan({1.0, 0.5, 0.25}, 10);  // q = 1
    try {
      finalize_plan(plan);
      FAIL("expected step_too_large");
    } catch (const error& e) {
      CHECK(e.kind() == errc::step_too_large);
    }
    ExperimentPlan warned = p1_plan({0.5, 0.25}, 10);
    const auto warnings = finalize_plan(warned);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("1/(2q)") != std::string::npos);
  }
  SUBCASE("closed-form reference requires a closed form") {
    ExperimentPlan plan = p1_plan({0.25}, 10);
    plan.problem = make_p2_noncommutative();
    plan.generator = plan.problem.default_generator;
    CHECK_THROWS_AS(finalize_plan(plan), error);
  }
  SUBCASE("fewer than two paths is invalid") {
    ExperimentPlan plan = p1_plan({0.25}, 1);
    CHECK_THROWS_AS(finalize_plan(plan), error);
  }
}

TEST_CASE("strong-error report has coherent structure on a small run") {
  ExperimentPlan plan = p1_plan({0.125, 0.0625, 0.03125}, 64);
  const ConvergenceReport r = run_strong_error(plan);
  CHECK(r.problem == "p1_switching_gbm");
  CHECK(r.levels.size() == 6);  // 2 schemes x 3 levels
  for (const auto& l : r.levels) {
    CHECK(l.mean_sup_sq >= 0.0);
    CHECK(l.rms == std::sqrt(l.mean_sup_sq));
    CHECK(l.std_err >= 0.0);
    CHECK(l.n_paths == 64);
  }
  // Errors shrink with h for both schemes on this seed.
  CHECK(r.level(SchemeKind::milstein, 0.03125).rms < r.level(SchemeKind::milstein, 0.125).rms);
  CHECK(r.level(SchemeKind::euler, 0.03125).rms < r.level(SchemeKind::euler, 0.125).rms);
  CHECK(r.slope(SchemeKind::milstein).n_points == 3);
}

TEST_CASE("coupling self-test: zero error when the scheme runs at the reference step") {
  ExperimentPlan plan = p1_plan({0.25, 0.125}, 32);
  plan.reference = ReferenceMode::fine_milstein;
  plan.h_ref = 0.125;  // h_K == h_ref
  plan.schemes = {SchemeKind::milstein};
  const ConvergenceReport r = run_strong_error(plan);
  CHECK(r.level(SchemeKind::milstein, 0.125).mean_sup_sq == 0.0);
  CHECK(r.level(SchemeKind::milstein, 0.25).mean_sup_sq > 0.0);
}

TEST_CASE("reports are bitwise identical across thread counts") {
  ExperimentPlan serial = p1_plan({0.125, 0.0625}, 48, 7);
  ExperimentPlan threaded = serial;
  threaded.threads = 3;
  const ConvergenceReport a = run_strong_error(serial);
  const ConvergenceReport b = run_strong_error(threaded);
  REQUIRE(a.levels.size() == b.levels.size());
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    CHECK(a.levels[i].mean_sup_sq == b.levels[i].mean_sup_sq);
    CHECK(a.levels[i].std_err == b.levels[i].std_err);
  }
  for (std::size_t i = 0; i < a.slopes.size(); ++i)
    CHECK(a.slopes[i].fit.slope == b.slopes[i].fit.slope);

  const MomentReport ma = run_moment_check(serial);
  const MomentReport mb = run_moment_check(threaded);
  CHECK(ma.y_moment_slope.slope == mb.y_moment_slope.slope);
  CHECK(ma.modulus_slope.slope == mb.modulus_slope.slope);
  CHECK(ma.ref_sup_sq_mean == mb.ref_sup_sq_mean);
}

TEST_CASE("chain statistics respect the analytic bounds") {
  Mat q(2, 2);
  q(0, 0) = -1.0; q(0, 1) = 1.0;
  q(1, 0) = 1.0;  q(1, 1) = -1.0;
  const GeneratorMatrix gen = validate_generator(q);

  SUBCASE("rate-1 chain at h = 0.1") {
    const ChainStatsReport r = run_chain_statistics(gen, 0.1, 20000, 5, 1);
    CHECK(r.rows.size() == 5);
    for (const auto& row : r.rows) {
      INFO(row.statistic, " empirical=", row.empirical, " bound=", row.bound);
      CHECK(row.pass);
    }
    CHECK(r.all_pass);
  }
  SUBCASE("absorbing chain has no jumps at all") {
    const GeneratorMatrix absorbing = validate_generator(Mat(1, 1, 0.0));
    const ChainStatsReport r = run_chain_statistics(absorbing, 0.1, 2000, 5, 1);
    for (const auto& row : r.rows) {
      CHECK(row.empirical == 0.0);
      CHECK(row.pass);
    }
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(run_chain_statistics(gen, 0.6, 2000, 5, 1), error);   // q h > 1/2
    CHECK_THROWS_AS(run_chain_statistics(gen, 0.1, 100, 5, 1), error);    // too few intervals
  }
  SUBCASE("integer aggregation is thread-count independent") {
    const ChainStatsReport a = run_chain_statistics(gen, 0.1, 20000, 5, 1);
    const ChainStatsReport b = run_chain_statistics(gen, 0.1, 20000, 5, 3);
    for (std::size_t i = 0; i < a.rows.size(); ++i)
      CHECK(a.rows[i].empirical == b.rows[i].empirical);
  }
}

TEST_CASE("moment check reports bounded scheme moments and a ~h modulus") {
  ExperimentPlan plan = p1_plan({0.125, 0.0625, 0.03125, 0.015625}, 200);
  plan.schemes = {SchemeKind::milstein};
  const MomentReport r = run_moment_check(plan);
  REQUIRE(r.levels.size() == 4);
  CHECK(r.ref_sup_sq_mean > 0.0);
  // sup |Y|^2 stays flat in h; the reference modulus scales like h.
  CHECK(std::abs(r.y_moment_slope.slope) < 0.3);
  CHECK(r.modulus_slope.slope > 0.7);
  CHECK(r.modulus_slope.slope < 1.3);
}

TEST_CASE("resolution check is a no-op for scalar noise") {
  // With m = 1 there is no Levy area, so halving the sub-sampling step only
  // reshuffles floating-point associations.
  ExperimentPlan plan = p1_plan({0.25, 0.125, 0.0625}, 64);
  plan.h_ref = 0.03125;
  plan.schemes = {SchemeKind::milstein};
  const ResolutionCheck check = run_resolution_check(plan);
  CHECK(check.h_ref_half == doctest::Approx(0.015625));
  CHECK(check.slope_change < 1e-6);
}
