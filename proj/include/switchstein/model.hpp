#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/noise.hpp"
#include "switchstein/rng.hpp"

namespace switchstein {

/// Regime of the chain on each open cell (points[i], points[i+1]) of a merged
/// grid. Jumps that were deduplicated onto a node take effect at that node,
/// matching the grid's own tagging.
inline std::vector<int> cell_regimes(const ChainPath& chain, const TimeGrid& grid) {
  std::vector<int> out(grid.cells());
  const double tol = 1e-14 * grid.horizon;
  std::size_t ptr = 0;
  int regime = chain.initial_state;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    while (ptr < chain.jumps.size() && chain.jumps[ptr].time <= grid.points[i] + tol)
      regime = chain.jumps[ptr++].to_state;
    out[i] = regime;
  }
  return out;
}

/// Chain state at each of the given node times, same dedup convention.
inline std::vector<int> regimes_at(const ChainPath& chain, const std::vector<double>& times,
                                   double horizon) {
  std::vector<int> out(times.size());
  const double tol = 1e-14 * horizon;
  std::size_t ptr = 0;
  int regime = chain.initial_state;
  for (std::size_t i = 0; i < times.size(); ++i) {
    while (ptr < chain.jumps.size() && chain.jumps[ptr].time <= times[i] + tol)
      regime = chain.jumps[ptr++].to_state;
    out[i] = regime;
  }
  return out;
}

/// Exact solution conditional on the realized chain and driving path,
/// evaluated on every merged grid point.
struct ClosedFormSolution {
  std::function<std::vector<Vec>(const ChainPath&, const DrivingNoise&)> path_fn;

  std::vector<Vec> evaluate_path(const ChainPath& chain, const DrivingNoise& noise) const {
    return path_fn(chain, noise);
  }
  Vec evaluate(const ChainPath& chain, const DrivingNoise& noise, double t) const {
    return path_fn(chain, noise)[noise.grid.index_of(t)];
  }
};

/// A switching-diffusion problem: coefficients per regime, their Jacobians,
/// the declared Lipschitz constant used by the assumption probes, and an
/// optional exact solution. Coefficient callbacks write into caller-owned
/// buffers and must be re-entrant.
struct SdewmsProblem {
  std::string name;
  int dim_x = 1;
  int dim_w = 1;
  int regimes = 1;
  double horizon = 1.0;
  double lipschitz = 1.0;
  Vec x0;
  int initial_regime = 1;
  GeneratorMatrix default_generator;

  std::function<void(const Vec&, int, Vec&)> drift;                 // b(x, i0)
  std::function<void(const Vec&, int, int, Vec&)> diffusion_column; // sigma_(l)(x, i0)
  std::function<void(const Vec&, int, int, Mat&)> diffusion_jacobian;
  std::function<void(const Vec&, int, Mat&)> drift_jacobian;        // may be empty
  std::function<Vec(RandomStream&)> initial_law;                    // defaults to x0
  std::optional<ClosedFormSolution> closed_form;

  Vec draw_initial(RandomStream& stream) const {
    if (initial_law) return initial_law(stream);
    return x0;
  }
};

// ---------------------------------------------------------------------------
// Assumption probes
// ---------------------------------------------------------------------------

struct ValidationCheck {
  std::string name;
  double worst = 0.0;
  double bound = 0.0;
  bool pass = true;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool all_pass = true;

  // Tight constants (L exactly attained) must not flip on rounding noise.
  void add(std::string name, double worst, double bound) {
    const bool ok = worst <= bound * (1.0 + 1e-9);
    checks.push_back({std::move(name), worst, bound, ok});
    all_pass = all_pass && ok;
  }

  const ValidationCheck& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw error(errc::bad_config, "no such check '" + name + "'");
  }
};

inline constexpr double kProbeBoxHalfWidth = 10.0;

namespace detail {

inline Vec probe_point(int d, RandomStream& stream) {
  Vec x(static_cast<std::size_t>(d));
  for (auto& v : x) v = (2.0 * stream.uniform() - 1.0) * kProbeBoxHalfWidth;
  return x;
}

inline double vec_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double mat_dist(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.a.size(); ++i) s += (a.a[i] - b.a[i]) * (a.a[i] - b.a[i]);
  return std::sqrt(s);
}

}  // namespace detail

/// Probe-based report on the regularity assumptions: Lipschitz continuity of
/// the coefficients and their Jacobians, Lipschitz continuity of the products
/// Dsigma_(l) * sigma_(l1), linear growth, first-order Taylor remainders, and
/// agreement of the declared Jacobians with central finite differences.
/// Report-only: violations are flagged, never thrown.
inline ValidationReport validate_problem(const SdewmsProblem& p, int probes,
                                         RandomStream& stream) {
  if (probes < 1) probes = 1;
  const int d = p.dim_x;
  const int m = p.dim_w;
  const double L = p.lipschitz;

  double h2_b = 0.0, h2_s = 0.0, h3_db = 0.0, h3_ds = 0.0, h3_prod = 0.0;
  double growth = 0.0, rem_b = 0.0, rem_s = 0.0, fd_s = 0.0, fd_b = 0.0;
  double fd_tol = 0.0;

  Vec bx, by, sx, sy, slx, sly, tmp, prod_x, prod_y;
  Mat jx, jy, jbx, jby;

  for (int k = 0; k < probes; ++k) {
    const Vec x = detail::probe_point(d, stream);
    const Vec y = detail::probe_point(d, stream);
    const double dist = detail::vec_dist(x, y);
    if (dist == 0.0) continue;

    for (int i0 = 1; i0 <= p.regimes; ++i0) {
      p.drift(x, i0, bx);
      p.drift(y, i0, by);
      h2_b = std::max(h2_b, detail::vec_dist(bx, by) / dist);

      double sdiff = 0.0, snorm = 0.0;
      for (int l = 0; l < m; ++l) {
        p.diffusion_column(x, i0, l, sx);
        p.diffusion_column(y, i0, l, sy);
        double dcol = detail::vec_dist(sx, sy);
        sdiff += dcol * dcol;
        snorm += sq_norm2(sx);
      }
      h2_s = std::max(h2_s, std::sqrt(sdiff) / dist);
      growth = std::max(growth, std::max(norm2(bx), std::sqrt(snorm)) / (1.0 + norm2(x)));

      if (p.drift_jacobian) {
        p.drift_jacobian(x, i0, jbx);
        p.drift_jacobian(y, i0, jby);
        h3_db = std::max(h3_db, detail::mat_dist(jbx, jby) / dist);
        // Taylor remainder of b around y.
        Vec delta(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) delta[std::size_t(i)] = x[std::size_t(i)] - y[std::size_t(i)];
        mat_vec(jby, delta, tmp);
        double r = 0.0;
        for (int i = 0; i < d; ++i) {
          const double e = bx[std::size_t(i)] - by[std::size_t(i)] - tmp[std::size_t(i)];
          r += e * e;
        }
        rem_b = std::max(rem_b, std::sqrt(r) / (dist * dist));
      }

      for (int l = 0; l < m; ++l) {
        p.diffusion_jacobian(x, i0, l, jx);
        p.diffusion_jacobian(y, i0, l, jy);
        h3_ds = std::max(h3_ds, detail::mat_dist(jx, jy) / dist);

        // Remainder of sigma_(l) around y.
        p.diffusion_column(x, i0, l, sx);
        p.diffusion_column(y, i0, l, sy);
        Vec delta(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) delta[std::size_t(i)] = x[std::size_t(i)] - y[std::size_t(i)];
        mat_vec(jy, delta, tmp);
        double r = 0.0;
        for (int i = 0; i < d; ++i) {
          const double e = sx[std::size_t(i)] - sy[std::size_t(i)] - tmp[std::size_t(i)];
          r += e * e;
        }
        rem_s = std::max(rem_s, std::sqrt(r) / (dist * dist));

        for (int l1 = 0; l1 < m; ++l1) {
          p.diffusion_column(x, i0, l1, slx);
          p.diffusion_column(y, i0, l1, sly);
          mat_vec(jx, slx, prod_x);
          mat_vec(jy, sly, prod_y);
          h3_prod = std::max(h3_prod, detail::vec_dist(prod_x, prod_y) / dist);
        }
      }

      // Jacobians vs central finite differences at x.
      const double tol_here = std::max(1e-6, 1e-6 * norm2(x));
      fd_tol = std::max(fd_tol, tol_here);
      for (int j = 0; j < d; ++j) {
        Vec xp = x, xm = x;
        const double eps = 1e-6 * std::max(1.0, std::abs(x[std::size_t(j)]));
        xp[std::size_t(j)] += eps;
        xm[std::size_t(j)] -= eps;
        for (int l = 0; l < m; ++l) {
          p.diffusion_column(xp, i0, l, sx);
          p.diffusion_column(xm, i0, l, sy);
          p.diffusion_jacobian(x, i0, l, jx);
          for (int i = 0; i < d; ++i) {
            const double fd = (sx[std::size_t(i)] - sy[std::size_t(i)]) / (2.0 * eps);
            fd_s = std::max(fd_s, std::abs(fd - jx(std::size_t(i), std::size_t(j))));
          }
        }
        if (p.drift_jacobian) {
          p.drift(xp, i0, bx);
          p.drift(xm, i0, by);
          p.drift_jacobian(x, i0, jbx);
          for (int i = 0; i < d; ++i) {
            const double fd = (bx[std::size_t(i)] - by[std::size_t(i)]) / (2.0 * eps);
            fd_b = std::max(fd_b, std::abs(fd - jbx(std::size_t(i), std::size_t(j))));
          }
        }
      }
    }
  }

  ValidationReport report;
  report.add("h2_drift_lipschitz", h2_b, L);
  report.add("h2_diffusion_lipschitz", h2_s, L);
  if (p.drift_jacobian) report.add("h3_drift_jacobian_lipschitz", h3_db, L);
  report.add("h3_diffusion_jacobian_lipschitz", h3_ds, L);
  report.add("h3_product_lipschitz", h3_prod, L);
  report.add("linear_growth", growth, L);
  if (p.drift_jacobian) report.add("taylor_remainder_drift", rem_b, L);
  report.add("taylor_remainder_diffusion", rem_s, L);
  report.add("jacobian_fd_diffusion", fd_s, fd_tol);
  if (p.drift_jacobian) report.add("jacobian_fd_drift", fd_b, fd_tol);
  return report;
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

namespace detail {

/// Piecewise-GBM exact solution: over each merged cell the regime is frozen,
/// so X multiplies by exp((a - s^2/2) dt + s dW) segment by segment.
inline ClosedFormSolution gbm_closed_form(std::vector<double> a, std::vector<double> s,
                                          double x0) {
  ClosedFormSolution cf;
  cf.path_fn = [a = std::move(a), s = std::move(s), x0](const ChainPath& chain,
                                                        const DrivingNoise& noise) {
    const TimeGrid& g = noise.grid;
    const std::vector<int> regimes = cell_regimes(chain, g);
    std::vector<Vec> out(g.points.size());
    double x = x0;
    out[0] = Vec{x};
    for (std::size_t c = 0; c < g.cells(); ++c) {
      const double dt = g.points[c + 1] - g.points[c];
      const double ai = a[std::size_t(regimes[c] - 1)];
      const double si = s[std::size_t(regimes[c] - 1)];
      x *= std::exp((ai - 0.5 * si * si) * dt + si * noise.cell_increment(c, 0));
      out[c + 1] = Vec{x};
    }
    return out;
  };
  return cf;
}

/// Fully additive exact solution: X accumulates a dt + c dW per cell.
inline ClosedFormSolution additive_closed_form(std::vector<double> a, std::vector<double> c,
                                               double x0) {
  ClosedFormSolution cf;
  cf.path_fn = [a = std::move(a), c = std::move(c), x0](const ChainPath& chain,
                                                        const DrivingNoise& noise) {
    const TimeGrid& g = noise.grid;
    const std::vector<int> regimes = cell_regimes(chain, g);
    std::vector<Vec> out(g.points.size());
    double x = x0;
    out[0] = Vec{x};
    for (std::size_t k = 0; k < g.cells(); ++k) {
      const double dt = g.points[k + 1] - g.points[k];
      const int r = regimes[k] - 1;
      x += a[std::size_t(r)] * dt + c[std::size_t(r)] * noise.cell_increment(k, 0);
      out[k + 1] = Vec{x};
    }
    return out;
  };
  return cf;
}

inline GeneratorMatrix symmetric_two_state_generator() {
  Mat q(2, 2);
  q(0, 0) = -1.0; q(0, 1) = 1.0;
  q(1, 0) = 1.0;  q(1, 1) = -1.0;
  return validate_generator(q);
}

}  // namespace detail

/// 1D geometric Brownian motion whose drift/volatility switch with the chain.
inline SdewmsProblem make_p1_switching_gbm() {
  const std::vector<double> a{0.5, -0.5};
  const std::vector<double> s{0.4, 0.8};
  SdewmsProblem p;
  p.name = "p1_switching_gbm";
  p.dim_x = p.dim_w = 1;
  p.regimes = 2;
  p.horizon = 1.0;
  p.lipschitz = 0.8;
  p.x0 = Vec{1.0};
  p.default_generator = detail::symmetric_two_state_generator();
  p.drift = [a](const Vec& x, int i0, Vec& out) { out.assign(1, a[std::size_t(i0 - 1)] * x[0]); };
  p.diffusion_column = [s](const Vec& x, int i0, int, Vec& out) {
    out.assign(1, s[std::size_t(i0 - 1)] * x[0]);
  };
  p.diffusion_jacobian = [s](const Vec&, int i0, int, Mat& out) {
    out = Mat(1, 1, s[std::size_t(i0 - 1)]);
  };
  p.drift_jacobian = [a](const Vec&, int i0, Mat& out) { out = Mat(1, 1, a[std::size_t(i0 - 1)]); };
  p.closed_form = detail::gbm_closed_form(a, s, p.x0[0]);
  return p;
}

/// 2D linear model with genuinely noncommutative noise: the Jacobian-column
/// products differ by orientation, so the off-diagonal iterated integrals
/// carry real information (Levy area).
inline SdewmsProblem make_p2_noncommutative() {
  // Per regime: drift matrix A, diffusion column generators G1, G2.
  const std::vector<Mat> A = [] {
    Mat a1(2, 2), a2(2, 2);
    a1(0, 0) = 0.25;  a1(0, 1) = 0.0;  a1(1, 0) = 0.0;  a1(1, 1) = -0.25;
    a2(0, 0) = -0.25; a2(0, 1) = 0.1;  a2(1, 0) = 0.1;  a2(1, 1) = 0.25;
    return std::vector<Mat>{a1, a2};
  }();
  const std::vector<std::vector<Mat>> G = [] {
    Mat g11(2, 2), g21(2, 2), g12(2, 2), g22(2, 2);
    g11(0, 0) = 0.4;  g11(1, 1) = 0.1;                      // regime 1, column 1
    g21(0, 1) = 0.35; g21(1, 0) = 0.35;                     // regime 1, column 2
    g12(0, 0) = 0.15; g12(1, 1) = 0.45;                     // regime 2, column 1
    g22(0, 1) = -0.3; g22(1, 0) = 0.3;                      // regime 2, column 2
    return std::vector<std::vector<Mat>>{{g11, g21}, {g12, g22}};
  }();

  SdewmsProblem p;
  p.name = "p2_noncommutative";
  p.dim_x = p.dim_w = 2;
  p.regimes = 2;
  p.horizon = 1.0;
  p.lipschitz = 0.6;
  p.x0 = Vec{1.0, 1.0};
  p.default_generator = detail::symmetric_two_state_generator();
  p.drift = [A](const Vec& x, int i0, Vec& out) { mat_vec(A[std::size_t(i0 - 1)], x, out); };
  p.diffusion_column = [G](const Vec& x, int i0, int l, Vec& out) {
    mat_vec(G[std::size_t(i0 - 1)][std::size_t(l)], x, out);
  };
  p.diffusion_jacobian = [G](const Vec&, int i0, int l, Mat& out) {
    out = G[std::size_t(i0 - 1)][std::size_t(l)];
  };
  p.drift_jacobian = [A](const Vec&, int i0, Mat& out) { out = A[std::size_t(i0 - 1)]; };
  return p;
}

/// Degenerate single-regime case: classical GBM with the classical formula.
inline SdewmsProblem make_p3_single_regime() {
  const std::vector<double> a{0.5};
  const std::vector<double> s{0.4};
  SdewmsProblem p;
  p.name = "p3_single_regime";
  p.dim_x = p.dim_w = 1;
  p.regimes = 1;
  p.horizon = 1.0;
  p.lipschitz = 0.5;
  p.x0 = Vec{1.0};
  p.default_generator = validate_generator(Mat(1, 1, 0.0));
  p.drift = [a](const Vec& x, int, Vec& out) { out.assign(1, a[0] * x[0]); };
  p.diffusion_column = [s](const Vec& x, int, int, Vec& out) { out.assign(1, s[0] * x[0]); };
  p.diffusion_jacobian = [s](const Vec&, int, int, Mat& out) { out = Mat(1, 1, s[0]); };
  p.drift_jacobian = [a](const Vec&, int, Mat& out) { out = Mat(1, 1, a[0]); };
  p.closed_form = detail::gbm_closed_form(a, s, p.x0[0]);
  return p;
}

/// Additive noise with regime-dependent level: Dsigma vanishes, so the only
/// first-order correction left is the switching term.
inline SdewmsProblem make_p4_additive() {
  const std::vector<double> a{0.5, -0.5};
  const std::vector<double> c{0.3, 1.2};
  SdewmsProblem p;
  p.name = "p4_additive";
  p.dim_x = p.dim_w = 1;
  p.regimes = 2;
  p.horizon = 1.0;
  p.lipschitz = 1.2;
  p.x0 = Vec{1.0};
  p.default_generator = detail::symmetric_two_state_generator();
  p.drift = [a](const Vec&, int i0, Vec& out) { out.assign(1, a[std::size_t(i0 - 1)]); };
  p.diffusion_column = [c](const Vec&, int i0, int, Vec& out) {
    out.assign(1, c[std::size_t(i0 - 1)]);
  };
  p.diffusion_jacobian = [](const Vec&, int, int, Mat& out) { out = Mat(1, 1, 0.0); };
  p.drift_jacobian = [](const Vec&, int, Mat& out) { out = Mat(1, 1, 0.0); };
  p.closed_form = detail::additive_closed_form(a, c, p.x0[0]);
  return p;
}

inline std::vector<SdewmsProblem> builtin_catalog() {
  return {make_p1_switching_gbm(), make_p2_noncommutative(), make_p3_single_regime(),
          make_p4_additive()};
}

inline SdewmsProblem find_problem(const std::string& name) {
  for (auto& p : builtin_catalog())
    if (p.name == name) return p;
  throw error(errc::bad_config,
              "unknown problem '" + name +
                  "' (known: p1_switching_gbm, p2_noncommutative, p3_single_regime, p4_additive)");
}

}  // namespace switchstein
