#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/rng.hpp"

namespace switchstein {

namespace grid_tag {
inline constexpr unsigned char uniform = 1;
inline constexpr unsigned char jump = 2;
}  // namespace grid_tag

/// Union of the uniform reference grid and the chain's jump times. Keeping
/// jump times as first-class grid points is what lets the scheme read
/// W(tau_1^n) exactly instead of interpolating.
struct TimeGrid {
  std::vector<double> points;
  std::vector<unsigned char> tags;
  double horizon = 0.0;
  double h_ref = 0.0;
  std::size_t n_uniform = 0;              // number of uniform cells
  std::vector<std::size_t> uniform_index; // uniform node k -> index into points

  std::size_t cells() const { return points.size() - 1; }

  std::size_t index_of(double t) const {
    const double tol = 1e-12 * std::max(1.0, horizon);
    auto it = std::lower_bound(points.begin(), points.end(), t - tol);
    if (it == points.end() || std::abs(*it - t) > tol)
      throw error(errc::not_a_grid_point, "t = " + std::to_string(t));
    return std::size_t(it - points.begin());
  }
};

inline TimeGrid build_merged_grid(double horizon, double h_ref, const ChainPath& chain) {
  if (!(horizon > 0.0) || !(h_ref > 0.0))
    throw error(errc::non_dividing_step, "horizon and h_ref must be positive");
  const auto n = std::llround(horizon / h_ref);
  if (n < 1 || std::abs(double(n) * h_ref - horizon) > 1e-12 * horizon)
    throw error(errc::non_dividing_step,
                "h_ref = " + std::to_string(h_ref) + " does not divide T = " +
                    std::to_string(horizon));

  const double dedup_tol = 1e-14 * horizon;
  TimeGrid g;
  g.horizon = horizon;
  g.h_ref = h_ref;
  g.n_uniform = std::size_t(n);
  g.uniform_index.resize(g.n_uniform + 1);

  std::size_t jump_pos = 0;
  const auto& jumps = chain.jumps;
  for (std::size_t k = 0; k <= g.n_uniform; ++k) {
    const double node = (k == g.n_uniform) ? horizon : double(k) * h_ref;
    // Jump times strictly before the node (outside the dedup band).
    while (jump_pos < jumps.size() && jumps[jump_pos].time < node - dedup_tol) {
      const double tau = jumps[jump_pos].time;
      if (tau > 0.0 && (g.points.empty() || tau - g.points.back() > dedup_tol))
        g.points.push_back(tau), g.tags.push_back(grid_tag::jump);
      else if (!g.points.empty())
        g.tags.back() |= grid_tag::jump;
      ++jump_pos;
    }
    g.points.push_back(node);
    g.tags.push_back(grid_tag::uniform);
    g.uniform_index[k] = g.points.size() - 1;
    // Jumps inside the dedup band collapse onto the node.
    while (jump_pos < jumps.size() && jumps[jump_pos].time <= node + dedup_tol) {
      g.tags.back() |= grid_tag::jump;
      ++jump_pos;
    }
  }
  return g;
}

/// Brownian driving path, stored as independent per-cell increments on the
/// merged grid. Path values are prefix sums formed on demand, always summed
/// left to right so coupled consumers see identical floating-point results.
struct DrivingNoise {
  TimeGrid grid;
  int dimension = 0;
  std::vector<double> increments;  // cell-major: increments[cell * m + l]

  double cell_increment(std::size_t cell, int l) const {
    return increments[cell * std::size_t(dimension) + std::size_t(l)];
  }

  /// Sum of cell increments over grid index range [i0, i1), per coordinate.
  Vec sum_range(std::size_t i0, std::size_t i1) const {
    Vec out(std::size_t(dimension), 0.0);
    for (std::size_t c = i0; c < i1; ++c)
      for (int l = 0; l < dimension; ++l) out[std::size_t(l)] += cell_increment(c, l);
    return out;
  }

  /// W(b) - W(a) for grid points a <= b.
  Vec increment(double a, double b) const {
    const std::size_t ia = grid.index_of(a);
    const std::size_t ib = grid.index_of(b);
    if (ia > ib) throw error(errc::time_out_of_range, "need a <= b");
    return sum_range(ia, ib);
  }
};

inline DrivingNoise sample_noise(const TimeGrid& grid, int dimension, RandomStream& stream) {
  if (dimension < 1) throw error(errc::bad_config, "noise dimension must be >= 1");
  DrivingNoise n;
  n.grid = grid;
  n.dimension = dimension;
  n.increments.resize(grid.cells() * std::size_t(dimension));
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    const double sd = std::sqrt(grid.points[c + 1] - grid.points[c]);
    for (int l = 0; l < dimension; ++l)
      n.increments[c * std::size_t(dimension) + std::size_t(l)] = sd * stream.normal();
  }
  return n;
}

namespace detail {

/// Iterated Ito integrals over the grid index range [i0, i1) of width h.
/// Off-diagonals: left-point Riemann sums of the sub-cell increments,
/// antisymmetrized so the pairwise identity
///   I[l1][l] + I[l][l1] = dW_l1 * dW_l
/// holds exactly; diagonals use the closed form (dW_l^2 - h) / 2.
inline void iterated_core(const DrivingNoise& noise, std::size_t i0, std::size_t i1,
                          double h, const Vec& dW, Mat& out) {
  const int m = noise.dimension;
  out = Mat(std::size_t(m), std::size_t(m), 0.0);
  if (m > 1) {
    Mat riemann(static_cast<std::size_t>(m), static_cast<std::size_t>(m), 0.0);
    Vec running(std::size_t(m), 0.0);  // W(s_j) - W(t_n)
    for (std::size_t c = i0; c < i1; ++c) {
      for (int l1 = 0; l1 < m; ++l1) {
        const double b = running[std::size_t(l1)];
        if (b == 0.0) continue;
        for (int l = 0; l < m; ++l)
          if (l != l1) riemann(std::size_t(l1), std::size_t(l)) += b * noise.cell_increment(c, l);
      }
      for (int l = 0; l < m; ++l) running[std::size_t(l)] += noise.cell_increment(c, l);
    }
    for (int l1 = 0; l1 < m; ++l1)
      for (int l = l1 + 1; l < m; ++l) {
        const double area = 0.5 * (riemann(std::size_t(l1), std::size_t(l)) -
                                   riemann(std::size_t(l), std::size_t(l1)));
        const double half_product = 0.5 * dW[std::size_t(l1)] * dW[std::size_t(l)];
        out(std::size_t(l1), std::size_t(l)) = half_product + area;
        out(std::size_t(l), std::size_t(l1)) = half_product - area;
      }
  }
  for (int l = 0; l < m; ++l)
    out(std::size_t(l), std::size_t(l)) =
        0.5 * (dW[std::size_t(l)] * dW[std::size_t(l)] - h);
}

}  // namespace detail

/// Table of int_{t_n}^{t_{n+1}} int_{t_n}^{s} dW_{l1}(u) dW_l(s), indexed
/// out(l1, l), approximated from the sub-cell increments inside the interval.
inline Mat iterated_integrals(const DrivingNoise& noise, double t_n, double t_np1) {
  const std::size_t i0 = noise.grid.index_of(t_n);
  const std::size_t i1 = noise.grid.index_of(t_np1);
  if (i0 >= i1) throw error(errc::time_out_of_range, "need t_n < t_{n+1}");
  const double h = noise.grid.points[i1] - noise.grid.points[i0];
  const Vec dW = noise.sum_range(i0, i1);
  Mat out;
  detail::iterated_core(noise, i0, i1, h, dW, out);
  return out;
}

/// Everything the single-step maps consume at one coarse level, derived from
/// one driving path so that all levels and schemes stay coupled.
struct CoarseNoise {
  double h = 0.0;
  std::size_t n_cells = 0;
  int dimension = 0;
  std::vector<double> node_times;       // n_cells + 1 exact grid values
  std::vector<double> dW;               // n_cells x m
  std::vector<Mat> iterated;            // per cell, m x m
  std::vector<int> jump_count;          // N_n per cell
  std::vector<double> first_jump_time;  // valid iff jump_count >= 1
  std::vector<double> jump_tail;        // n_cells x m; W(t_{n+1}) - W(tau_1^n)

  const double* cell_dW(std::size_t cell) const {
    return dW.data() + cell * std::size_t(dimension);
  }
  const double* cell_jump_tail(std::size_t cell) const {
    return jump_tail.data() + cell * std::size_t(dimension);
  }
};

/// Aggregate the fine path to a coarser uniform step. Increments are exact
/// left-to-right sums of the fine increments, the iterated-integral tables
/// are rebuilt from the sub-cell resolution, and W(tau_1^n) is read off the
/// merged grid so the switching correction has its exact Brownian tail.
inline CoarseNoise coarsen(const DrivingNoise& noise, double coarse_h) {
  const TimeGrid& g = noise.grid;
  const auto c = std::llround(coarse_h / g.h_ref);
  if (c < 1 || std::abs(double(c) * g.h_ref - coarse_h) > 1e-12 * std::max(coarse_h, g.h_ref))
    throw error(errc::non_nested_step,
                "coarse_h = " + std::to_string(coarse_h) + " is not a multiple of h_ref = " +
                    std::to_string(g.h_ref));
  if (g.n_uniform % std::size_t(c) != 0)
    throw error(errc::non_nested_step,
                "coarse_h = " + std::to_string(coarse_h) + " does not divide the horizon");

  const int m = noise.dimension;
  CoarseNoise cn;
  cn.h = coarse_h;
  cn.n_cells = g.n_uniform / std::size_t(c);
  cn.dimension = m;
  cn.node_times.resize(cn.n_cells + 1);
  cn.dW.assign(cn.n_cells * std::size_t(m), 0.0);
  cn.iterated.resize(cn.n_cells);
  cn.jump_count.assign(cn.n_cells, 0);
  cn.first_jump_time.assign(cn.n_cells, std::numeric_limits<double>::quiet_NaN());
  cn.jump_tail.assign(cn.n_cells * std::size_t(m), 0.0);

  for (std::size_t k = 0; k <= cn.n_cells; ++k)
    cn.node_times[k] = g.points[g.uniform_index[k * std::size_t(c)]];

  for (std::size_t k = 0; k < cn.n_cells; ++k) {
    const std::size_t i0 = g.uniform_index[k * std::size_t(c)];
    const std::size_t i1 = g.uniform_index[(k + 1) * std::size_t(c)];
    const double width = g.points[i1] - g.points[i0];

    Vec dw = noise.sum_range(i0, i1);
    for (int l = 0; l < m; ++l) cn.dW[k * std::size_t(m) + std::size_t(l)] = dw[std::size_t(l)];
    detail::iterated_core(noise, i0, i1, width, dw, cn.iterated[k]);

    // Jumps in (t_k, t_{k+1}]: jump-tagged grid points with index in (i0, i1].
    std::size_t first_jump_index = 0;
    int count = 0;
    for (std::size_t i = i0 + 1; i <= i1; ++i) {
      if (g.tags[i] & grid_tag::jump) {
        if (count == 0) first_jump_index = i;
        ++count;
      }
    }
    cn.jump_count[k] = count;
    if (count >= 1) {
      cn.first_jump_time[k] = g.points[first_jump_index];
      Vec tail = noise.sum_range(first_jump_index, i1);
      for (int l = 0; l < m; ++l)
        cn.jump_tail[k * std::size_t(m) + std::size_t(l)] = tail[std::size_t(l)];
    }
  }
  return cn;
}

/// Re-express the path as a DrivingNoise on the merged grid of a coarser
/// uniform step (jump times kept). Used to couple pipelines that differ only
/// in the sub-sampling resolution of the iterated integrals.
inline DrivingNoise coarsen_to_merged(const DrivingNoise& noise, double coarse_h) {
  const TimeGrid& g = noise.grid;
  const auto c = std::llround(coarse_h / g.h_ref);
  if (c < 1 || std::abs(double(c) * g.h_ref - coarse_h) > 1e-12 * std::max(coarse_h, g.h_ref))
    throw error(errc::non_nested_step, "coarse_h is not a multiple of h_ref");
  if (g.n_uniform % std::size_t(c) != 0)
    throw error(errc::non_nested_step, "coarse_h does not divide the horizon");

  DrivingNoise out;
  out.dimension = noise.dimension;
  out.grid.horizon = g.horizon;
  out.grid.h_ref = coarse_h;
  out.grid.n_uniform = g.n_uniform / std::size_t(c);
  out.grid.uniform_index.resize(out.grid.n_uniform + 1);

  const int m = noise.dimension;
  std::size_t uniform_node = 0;  // walks g.uniform_index alongside the points
  std::size_t prev = 0;
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    bool uniform_kept = false;
    if (uniform_node <= g.n_uniform && g.uniform_index[uniform_node] == i) {
      uniform_kept = (uniform_node % std::size_t(c)) == 0;
      if (uniform_kept) out.grid.uniform_index[uniform_node / std::size_t(c)] = out.grid.points.size();
      ++uniform_node;
    }
    const bool is_jump = (g.tags[i] & grid_tag::jump) != 0;
    if (i != 0 && !uniform_kept && !is_jump) continue;
    if (i != 0) {
      Vec inc = noise.sum_range(prev, i);
      for (int l = 0; l < m; ++l) out.increments.push_back(inc[std::size_t(l)]);
    }
    unsigned char tag = is_jump ? grid_tag::jump : 0;
    if (uniform_kept || i == 0) tag |= grid_tag::uniform;
    out.grid.points.push_back(g.points[i]);
    out.grid.tags.push_back(tag);
    prev = i;
  }
  return out;
}

}  // namespace switchstein
