#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "switchstein/common.hpp"
#include "switchstein/rng.hpp"

namespace switchstein {

/// Validated generator of the switching chain. States are indexed 1..states;
/// rates(i-1, j-1) is the i -> j transition rate, diagonal entries are the
/// negated exit rates, and max_rate is the largest exit rate q.
struct GeneratorMatrix {
  int states = 0;
  Mat rates;
  double max_rate = 0.0;

  double rate(int from_state, int to_state) const {
    return rates(std::size_t(from_state - 1), std::size_t(to_state - 1));
  }
  double exit_rate(int state) const { return -rate(state, state); }
};

inline constexpr double kRowSumTolerance = 1e-12;

inline GeneratorMatrix validate_generator(const Mat& raw) {
  if (!raw.square() || raw.rows == 0)
    throw error(errc::bad_config, "generator must be a nonempty square matrix");
  const std::size_t m0 = raw.rows;
  double q = 0.0;
  for (std::size_t i = 0; i < m0; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m0; ++j) {
      if (i != j && raw(i, j) < 0.0)
        throw error(errc::negative_off_diagonal,
                    "q[" + std::to_string(i + 1) + "][" + std::to_string(j + 1) +
                        "] = " + std::to_string(raw(i, j)));
      row_sum += raw(i, j);
    }
    if (std::abs(row_sum) > kRowSumTolerance)
      throw error(errc::row_sum_violation,
                  "row " + std::to_string(i + 1) + " sums to " + std::to_string(row_sum));
    q = std::max(q, -raw(i, i));
  }
  return GeneratorMatrix{int(m0), raw, q};
}

struct Jump {
  double time = 0.0;
  int to_state = 0;
};

/// Exact cadlag trajectory of the chain on [0, horizon]: the initial state
/// plus the ordered jumps, each of which changes the state.
struct ChainPath {
  int initial_state = 1;
  std::vector<Jump> jumps;
  double horizon = 0.0;

  void check_time(double t) const {
    if (!(t >= 0.0) || !(t <= horizon))
      throw error(errc::time_out_of_range, "t = " + std::to_string(t));
  }

  /// alpha(t), right-continuous: the state set by the last jump at or before t.
  int state_at(double t) const {
    check_time(t);
    int s = initial_state;
    for (const Jump& j : jumps) {
      if (j.time > t) break;
      s = j.to_state;
    }
    return s;
  }

  /// Left limit alpha(t-): jumps exactly at t are not yet in effect.
  int state_before(double t) const {
    check_time(t);
    int s = initial_state;
    for (const Jump& j : jumps) {
      if (j.time >= t) break;
      s = j.to_state;
    }
    return s;
  }
};

/// Gillespie-style exact simulation: hold Exp(exit rate), then move to j with
/// probability rate(i,j)/exit_rate(i). Absorbing states hold forever.
inline ChainPath sample_chain_path(const GeneratorMatrix& gen, int initial_state,
                                   double horizon, RandomStream& stream) {
  if (initial_state < 1 || initial_state > gen.states)
    throw error(errc::bad_config, "initial state out of range");
  if (!(horizon > 0.0)) throw error(errc::time_out_of_range, "horizon must be positive");

  ChainPath path;
  path.initial_state = initial_state;
  path.horizon = horizon;

  int state = initial_state;
  double t = 0.0;
  for (;;) {
    const double rate = gen.exit_rate(state);
    const double hold = stream.exponential(rate);
    if (!(t + hold <= horizon)) break;  // covers hold = +inf (absorbing)
    t += hold;
    // Next state: discrete draw weighted by the off-diagonal rates.
    double u = stream.uniform() * rate;
    int next = state;
    double acc = 0.0;
    for (int j = 1; j <= gen.states; ++j) {
      if (j == state) continue;
      acc += gen.rate(state, j);
      if (u <= acc) {
        next = j;
        break;
      }
    }
    if (next == state) {
      // Only reachable through rounding at u ~ rate; take the last candidate.
      for (int j = gen.states; j >= 1; --j) {
        if (j != state && gen.rate(state, j) > 0.0) {
          next = j;
          break;
        }
      }
      if (next == state) break;
    }
    path.jumps.push_back(Jump{t, next});
    state = next;
  }
  return path;
}

/// Jumps of the chain in the half-open-on-left interval (t_lo, t_hi].
struct IntervalJumps {
  int count = 0;
  std::vector<double> times;
  std::vector<int> states_after;
};

inline IntervalJumps jumps_in(const ChainPath& path, double t_lo, double t_hi) {
  path.check_time(t_lo);
  path.check_time(t_hi);
  if (!(t_lo < t_hi)) throw error(errc::time_out_of_range, "need t_lo < t_hi");
  IntervalJumps out;
  for (const Jump& j : path.jumps) {
    if (j.time <= t_lo) continue;
    if (j.time > t_hi) break;
    out.times.push_back(j.time);
    out.states_after.push_back(j.to_state);
  }
  out.count = int(out.times.size());
  return out;
}

/// Compensated switching martingale M_{i0,j0}(t): the count of i0 -> j0
/// transitions up to t minus rate(i0,j0) times the occupation time of i0.
/// Diagonal pairs are identically zero by convention.
inline double compensated_martingale(const ChainPath& path, const GeneratorMatrix& gen,
                                     int i0, int j0, double t) {
  path.check_time(t);
  if (i0 < 1 || i0 > gen.states || j0 < 1 || j0 > gen.states)
    throw error(errc::bad_config, "state pair out of range");
  if (i0 == j0) return 0.0;

  int transitions = 0;
  double occupation = 0.0;
  int state = path.initial_state;
  double seg_start = 0.0;
  for (const Jump& j : path.jumps) {
    if (j.time > t) break;
    if (state == i0) {
      occupation += j.time - seg_start;
      if (j.to_state == j0) ++transitions;
    }
    state = j.to_state;
    seg_start = j.time;
  }
  if (state == i0) occupation += t - seg_start;
  return double(transitions) - gen.rate(i0, j0) * occupation;
}

}  // namespace switchstein
