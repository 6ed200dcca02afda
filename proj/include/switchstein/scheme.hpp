#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/model.hpp"
#include "switchstein/noise.hpp"

namespace switchstein {

enum class SchemeKind { euler, milstein, milstein_ablated };

inline const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::euler: return "euler";
    case SchemeKind::milstein: return "milstein";
    case SchemeKind::milstein_ablated: return "milstein-ablated";
  }
  return "unknown";
}

inline SchemeKind scheme_from_name(const std::string& s) {
  if (s == "euler") return SchemeKind::euler;
  if (s == "milstein") return SchemeKind::milstein;
  if (s == "milstein-ablated" || s == "milstein_ablated") return SchemeKind::milstein_ablated;
  throw error(errc::bad_config, "unknown scheme '" + s + "'");
}

/// Step-size policy against the chain's maximal exit rate: the convergence
/// regime needs h < 1/(2q); anything in [1/(2q), 1/q) is allowed but flagged,
/// h >= 1/q is rejected outright.
enum class StepPolicy { ok, warn, reject };

inline StepPolicy step_size_policy(double h, double max_rate) {
  if (max_rate <= 0.0) return StepPolicy::ok;
  if (h >= 1.0 / max_rate) return StepPolicy::reject;
  if (h >= 1.0 / (2.0 * max_rate)) return StepPolicy::warn;
  return StepPolicy::ok;
}

/// Everything one step consumes: state, regimes at both endpoints, jump count
/// in the step interval, the Brownian increment, the iterated-integral table,
/// and (when the interval contains jumps) W(t_{n+1}) - W(tau_1^n).
struct StepInputs {
  Vec y;
  int regime = 1;
  int regime_next = 1;
  int jump_count = 0;
  double h = 0.0;
  Vec dW;
  Mat iterated;  // (l1, l) entry: int int dW_{l1} dW_l
  std::optional<Vec> jump_tail_dW;
};

namespace detail {

/// Scratch buffers so the inner loops stay allocation-free after warmup.
struct StepWorkspace {
  Vec drift, column, column_other, product;
  Mat jacobian;
};

/// One Milstein step (or Euler when `order_one` is false): drift and
/// diffusion increments, then the iterated-integral term, then the
/// single-jump switching correction unless ablated.
inline void step_core(const SdewmsProblem& p, const Vec& y, int regime, int regime_next,
                      int jump_count, double h, const double* dW, const Mat* iterated,
                      const double* jump_tail, bool order_one, bool ablate_switch,
                      StepWorkspace& ws, Vec& out) {
  const int d = p.dim_x;
  const int m = p.dim_w;

  out = y;
  p.drift(y, regime, ws.drift);
  for (int i = 0; i < d; ++i) out[std::size_t(i)] += ws.drift[std::size_t(i)] * h;
  for (int l = 0; l < m; ++l) {
    p.diffusion_column(y, regime, l, ws.column);
    for (int i = 0; i < d; ++i) out[std::size_t(i)] += ws.column[std::size_t(i)] * dW[l];
  }
  if (!order_one) return;

  for (int l = 0; l < m; ++l) {
    p.diffusion_jacobian(y, regime, l, ws.jacobian);
    for (int l1 = 0; l1 < m; ++l1) {
      const double weight = (*iterated)(std::size_t(l1), std::size_t(l));
      p.diffusion_column(y, regime, l1, ws.column_other);
      mat_vec(ws.jacobian, ws.column_other, ws.product);
      for (int i = 0; i < d; ++i) out[std::size_t(i)] += ws.product[std::size_t(i)] * weight;
    }
  }

  if (!ablate_switch && jump_count == 1) {
    if (jump_tail == nullptr)
      throw error(errc::missing_jump_tail, "step has one jump but no Brownian tail");
    for (int l = 0; l < m; ++l) {
      p.diffusion_column(y, regime_next, l, ws.column);
      p.diffusion_column(y, regime, l, ws.column_other);
      for (int i = 0; i < d; ++i)
        out[std::size_t(i)] +=
            (ws.column[std::size_t(i)] - ws.column_other[std::size_t(i)]) * jump_tail[l];
    }
  }
}

}  // namespace detail

inline Vec milstein_step(const SdewmsProblem& p, const StepInputs& in,
                         bool ablate_switch_correction = false) {
  if (!(in.h > 0.0)) throw error(errc::plan_invalid, "step size must be positive");
  detail::StepWorkspace ws;
  Vec out;
  const double* tail = in.jump_tail_dW ? in.jump_tail_dW->data() : nullptr;
  detail::step_core(p, in.y, in.regime, in.regime_next, in.jump_count, in.h, in.dW.data(),
                    &in.iterated, tail, /*order_one=*/true, ablate_switch_correction, ws, out);
  return out;
}

inline Vec euler_step(const SdewmsProblem& p, const StepInputs& in) {
  if (!(in.h > 0.0)) throw error(errc::plan_invalid, "step size must be positive");
  detail::StepWorkspace ws;
  Vec out;
  detail::step_core(p, in.y, in.regime, in.regime_next, in.jump_count, in.h, in.dW.data(),
                    nullptr, nullptr, /*order_one=*/false, true, ws, out);
  return out;
}

/// Uniform-grid trajectory: values and chain regime at t_n = n h.
struct Trajectory {
  double h = 0.0;
  std::vector<double> times;
  std::vector<Vec> values;
  std::vector<int> regimes;
};

/// Iterate the chosen one-step map over the coarse cells derived from the
/// driving path. Initial value is drawn from the problem's initial law with
/// the provided stream (or the point mass when no stream is given).
inline Trajectory simulate_from_coarse(const SdewmsProblem& p, SchemeKind kind,
                                       const ChainPath& chain, const CoarseNoise& cn,
                                       const Vec& y0) {
  Trajectory tr;
  tr.h = cn.h;
  tr.times = cn.node_times;
  tr.regimes = regimes_at(chain, cn.node_times, chain.horizon);
  tr.values.resize(cn.n_cells + 1);
  tr.values[0] = y0;

  detail::StepWorkspace ws;
  const bool order_one = kind != SchemeKind::euler;
  const bool ablate = kind == SchemeKind::milstein_ablated;
  for (std::size_t n = 0; n < cn.n_cells; ++n) {
    const double* tail = cn.jump_count[n] >= 1 ? cn.cell_jump_tail(n) : nullptr;
    detail::step_core(p, tr.values[n], tr.regimes[n], tr.regimes[n + 1], cn.jump_count[n],
                      cn.h, cn.cell_dW(n), &cn.iterated[n], tail, order_one, ablate, ws,
                      tr.values[n + 1]);
  }
  return tr;
}

/// Pass the generator that actually drove the chain when it differs from the
/// problem default; the step-size rejection uses its maximal exit rate.
inline Trajectory simulate_trajectory(const SdewmsProblem& p, SchemeKind kind, double h,
                                      const ChainPath& chain, const DrivingNoise& noise,
                                      const GeneratorMatrix* gen = nullptr) {
  const double q = gen ? gen->max_rate : p.default_generator.max_rate;
  if (step_size_policy(h, q) == StepPolicy::reject)
    throw error(errc::step_too_large,
                "h = " + std::to_string(h) + " >= 1/q = " + std::to_string(1.0 / q));
  CoarseNoise cn = coarsen(noise, h);
  return simulate_from_coarse(p, kind, chain, cn, p.x0);
}

}  // namespace switchstein
