#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace switchstein {

/// Error categories raised by the library. Every switchstein::error carries
/// one of these so callers can branch without string matching.
enum class errc {
  negative_off_diagonal,
  row_sum_violation,
  time_out_of_range,
  not_a_grid_point,
  non_dividing_step,
  non_nested_step,
  step_too_large,
  missing_jump_tail,
  plan_invalid,
  bad_config,
};

inline const char* errc_name(errc e) {
  switch (e) {
    case errc::negative_off_diagonal: return "negative_off_diagonal";
    case errc::row_sum_violation: return "row_sum_violation";
    case errc::time_out_of_range: return "time_out_of_range";
    case errc::not_a_grid_point: return "not_a_grid_point";
    case errc::non_dividing_step: return "non_dividing_step";
    case errc::non_nested_step: return "non_nested_step";
    case errc::step_too_large: return "step_too_large";
    case errc::missing_jump_tail: return "missing_jump_tail";
    case errc::plan_invalid: return "plan_invalid";
    case errc::bad_config: return "bad_config";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc kind, const std::string& what)
      : std::runtime_error(std::string(errc_name(kind)) + ": " + what), kind_(kind) {}
  errc kind() const { return kind_; }

 private:
  errc kind_;
};

using Vec = std::vector<double>;

/// Dense row-major matrix, just big enough for generators, Jacobians and
/// iterated-integral tables in this library.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  bool square() const { return rows == cols; }
};

/// out = M * x
inline void mat_vec(const Mat& m, const Vec& x, Vec& out) {
  out.assign(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
    out[i] = s;
  }
}

inline double norm2(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double sq_norm2(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

}  // namespace switchstein
