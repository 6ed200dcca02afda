#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace test_util {

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / double(xs.size() - 1);
}

inline double standard_error(const std::vector<double>& xs) {
  return std::sqrt(sample_variance(xs) / double(xs.size()));
}

}  // namespace test_util
