#pragma once

#include <cmath>
#include <cstddef>

#include "nases/error.hpp"

namespace nases {

// Cosine annealing with warm restarts every t0 epochs.
struct LrSchedule {
  double l_max = 0.05;
  double l_min = 0.001;
  std::size_t t0 = 10;
};

inline void validate(const LrSchedule& s) {
  if (!(s.l_min > 0.0 && s.l_max > 0.0)) fail(ErrorKind::Config, "lr bounds must be positive");
  if (!(s.l_min < s.l_max)) fail(ErrorKind::Config, "l_min must be below l_max");
  if (s.t0 == 0) fail(ErrorKind::Config, "t0 must be positive");
}

// lr(t) = l_min + (l_max - l_min)/2 * (1 + cos(pi * (t mod t0) / t0)), t in epochs
inline double cosine_lr(const LrSchedule& s, double t) {
  validate(s);
  if (t < 0.0) fail(ErrorKind::Config, "negative epoch time");
  const double period = static_cast<double>(s.t0);
  const double phase = std::fmod(t, period) / period;
  return s.l_min + 0.5 * (s.l_max - s.l_min) * (1.0 + std::cos(3.14159265358979323846 * phase));
}

}  // namespace nases
