#pragma once

#include <cmath>
#include <cstddef>

#include "nases/param_set.hpp"

namespace nases {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

namespace detail {

// All-or-nothing guard: a single NaN gradient must leave every parameter
// untouched, so finiteness is checked before any mutation.
inline void check_grads_finite(const ParamSet& ps, const GradMap& grads) {
  for (const auto& [name, g] : grads) {
    const Param& p = ps.param(name);
    check_same_shape(p.value, g, "optimizer step");
    if (!all_finite(g)) fail(ErrorKind::Numeric, "non-finite gradient for " + name);
  }
}

}  // namespace detail

// Adam with bias correction. Parameters without a gradient entry are skipped.
inline void adam_step(ParamSet& ps, const GradMap& grads, double lr, AdamConfig cfg = {}) {
  detail::check_grads_finite(ps, grads);
  ps.step += 1;
  const double t = static_cast<double>(ps.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads) {
    Param& p = ps.param(name);
    double* v = p.value.data();
    double* m1 = p.m1.data();
    double* m2 = p.m2.data();
    const double* gd = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * gd[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// Nesterov momentum, weight decay folded into the gradient:
//   d = g + wd*p; v = mu*v + d; p -= lr*(d + mu*v)
inline void nesterov_step(ParamSet& ps, const GradMap& grads, double lr, double momentum,
                          double weight_decay) {
  detail::check_grads_finite(ps, grads);
  ps.step += 1;
  for (const auto& [name, g] : grads) {
    Param& p = ps.param(name);
    double* v = p.value.data();
    double* vel = p.m1.data();
    const double* gd = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = gd[i] + weight_decay * v[i];
      vel[i] = momentum * vel[i] + d;
      v[i] -= lr * (d + momentum * vel[i]);
    }
  }
}

}  // namespace nases
