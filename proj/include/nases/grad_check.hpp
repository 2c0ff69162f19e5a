#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "nases/param_set.hpp"

namespace nases {

// Central-difference gradient oracle. Perturbs every scalar in the ParamSet;
// f must be a pure function of the parameter values.
inline GradMap finite_diff_grad(const std::function<double(const ParamSet&)>& f, ParamSet ps,
                                double eps = 1e-4) {
  if (!(eps > 0.0)) fail(ErrorKind::Config, "eps must be positive");
  GradMap grads;
  for (auto& [name, p] : ps.entries) {
    TensorBuf g = TensorBuf::zeros(p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double hi = f(ps);
      p.value[i] = saved - eps;
      const double lo = f(ps);
      p.value[i] = saved;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        fail(ErrorKind::Numeric, "non-finite objective in finite_diff_grad at " + name);
      g[i] = (hi - lo) / (2.0 * eps);
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

// max over all entries of |a - n| / max(1, |a|)
inline double max_relative_error(const GradMap& analytic, const GradMap& numeric) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    auto it = numeric.find(name);
    if (it == numeric.end()) fail(ErrorKind::Config, "missing numeric gradient for " + name);
    const TensorBuf& n = it->second;
    check_same_shape(a, n, "max_relative_error");
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(a[i] - n[i]) / std::max(1.0, std::abs(a[i])));
  }
  return worst;
}

}  // namespace nases
