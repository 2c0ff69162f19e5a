#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nases/rng.hpp"
#include "nases/tensor.hpp"

namespace nases {

// He initialization: Normal(0, 2/fan_in)
inline TensorBuf he_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) fail(ErrorKind::Config, "fan_in must be at least 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  TensorBuf t = TensorBuf::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

inline TensorBuf he_init(std::vector<std::size_t> shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  return he_init(std::move(shape), fan_in, rng);
}

// Uniform(-bound, bound), the usual recurrent-layer default with bound 1/sqrt(hidden)
inline TensorBuf uniform_init(std::vector<std::size_t> shape, double bound, Rng& rng) {
  TensorBuf t = TensorBuf::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bound * (2.0 * rng.uniform() - 1.0);
  return t;
}

}  // namespace nases
