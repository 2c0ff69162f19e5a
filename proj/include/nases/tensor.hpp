#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "nases/error.hpp"

namespace nases {

// Dense row-major tensor of doubles. Checked construction rejects non-finite
// values; code mutating data() in place is responsible for keeping the buffer
// finite (optimizer steps re-check gradients before touching parameters).
class TensorBuf {
 public:
  TensorBuf() = default;

  TensorBuf(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
      fail(ErrorKind::Shape, "tensor data length does not match shape");
    for (double v : data_)
      if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite value in tensor");
  }

  static TensorBuf zeros(std::vector<std::size_t> shape) {
    TensorBuf t;
    t.data_.assign(element_count(shape), 0.0);
    t.shape_ = std::move(shape);
    return t;
  }

  static TensorBuf full(std::vector<std::size_t> shape, double value) {
    if (!std::isfinite(value)) fail(ErrorKind::Numeric, "non-finite fill value");
    TensorBuf t;
    t.data_.assign(element_count(shape), value);
    t.shape_ = std::move(shape);
    return t;
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) fail(ErrorKind::Shape, "zero extent in tensor shape");
      n *= e;
    }
    return n;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t i) const { return shape_.at(i); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const TensorBuf& o) const { return shape_ == o.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline bool all_finite(const TensorBuf& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

inline void check_same_shape(const TensorBuf& a, const TensorBuf& b, const char* what) {
  if (!a.same_shape(b)) fail(ErrorKind::Shape, std::string("shape mismatch in ") + what);
}

}  // namespace nases
