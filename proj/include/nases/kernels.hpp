#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nases/param_set.hpp"
#include "nases/tensor.hpp"

namespace nases {

// ---------------------------------------------------------------------------
// Small row-major GEMM kernels. Loop orders chosen so the inner loop runs over
// contiguous memory and auto-vectorizes. Accumulation is always in double.
// ---------------------------------------------------------------------------

// C(MxN) += A(MxK) * B(KxN)
inline void gemm_acc(std::size_t M, std::size_t K, std::size_t N, const double* __restrict__ A,
                     const double* __restrict__ B, double* __restrict__ C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    std::size_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const double a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
      const double* b0 = B + k * N;
      const double* b1 = b0 + N;
      const double* b2 = b1 + N;
      const double* b3 = b2 + N;
      for (std::size_t j = 0; j < N; ++j)
        c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; k < K; ++k) {
      const double aik = a[k];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

// C(MxN) += A(MxK) * B^T, B stored (NxK)
inline void gemm_nt_acc(std::size_t M, std::size_t K, std::size_t N, const double* __restrict__ A,
                        const double* __restrict__ B, double* __restrict__ C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] += s;
    }
  }
}

// C(MxN) += A^T * B, A stored (KxM), B stored (KxN)
inline void gemm_tn_acc(std::size_t M, std::size_t K, std::size_t N, const double* __restrict__ A,
                        const double* __restrict__ B, double* __restrict__ C) {
  for (std::size_t k = 0; k < K; ++k) {
    const double* a = A + k * M;
    const double* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const double aki = a[i];
      double* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Dense layer: y = x W^T + b with x (B,in), W (out,in), b (out).
// ---------------------------------------------------------------------------

inline TensorBuf dense_forward(const TensorBuf& W, const TensorBuf& b, const TensorBuf& x) {
  if (W.rank() != 2 || b.rank() != 1 || x.rank() != 2)
    fail(ErrorKind::Shape, "dense_forward expects W(out,in), b(out), x(batch,in)");
  const std::size_t out = W.extent(0), in = W.extent(1), batch = x.extent(0);
  if (x.extent(1) != in || b.extent(0) != out)
    fail(ErrorKind::Shape, "dense_forward dimension mismatch");
  TensorBuf y = TensorBuf::zeros({batch, out});
  for (std::size_t i = 0; i < batch; ++i)
    std::copy(b.data(), b.data() + out, y.data() + i * out);
  gemm_nt_acc(batch, in, out, x.data(), W.data(), y.data());
  return y;
}

struct DenseGrads {
  TensorBuf dW, db, dx;
};

inline DenseGrads dense_backward(const TensorBuf& W, const TensorBuf& x, const TensorBuf& dy) {
  const std::size_t out = W.extent(0), in = W.extent(1), batch = x.extent(0);
  if (dy.rank() != 2 || dy.extent(0) != batch || dy.extent(1) != out)
    fail(ErrorKind::Shape, "dense_backward dimension mismatch");
  DenseGrads g;
  g.dW = TensorBuf::zeros({out, in});
  g.db = TensorBuf::zeros({out});
  g.dx = TensorBuf::zeros({batch, in});
  gemm_tn_acc(out, batch, in, dy.data(), x.data(), g.dW.data());  // dW = dy^T x
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t o = 0; o < out; ++o) g.db[o] += dy[i * out + o];
  gemm_acc(batch, out, in, dy.data(), W.data(), g.dx.data());  // dx = dy W
  return g;
}

// ParamSet convenience, names "<prefix>.W" / "<prefix>.b"
inline TensorBuf dense_forward(const ParamSet& ps, const std::string& prefix, const TensorBuf& x) {
  return dense_forward(ps.at(prefix + ".W"), ps.at(prefix + ".b"), x);
}

inline TensorBuf dense_backward(const ParamSet& ps, const std::string& prefix, const TensorBuf& x,
                                const TensorBuf& dy, GradMap& grads) {
  DenseGrads g = dense_backward(ps.at(prefix + ".W"), x, dy);
  grad_accumulate(grads, prefix + ".W", std::move(g.dW));
  grad_accumulate(grads, prefix + ".b", std::move(g.db));
  return std::move(g.dx);
}

// ---------------------------------------------------------------------------
// Activations and losses
// ---------------------------------------------------------------------------

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline TensorBuf sigmoid(const TensorBuf& x) {
  TensorBuf y = TensorBuf::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

inline TensorBuf relu(const TensorBuf& x) {
  TensorBuf y = TensorBuf::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

inline TensorBuf relu_backward(const TensorBuf& x, const TensorBuf& dy) {
  check_same_shape(x, dy, "relu_backward");
  TensorBuf dx = TensorBuf::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// row-wise softmax over the last extent of a rank-2 tensor
inline TensorBuf softmax_rows(const TensorBuf& logits) {
  if (logits.rank() != 2) fail(ErrorKind::Shape, "softmax_rows expects (batch, classes)");
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  TensorBuf p = TensorBuf::zeros(logits.shape());
  for (std::size_t i = 0; i < batch; ++i) {
    const double* z = logits.data() + i * k;
    double* q = p.data() + i * k;
    double zmax = z[0];
    for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, z[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      q[j] = std::exp(z[j] - zmax);
      s += q[j];
    }
    for (std::size_t j = 0; j < k; ++j) q[j] /= s;
  }
  return p;
}

// mean of squared differences over all elements
inline double mse(const TensorBuf& pred, const TensorBuf& target) {
  check_same_shape(pred, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

inline TensorBuf mse_grad(const TensorBuf& pred, const TensorBuf& target) {
  check_same_shape(pred, target, "mse_grad");
  TensorBuf g = TensorBuf::zeros(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

// mean cross-entropy of softmax(logits) against integer labels; fills dlogits
// with the gradient (softmax - onehot)/batch when non-null
inline double softmax_cross_entropy(const TensorBuf& logits, const std::vector<std::size_t>& labels,
                                    TensorBuf* dlogits = nullptr) {
  if (logits.rank() != 2) fail(ErrorKind::Shape, "softmax_cross_entropy expects (batch, classes)");
  const std::size_t batch = logits.extent(0), k = logits.extent(1);
  if (labels.size() != batch) fail(ErrorKind::Shape, "label count does not match batch");
  TensorBuf p = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= k) fail(ErrorKind::Shape, "label out of range");
    loss -= std::log(std::max(p[i * k + labels[i]], 1e-300));
  }
  loss /= static_cast<double>(batch);
  if (dlogits) {
    *dlogits = std::move(p);
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      double* row = dlogits->data() + i * k;
      row[labels[i]] -= 1.0;
      for (std::size_t j = 0; j < k; ++j) row[j] *= inv;
    }
  }
  return loss;
}

}  // namespace nases
