#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "nases/arch_space.hpp"
#include "nases/kernels.hpp"
#include "nases/param_set.hpp"

namespace nases {

// Spatial kernels over NCHW tensors. All operators use "same" zero padding:
// out = ceil(in / stride), pad split low/high around the window.

namespace detail {

struct ConvGeom {
  std::size_t out_h = 0, out_w = 0;
  std::ptrdiff_t pad_top = 0, pad_left = 0;
};

inline ConvGeom same_geometry(std::size_t in_h, std::size_t in_w, std::size_t k,
                              std::size_t stride) {
  ConvGeom g;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const std::ptrdiff_t pad_h = std::max<std::ptrdiff_t>(
      0, static_cast<std::ptrdiff_t>((g.out_h - 1) * stride + k) - static_cast<std::ptrdiff_t>(in_h));
  const std::ptrdiff_t pad_w = std::max<std::ptrdiff_t>(
      0, static_cast<std::ptrdiff_t>((g.out_w - 1) * stride + k) - static_cast<std::ptrdiff_t>(in_w));
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

inline void require_nchw(const TensorBuf& x, const char* what) {
  if (x.rank() != 4) fail(ErrorKind::Shape, std::string(what) + " expects a (B,C,H,W) tensor");
}

inline void require_stride(std::size_t stride) {
  if (stride != 1 && stride != 2) fail(ErrorKind::Config, "stride must be 1 or 2");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1x1 convolution (no bias): channel mixing, optionally strided.
// ---------------------------------------------------------------------------

inline TensorBuf conv1x1_forward(const TensorBuf& w, const TensorBuf& x, std::size_t stride = 1) {
  detail::require_nchw(x, "conv1x1");
  detail::require_stride(stride);
  if (w.rank() != 2 || w.extent(1) != x.extent(1))
    fail(ErrorKind::Shape, "conv1x1 weight must be (out_channels, in_channels)");
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(0);
  const auto g = detail::same_geometry(H, W, 1, stride);
  TensorBuf y = TensorBuf::zeros({B, O, g.out_h, g.out_w});
  const std::size_t ohw = g.out_h * g.out_w;
  TensorBuf gathered = TensorBuf::zeros({C, ohw});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = x.data() + (b * C + c) * H * W;
      double* dst = gathered.data() + c * ohw;
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) dst[i * g.out_w + j] = src[i * stride * W + j * stride];
    }
    gemm_acc(O, C, ohw, w.data(), gathered.data(), y.data() + b * O * ohw);
  }
  return y;
}

struct Conv1x1Grads {
  TensorBuf dw, dx;
};

inline Conv1x1Grads conv1x1_backward(const TensorBuf& w, const TensorBuf& x, const TensorBuf& dy,
                                     std::size_t stride = 1) {
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(0);
  const auto g = detail::same_geometry(H, W, 1, stride);
  const std::size_t ohw = g.out_h * g.out_w;
  Conv1x1Grads out;
  out.dw = TensorBuf::zeros({O, C});
  out.dx = TensorBuf::zeros(x.shape());
  TensorBuf gathered = TensorBuf::zeros({C, ohw});
  TensorBuf dgathered = TensorBuf::zeros({C, ohw});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = x.data() + (b * C + c) * H * W;
      double* dst = gathered.data() + c * ohw;
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) dst[i * g.out_w + j] = src[i * stride * W + j * stride];
    }
    const double* dyb = dy.data() + b * O * ohw;
    // dw += dy_b * gathered^T  -> (O x C)
    gemm_nt_acc(O, ohw, C, dyb, gathered.data(), out.dw.data());
    // dgathered = w^T * dy_b   -> (C x ohw)
    std::fill(dgathered.vec().begin(), dgathered.vec().end(), 0.0);
    gemm_tn_acc(C, O, ohw, w.data(), dyb, dgathered.data());
    for (std::size_t c = 0; c < C; ++c) {
      double* dst = out.dx.data() + (b * C + c) * H * W;
      const double* src = dgathered.data() + c * ohw;
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) dst[i * stride * W + j * stride] += src[i * g.out_w + j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Depthwise k x k convolution (no bias), same padding.
// ---------------------------------------------------------------------------

inline TensorBuf depthwise_forward(const TensorBuf& w, const TensorBuf& x, std::size_t stride = 1) {
  detail::require_nchw(x, "depthwise");
  detail::require_stride(stride);
  if (w.rank() != 3 || w.extent(0) != x.extent(1) || w.extent(1) != w.extent(2))
    fail(ErrorKind::Shape, "depthwise weight must be (channels, k, k)");
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t k = w.extent(1);
  const auto g = detail::same_geometry(H, W, k, stride);
  TensorBuf y = TensorBuf::zeros({B, C, g.out_h, g.out_w});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xin = x.data() + (b * C + c) * H * W;
      const double* wc = w.data() + c * k * k;
      double* yo = y.data() + (b * C + c) * g.out_h * g.out_w;
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          double s = 0.0;
          for (std::size_t u = 0; u < k; ++u) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
              if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
              s += wc[u * k + v] * xin[r * static_cast<std::ptrdiff_t>(W) + cc];
            }
          }
          yo[i * g.out_w + j] = s;
        }
    }
  return y;
}

struct DepthwiseGrads {
  TensorBuf dw, dx;
};

inline DepthwiseGrads depthwise_backward(const TensorBuf& w, const TensorBuf& x,
                                         const TensorBuf& dy, std::size_t stride = 1) {
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t k = w.extent(1);
  const auto g = detail::same_geometry(H, W, k, stride);
  DepthwiseGrads out;
  out.dw = TensorBuf::zeros(w.shape());
  out.dx = TensorBuf::zeros(x.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const double* xin = x.data() + (b * C + c) * H * W;
      const double* wc = w.data() + c * k * k;
      const double* dyo = dy.data() + (b * C + c) * g.out_h * g.out_w;
      double* dwc = out.dw.data() + c * k * k;
      double* dxc = out.dx.data() + (b * C + c) * H * W;
      for (std::size_t i = 0; i < g.out_h; ++i)
        for (std::size_t j = 0; j < g.out_w; ++j) {
          const double d = dyo[i * g.out_w + j];
          if (d == 0.0) continue;
          for (std::size_t u = 0; u < k; ++u) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t v = 0; v < k; ++v) {
              const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
              if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
              dwc[u * k + v] += d * xin[r * static_cast<std::ptrdiff_t>(W) + cc];
              dxc[r * static_cast<std::ptrdiff_t>(W) + cc] += d * wc[u * k + v];
            }
          }
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// 3x3 pooling, same padding. Average pooling divides by the in-bounds window
// size; max pooling records the first maximum in scan order for backward.
// ---------------------------------------------------------------------------

inline TensorBuf avg_pool3_forward(const TensorBuf& x, std::size_t stride = 1) {
  detail::require_nchw(x, "avg_pool3");
  detail::require_stride(stride);
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const auto g = detail::same_geometry(H, W, 3, stride);
  TensorBuf y = TensorBuf::zeros({B, C, g.out_h, g.out_w});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* xin = x.data() + bc * H * W;
    double* yo = y.data() + bc * g.out_h * g.out_w;
    for (std::size_t i = 0; i < g.out_h; ++i)
      for (std::size_t j = 0; j < g.out_w; ++j) {
        double s = 0.0;
        int count = 0;
        for (std::size_t u = 0; u < 3; ++u) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
            if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
            s += xin[r * static_cast<std::ptrdiff_t>(W) + cc];
            ++count;
          }
        }
        yo[i * g.out_w + j] = s / count;
      }
  }
  return y;
}

inline TensorBuf avg_pool3_backward(const std::vector<std::size_t>& x_shape, const TensorBuf& dy,
                                    std::size_t stride = 1) {
  const std::size_t H = x_shape[2], W = x_shape[3];
  const auto g = detail::same_geometry(H, W, 3, stride);
  TensorBuf dx = TensorBuf::zeros(x_shape);
  const std::size_t BC = x_shape[0] * x_shape[1];
  for (std::size_t bc = 0; bc < BC; ++bc) {
    const double* dyo = dy.data() + bc * g.out_h * g.out_w;
    double* dxc = dx.data() + bc * H * W;
    for (std::size_t i = 0; i < g.out_h; ++i)
      for (std::size_t j = 0; j < g.out_w; ++j) {
        int count = 0;
        for (std::size_t u = 0; u < 3; ++u) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
            if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
            ++count;
          }
        }
        const double d = dyo[i * g.out_w + j] / count;
        for (std::size_t u = 0; u < 3; ++u) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
            if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
            dxc[r * static_cast<std::ptrdiff_t>(W) + cc] += d;
          }
        }
      }
  }
  return dx;
}

inline TensorBuf max_pool3_forward(const TensorBuf& x, std::size_t stride = 1,
                                   std::vector<std::size_t>* argmax = nullptr) {
  detail::require_nchw(x, "max_pool3");
  detail::require_stride(stride);
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const auto g = detail::same_geometry(H, W, 3, stride);
  TensorBuf y = TensorBuf::zeros({B, C, g.out_h, g.out_w});
  if (argmax) argmax->assign(B * C * g.out_h * g.out_w, 0);
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* xin = x.data() + bc * H * W;
    double* yo = y.data() + bc * g.out_h * g.out_w;
    for (std::size_t i = 0; i < g.out_h; ++i)
      for (std::size_t j = 0; j < g.out_w; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t u = 0; u < 3; ++u) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * stride + u) - g.pad_top;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(j * stride + v) - g.pad_left;
            if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = static_cast<std::size_t>(r) * W + static_cast<std::size_t>(cc);
            if (xin[idx] > best) {
              best = xin[idx];
              best_idx = idx;
            }
          }
        }
        yo[i * g.out_w + j] = best;
        if (argmax) (*argmax)[bc * g.out_h * g.out_w + i * g.out_w + j] = best_idx;
      }
  }
  return y;
}

inline TensorBuf max_pool3_backward(const std::vector<std::size_t>& x_shape,
                                    const std::vector<std::size_t>& argmax, const TensorBuf& dy) {
  TensorBuf dx = TensorBuf::zeros(x_shape);
  const std::size_t HW = x_shape[2] * x_shape[3];
  const std::size_t BC = x_shape[0] * x_shape[1];
  const std::size_t ohw = dy.extent(2) * dy.extent(3);
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t p = 0; p < ohw; ++p)
      dx[bc * HW + argmax[bc * ohw + p]] += dy[bc * ohw + p];
  return dx;
}

// 2x2 stride-2 mean, used to align skip inputs across reduction stages.
inline TensorBuf avg_down2(const TensorBuf& x) {
  detail::require_nchw(x, "avg_down2");
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t oh = (H + 1) / 2, ow = (W + 1) / 2;
  TensorBuf y = TensorBuf::zeros({B, C, oh, ow});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* xin = x.data() + bc * H * W;
    double* yo = y.data() + bc * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = 0.0;
        int count = 0;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t r = 2 * i + u, cc = 2 * j + v;
            if (r >= H || cc >= W) continue;
            s += xin[r * W + cc];
            ++count;
          }
        yo[i * ow + j] = s / count;
      }
  }
  return y;
}

inline TensorBuf avg_down2_backward(const std::vector<std::size_t>& x_shape, const TensorBuf& dy) {
  const std::size_t H = x_shape[2], W = x_shape[3];
  const std::size_t oh = (H + 1) / 2, ow = (W + 1) / 2;
  TensorBuf dx = TensorBuf::zeros(x_shape);
  const std::size_t BC = x_shape[0] * x_shape[1];
  for (std::size_t bc = 0; bc < BC; ++bc) {
    const double* dyo = dy.data() + bc * oh * ow;
    double* dxc = dx.data() + bc * H * W;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        int count = 0;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v)
            if (2 * i + u < H && 2 * j + v < W) ++count;
        const double d = dyo[i * ow + j] / count;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) {
            const std::size_t r = 2 * i + u, cc = 2 * j + v;
            if (r >= H || cc >= W) continue;
            dxc[r * W + cc] += d;
          }
      }
  }
  return dx;
}

// (B,C,H,W) -> (B,C) channel means
inline TensorBuf global_avg_pool(const TensorBuf& x) {
  detail::require_nchw(x, "global_avg_pool");
  const std::size_t B = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
  TensorBuf y = TensorBuf::zeros({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    const double* xin = x.data() + bc * HW;
    for (std::size_t p = 0; p < HW; ++p) s += xin[p];
    y[bc] = s / static_cast<double>(HW);
  }
  return y;
}

inline TensorBuf global_avg_pool_backward(const std::vector<std::size_t>& x_shape,
                                          const TensorBuf& dy) {
  const std::size_t HW = x_shape[2] * x_shape[3];
  TensorBuf dx = TensorBuf::zeros(x_shape);
  const std::size_t BC = x_shape[0] * x_shape[1];
  for (std::size_t bc = 0; bc < BC; ++bc) {
    const double d = dy[bc] / static_cast<double>(HW);
    double* dxc = dx.data() + bc * HW;
    for (std::size_t p = 0; p < HW; ++p) dxc[p] = d;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization, per channel over batch x spatial.
// ---------------------------------------------------------------------------

struct BatchNormState {
  TensorBuf running_mean, running_var;
  bool initialized = false;
};

struct BatchNormCache {
  TensorBuf x_hat;
  std::vector<double> inv_std, mean;
  std::size_t count = 0;
};

inline TensorBuf batchnorm_forward(const TensorBuf& gamma, const TensorBuf& beta,
                                   const TensorBuf& x, bool training, BatchNormState& state,
                                   BatchNormCache* cache = nullptr, double momentum = 0.9,
                                   double eps = 1e-5) {
  detail::require_nchw(x, "batchnorm");
  const std::size_t B = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
  if (gamma.size() != C || beta.size() != C)
    fail(ErrorKind::Shape, "batchnorm scale/shift must have one entry per channel");

  TensorBuf y = TensorBuf::zeros(x.shape());
  if (!training) {
    if (!state.initialized)
      fail(ErrorKind::MissingStats, "batchnorm inference requested before any training step");
    for (std::size_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(state.running_var[c] + eps);
      for (std::size_t b = 0; b < B; ++b) {
        const double* xin = x.data() + (b * C + c) * HW;
        double* yo = y.data() + (b * C + c) * HW;
        for (std::size_t p = 0; p < HW; ++p)
          yo[p] = gamma[c] * (xin[p] - state.running_mean[c]) * inv + beta[c];
      }
    }
    return y;
  }

  const double n = static_cast<double>(B * HW);
  if (cache) {
    cache->x_hat = TensorBuf::zeros(x.shape());
    cache->inv_std.assign(C, 0.0);
    cache->mean.assign(C, 0.0);
    cache->count = B * HW;
  }
  if (!state.initialized) {
    state.running_mean = TensorBuf::zeros({C});
    state.running_var = TensorBuf::zeros({C});
  }
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* xin = x.data() + (b * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p) mean += xin[p];
    }
    mean /= n;
    double var = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* xin = x.data() + (b * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p) var += (xin[p] - mean) * (xin[p] - mean);
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t b = 0; b < B; ++b) {
      const double* xin = x.data() + (b * C + c) * HW;
      double* yo = y.data() + (b * C + c) * HW;
      double* xh = cache ? cache->x_hat.data() + (b * C + c) * HW : nullptr;
      for (std::size_t p = 0; p < HW; ++p) {
        const double h = (xin[p] - mean) * inv;
        if (xh) xh[p] = h;
        yo[p] = gamma[c] * h + beta[c];
      }
    }
    if (cache) {
      cache->inv_std[c] = inv;
      cache->mean[c] = mean;
    }
    if (!state.initialized) {
      state.running_mean[c] = mean;
      state.running_var[c] = var;
    } else {
      state.running_mean[c] = momentum * state.running_mean[c] + (1.0 - momentum) * mean;
      state.running_var[c] = momentum * state.running_var[c] + (1.0 - momentum) * var;
    }
  }
  state.initialized = true;
  return y;
}

struct BatchNormGrads {
  TensorBuf dgamma, dbeta, dx;
};

inline BatchNormGrads batchnorm_backward(const TensorBuf& gamma, const BatchNormCache& cache,
                                         const TensorBuf& dy) {
  const std::size_t B = dy.extent(0), C = dy.extent(1), HW = dy.extent(2) * dy.extent(3);
  const double n = static_cast<double>(cache.count);
  BatchNormGrads g;
  g.dgamma = TensorBuf::zeros({C});
  g.dbeta = TensorBuf::zeros({C});
  g.dx = TensorBuf::zeros(dy.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double* dyo = dy.data() + (b * C + c) * HW;
      const double* xh = cache.x_hat.data() + (b * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p) {
        sum_dy += dyo[p];
        sum_dy_xhat += dyo[p] * xh[p];
      }
    }
    g.dgamma[c] = sum_dy_xhat;
    g.dbeta[c] = sum_dy;
    const double scale = gamma[c] * cache.inv_std[c] / n;
    for (std::size_t b = 0; b < B; ++b) {
      const double* dyo = dy.data() + (b * C + c) * HW;
      const double* xh = cache.x_hat.data() + (b * C + c) * HW;
      double* dxo = g.dx.data() + (b * C + c) * HW;
      for (std::size_t p = 0; p < HW; ++p)
        dxo[p] = scale * (n * dyo[p] - sum_dy - xh[p] * sum_dy_xhat);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Raw operator dispatch for the five search-space operators. Separable convs
// read parameters from <prefix>.dw (C,k,k) and <prefix>.pw (C_out,C).
// ---------------------------------------------------------------------------

struct ConvOpsCache {
  OperatorKind kind = OperatorKind::Identity;
  std::size_t stride = 1;
  std::vector<std::size_t> x_shape;
  TensorBuf x;                       // kept for conv/pool backward
  TensorBuf dw_out;                  // depthwise output (input to pointwise)
  std::vector<std::size_t> argmax;   // max pool
};

inline TensorBuf conv_ops(const ParamSet& ps, const std::string& prefix, const TensorBuf& x,
                          OperatorKind kind, std::size_t stride = 1,
                          ConvOpsCache* cache = nullptr) {
  detail::require_nchw(x, "conv_ops");
  detail::require_stride(stride);
  if (cache) {
    cache->kind = kind;
    cache->stride = stride;
    cache->x_shape = x.shape();
  }
  switch (kind) {
    case OperatorKind::Identity:
      if (stride != 1) fail(ErrorKind::Config, "identity operator cannot stride");
      return x;
    case OperatorKind::SepConv3x3:
    case OperatorKind::SepConv5x5: {
      const TensorBuf& dw = ps.at(prefix + ".dw");
      const TensorBuf& pw = ps.at(prefix + ".pw");
      TensorBuf mid = depthwise_forward(dw, x, stride);
      TensorBuf out = conv1x1_forward(pw, mid, 1);
      if (cache) {
        cache->x = x;
        cache->dw_out = std::move(mid);
      }
      return out;
    }
    case OperatorKind::AvgPool3x3:
      if (cache) cache->x = x;
      return avg_pool3_forward(x, stride);
    case OperatorKind::MaxPool3x3: {
      TensorBuf out = max_pool3_forward(x, stride, cache ? &cache->argmax : nullptr);
      if (cache) cache->x = x;
      return out;
    }
  }
  fail(ErrorKind::Config, "unknown operator");
}

inline TensorBuf conv_ops_backward(const ParamSet& ps, const std::string& prefix,
                                   const ConvOpsCache& cache, const TensorBuf& dy,
                                   GradMap& grads) {
  switch (cache.kind) {
    case OperatorKind::Identity:
      return dy;
    case OperatorKind::SepConv3x3:
    case OperatorKind::SepConv5x5: {
      const TensorBuf& dw = ps.at(prefix + ".dw");
      const TensorBuf& pw = ps.at(prefix + ".pw");
      Conv1x1Grads pg = conv1x1_backward(pw, cache.dw_out, dy, 1);
      DepthwiseGrads dg = depthwise_backward(dw, cache.x, pg.dx, cache.stride);
      grad_accumulate(grads, prefix + ".pw", std::move(pg.dw));
      grad_accumulate(grads, prefix + ".dw", std::move(dg.dw));
      return std::move(dg.dx);
    }
    case OperatorKind::AvgPool3x3:
      return avg_pool3_backward(cache.x_shape, dy, cache.stride);
    case OperatorKind::MaxPool3x3:
      return max_pool3_backward(cache.x_shape, cache.argmax, dy);
  }
  fail(ErrorKind::Config, "unknown operator");
}

}  // namespace nases
