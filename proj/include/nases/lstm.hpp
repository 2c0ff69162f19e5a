#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "nases/init.hpp"
#include "nases/kernels.hpp"
#include "nases/param_set.hpp"

namespace nases {

// Single LSTM cell, batched. Parameters live in a ParamSet under
//   <prefix>.W_ih (4H,W)  <prefix>.W_hh (4H,H)  <prefix>.b (4H)
// with gate rows stacked in the order input, forget, candidate, output.

struct LstmDims {
  std::size_t input = 0;
  std::size_t hidden = 0;
};

inline void lstm_init_params(ParamSet& ps, const std::string& prefix, LstmDims d, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d.hidden));
  ps.insert(prefix + ".W_ih", uniform_init({4 * d.hidden, d.input}, bound, rng));
  ps.insert(prefix + ".W_hh", uniform_init({4 * d.hidden, d.hidden}, bound, rng));
  ps.insert(prefix + ".b", uniform_init({4 * d.hidden}, bound, rng));
}

inline LstmDims lstm_dims(const ParamSet& ps, const std::string& prefix) {
  const TensorBuf& w = ps.at(prefix + ".W_ih");
  return {w.extent(1), w.extent(0) / 4};
}

struct LstmStepCache {
  TensorBuf x, h_prev, c_prev;
  TensorBuf i, f, g, o;  // post-activation gates, (B,H) each
  TensorBuf c, tanh_c;
};

struct LstmState {
  TensorBuf h, c;  // (B,H)
};

namespace detail {

// (R,C) -> (C,R); the gate matrices are transposed per step so the gate GEMM
// runs with a contiguous inner loop.
inline TensorBuf transposed(const TensorBuf& m) {
  const std::size_t R = m.extent(0), C = m.extent(1);
  TensorBuf t = TensorBuf::zeros({C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) t[c * R + r] = m[r * C + c];
  return t;
}

}  // namespace detail

inline LstmState lstm_step(const ParamSet& ps, const std::string& prefix, const TensorBuf& x,
                           const LstmState& state, LstmStepCache* cache = nullptr) {
  const TensorBuf& W_ih = ps.at(prefix + ".W_ih");
  const TensorBuf& W_hh = ps.at(prefix + ".W_hh");
  const TensorBuf& b = ps.at(prefix + ".b");
  const std::size_t H = W_hh.extent(1);
  const std::size_t W = W_ih.extent(1);
  if (x.rank() != 2 || x.extent(1) != W) fail(ErrorKind::Shape, "lstm_step: bad input width");
  const std::size_t B = x.extent(0);
  if (state.h.shape() != std::vector<std::size_t>{B, H} || !state.h.same_shape(state.c))
    fail(ErrorKind::Shape, "lstm_step: bad state shape");

  // z = x W_ih^T + h W_hh^T + b, (B,4H)
  TensorBuf z = TensorBuf::zeros({B, 4 * H});
  for (std::size_t r = 0; r < B; ++r)
    std::copy(b.data(), b.data() + 4 * H, z.data() + r * 4 * H);
  const TensorBuf W_ih_t = detail::transposed(W_ih);
  const TensorBuf W_hh_t = detail::transposed(W_hh);
  gemm_acc(B, W, 4 * H, x.data(), W_ih_t.data(), z.data());
  gemm_acc(B, H, 4 * H, state.h.data(), W_hh_t.data(), z.data());

  TensorBuf gi = TensorBuf::zeros({B, H}), gf = TensorBuf::zeros({B, H});
  TensorBuf gg = TensorBuf::zeros({B, H}), go = TensorBuf::zeros({B, H});
  TensorBuf c2 = TensorBuf::zeros({B, H}), tc = TensorBuf::zeros({B, H});
  TensorBuf h2 = TensorBuf::zeros({B, H});
  for (std::size_t r = 0; r < B; ++r) {
    const double* zr = z.data() + r * 4 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double vi = sigmoid(zr[j]);
      const double vf = sigmoid(zr[H + j]);
      const double vg = std::tanh(zr[2 * H + j]);
      const double vo = sigmoid(zr[3 * H + j]);
      const double vc = vf * state.c[r * H + j] + vi * vg;
      const double vt = std::tanh(vc);
      gi[r * H + j] = vi;
      gf[r * H + j] = vf;
      gg[r * H + j] = vg;
      go[r * H + j] = vo;
      c2[r * H + j] = vc;
      tc[r * H + j] = vt;
      h2[r * H + j] = vo * vt;
    }
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->i = gi;
    cache->f = gf;
    cache->g = gg;
    cache->o = go;
    cache->c = c2;
    cache->tanh_c = tc;
  }
  return {std::move(h2), std::move(c2)};
}

struct LstmStepGrads {
  TensorBuf dx, dh_prev, dc_prev;
};

// dh_next/dc_next are the gradients flowing into (h', c'); parameter
// gradients accumulate into grads.
inline LstmStepGrads lstm_step_backward(const ParamSet& ps, const std::string& prefix,
                                        const LstmStepCache& cache, const TensorBuf& dh_next,
                                        const TensorBuf& dc_next, GradMap& grads) {
  const TensorBuf& W_ih = ps.at(prefix + ".W_ih");
  const TensorBuf& W_hh = ps.at(prefix + ".W_hh");
  const std::size_t H = W_hh.extent(1);
  const std::size_t W = W_ih.extent(1);
  const std::size_t B = cache.x.extent(0);

  TensorBuf dz = TensorBuf::zeros({B, 4 * H});
  TensorBuf dc_prev = TensorBuf::zeros({B, H});
  for (std::size_t r = 0; r < B; ++r) {
    double* dzr = dz.data() + r * 4 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const std::size_t k = r * H + j;
      const double vi = cache.i[k], vf = cache.f[k], vg = cache.g[k], vo = cache.o[k];
      const double tc = cache.tanh_c[k];
      const double dh = dh_next[k];
      const double dc = dc_next[k] + dh * vo * (1.0 - tc * tc);
      const double d_o = dh * tc;
      const double d_i = dc * vg;
      const double d_g = dc * vi;
      const double d_f = dc * cache.c_prev[k];
      dc_prev[k] = dc * vf;
      dzr[j] = d_i * vi * (1.0 - vi);
      dzr[H + j] = d_f * vf * (1.0 - vf);
      dzr[2 * H + j] = d_g * (1.0 - vg * vg);
      dzr[3 * H + j] = d_o * vo * (1.0 - vo);
    }
  }

  TensorBuf dW_ih = TensorBuf::zeros({4 * H, W});
  TensorBuf dW_hh = TensorBuf::zeros({4 * H, H});
  TensorBuf db = TensorBuf::zeros({4 * H});
  gemm_tn_acc(4 * H, B, W, dz.data(), cache.x.data(), dW_ih.data());
  gemm_tn_acc(4 * H, B, H, dz.data(), cache.h_prev.data(), dW_hh.data());
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t j = 0; j < 4 * H; ++j) db[j] += dz[r * 4 * H + j];

  LstmStepGrads out;
  out.dx = TensorBuf::zeros({B, W});
  out.dh_prev = TensorBuf::zeros({B, H});
  out.dc_prev = std::move(dc_prev);
  gemm_acc(B, 4 * H, W, dz.data(), W_ih.data(), out.dx.data());
  gemm_acc(B, 4 * H, H, dz.data(), W_hh.data(), out.dh_prev.data());

  grad_accumulate(grads, prefix + ".W_ih", std::move(dW_ih));
  grad_accumulate(grads, prefix + ".W_hh", std::move(dW_hh));
  grad_accumulate(grads, prefix + ".b", std::move(db));
  return out;
}

}  // namespace nases
