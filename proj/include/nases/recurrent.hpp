#pragma once

#include <string>
#include <vector>

#include "nases/lstm.hpp"

namespace nases {

// Sequence encoder and decoder shared by the autoencoder and the controller.
// The encoder runs an LSTM over L tokens of width W and projects the final
// hidden state to an embedding ("lstm.*" + "proj.*"). The decoder projects an
// embedding to the initial LSTM state and unrolls L steps, feeding each
// step's sigmoid output token back in as the next input ("init.*" + "lstm.*"
// + "head.*").

struct SeqDims {
  std::size_t layer_count = 0;   // L
  std::size_t token_width = 0;   // W
  std::size_t hidden = 0;        // H
  std::size_t embed_dim = 0;     // n
};

inline void init_encoder_params(ParamSet& ps, const SeqDims& d, Rng& rng) {
  lstm_init_params(ps, "lstm", {d.token_width, d.hidden}, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d.hidden));
  ps.insert("proj.W", uniform_init({d.embed_dim, d.hidden}, bound, rng));
  ps.insert("proj.b", uniform_init({d.embed_dim}, bound, rng));
}

inline void init_decoder_params(ParamSet& ps, const SeqDims& d, Rng& rng) {
  const double bound_n = 1.0 / std::sqrt(static_cast<double>(d.embed_dim));
  ps.insert("init.W", uniform_init({2 * d.hidden, d.embed_dim}, bound_n, rng));
  ps.insert("init.b", uniform_init({2 * d.hidden}, bound_n, rng));
  lstm_init_params(ps, "lstm", {d.token_width, d.hidden}, rng);
  const double bound_h = 1.0 / std::sqrt(static_cast<double>(d.hidden));
  ps.insert("head.W", uniform_init({d.token_width, d.hidden}, bound_h, rng));
  ps.insert("head.b", uniform_init({d.token_width}, bound_h, rng));
}

// Recovers dims from parameter shapes; the token layout fixes L = W - 4.
inline SeqDims encoder_dims(const ParamSet& ps) {
  SeqDims d;
  const LstmDims l = lstm_dims(ps, "lstm");
  d.token_width = l.input;
  d.hidden = l.hidden;
  d.embed_dim = ps.at("proj.W").extent(0);
  d.layer_count = d.token_width - 4;
  return d;
}

// Copies token t out of a (B,L,W) sequence as a contiguous (B,W) tensor.
inline TensorBuf sequence_token(const TensorBuf& x, std::size_t t) {
  const std::size_t B = x.extent(0), L = x.extent(1), W = x.extent(2);
  TensorBuf tok = TensorBuf::zeros({B, W});
  for (std::size_t r = 0; r < B; ++r)
    std::copy(x.data() + (r * L + t) * W, x.data() + (r * L + t + 1) * W, tok.data() + r * W);
  return tok;
}

struct EncoderCache {
  std::vector<LstmStepCache> steps;
  TensorBuf h_final;  // (B,H)
};

inline TensorBuf encoder_forward(const ParamSet& ps, const SeqDims& d, const TensorBuf& x,
                                 EncoderCache* cache = nullptr) {
  if (x.rank() != 3 || x.extent(1) != d.layer_count || x.extent(2) != d.token_width)
    fail(ErrorKind::Shape, "encoder_forward expects (batch, L, W) input");
  const std::size_t B = x.extent(0);
  LstmState state{TensorBuf::zeros({B, d.hidden}), TensorBuf::zeros({B, d.hidden})};
  if (cache) cache->steps.resize(d.layer_count);
  for (std::size_t t = 0; t < d.layer_count; ++t) {
    TensorBuf tok = sequence_token(x, t);
    state = lstm_step(ps, "lstm", tok, state, cache ? &cache->steps[t] : nullptr);
  }
  if (cache) cache->h_final = state.h;
  return dense_forward(ps, "proj", state.h);
}

// Backpropagates d(embedding) through the projection and the unrolled LSTM.
// Token gradients are discarded (encoder inputs are data, not parameters).
inline void encoder_backward(const ParamSet& ps, const SeqDims& d, const EncoderCache& cache,
                             const TensorBuf& d_embedding, GradMap& grads) {
  const std::size_t B = d_embedding.extent(0);
  TensorBuf dh = dense_backward(ps, "proj", cache.h_final, d_embedding, grads);
  TensorBuf dc = TensorBuf::zeros({B, d.hidden});
  for (std::size_t t = d.layer_count; t-- > 0;) {
    LstmStepGrads g = lstm_step_backward(ps, "lstm", cache.steps[t], dh, dc, grads);
    dh = std::move(g.dh_prev);
    dc = std::move(g.dc_prev);
  }
}

struct DecoderCache {
  TensorBuf embedding;               // (B,n)
  TensorBuf state0;                  // (B,2H) pre-split initial state
  std::vector<LstmStepCache> steps;  // L entries
  std::vector<TensorBuf> h;          // h_t per step, (B,H)
  std::vector<TensorBuf> y;          // sigmoid output tokens, (B,W)
};

inline TensorBuf decoder_forward(const ParamSet& ps, const SeqDims& d, const TensorBuf& embedding,
                                 DecoderCache* cache = nullptr) {
  if (embedding.rank() != 2 || embedding.extent(1) != d.embed_dim)
    fail(ErrorKind::Shape, "decoder_forward expects (batch, n) embedding");
  const std::size_t B = embedding.extent(0);
  const std::size_t H = d.hidden, W = d.token_width, L = d.layer_count;

  TensorBuf s0 = dense_forward(ps, "init", embedding);  // (B,2H)
  LstmState state{TensorBuf::zeros({B, H}), TensorBuf::zeros({B, H})};
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t j = 0; j < H; ++j) {
      state.h[r * H + j] = s0[r * 2 * H + j];
      state.c[r * H + j] = s0[r * 2 * H + H + j];
    }

  if (cache) {
    cache->embedding = embedding;
    cache->state0 = s0;
    cache->steps.resize(L);
    cache->h.resize(L);
    cache->y.resize(L);
  }

  TensorBuf out = TensorBuf::zeros({B, L, W});
  TensorBuf input = TensorBuf::zeros({B, W});  // zero token at step 1
  for (std::size_t t = 0; t < L; ++t) {
    state = lstm_step(ps, "lstm", input, state, cache ? &cache->steps[t] : nullptr);
    TensorBuf z = dense_forward(ps, "head", state.h);
    TensorBuf y = sigmoid(z);
    for (std::size_t r = 0; r < B; ++r)
      std::copy(y.data() + r * W, y.data() + (r + 1) * W, out.data() + (r * L + t) * W);
    if (cache) {
      cache->h[t] = state.h;
      cache->y[t] = y;
    }
    input = std::move(y);  // feedback: next input is this step's output token
  }
  return out;
}

// Backward through the decoder including the output-feedback path; returns
// d(embedding). d_recon is (B,L,W) against the sigmoid outputs.
inline TensorBuf decoder_backward(const ParamSet& ps, const SeqDims& d, const DecoderCache& cache,
                                  const TensorBuf& d_recon, GradMap& grads) {
  const std::size_t B = d_recon.extent(0);
  const std::size_t H = d.hidden, W = d.token_width, L = d.layer_count;

  TensorBuf dh_carry = TensorBuf::zeros({B, H});
  TensorBuf dc_carry = TensorBuf::zeros({B, H});
  TensorBuf dx_next;  // gradient w.r.t. step t+1's input token == y_t
  for (std::size_t t = L; t-- > 0;) {
    TensorBuf dy = sequence_token(d_recon, t);
    if (dx_next.size() != 0)
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += dx_next[i];
    // through the sigmoid head
    TensorBuf dz = TensorBuf::zeros({B, W});
    const TensorBuf& y = cache.y[t];
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = dy[i] * y[i] * (1.0 - y[i]);
    TensorBuf dh = dense_backward(ps, "head", cache.h[t], dz, grads);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_carry[i];
    LstmStepGrads g = lstm_step_backward(ps, "lstm", cache.steps[t], dh, dc_carry, grads);
    dx_next = std::move(g.dx);
    dh_carry = std::move(g.dh_prev);
    dc_carry = std::move(g.dc_prev);
  }

  TensorBuf ds0 = TensorBuf::zeros({B, 2 * H});
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t j = 0; j < H; ++j) {
      ds0[r * 2 * H + j] = dh_carry[r * H + j];
      ds0[r * 2 * H + H + j] = dc_carry[r * H + j];
    }
  return dense_backward(ps, "init", cache.embedding, ds0, grads);
}

}  // namespace nases
