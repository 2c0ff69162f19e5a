#include <doctest.h>

#include "nases/grad_check.hpp"
#include "nases/recurrent.hpp"

using namespace nases;

namespace {

TensorBuf random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  TensorBuf t = TensorBuf::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

}  // namespace

TEST_CASE("lstm with zero parameters and state emits zero") {
  ParamSet ps;
  ps.insert("lstm.W_ih", TensorBuf::zeros({4 * 3, 2}));
  ps.insert("lstm.W_hh", TensorBuf::zeros({4 * 3, 3}));
  ps.insert("lstm.b", TensorBuf::zeros({4 * 3}));
  TensorBuf x({1, 2}, {0.7, -0.3});
  LstmState s{TensorBuf::zeros({1, 3}), TensorBuf::zeros({1, 3})};
  LstmState out = lstm_step(ps, "lstm", x, s);
  for (std::size_t i = 0; i < out.h.size(); ++i) CHECK(out.h[i] == 0.0);
}

TEST_CASE("lstm step is bitwise deterministic") {
  Rng rng(2);
  ParamSet ps;
  lstm_init_params(ps, "lstm", {3, 4}, rng);
  TensorBuf x = random_tensor({2, 3}, rng);
  LstmState s{random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)};
  LstmState a = lstm_step(ps, "lstm", x, s);
  LstmState b = lstm_step(ps, "lstm", x, s);
  for (std::size_t i = 0; i < a.h.size(); ++i) {
    CHECK(a.h[i] == b.h[i]);
    CHECK(a.c[i] == b.c[i]);
  }
}

TEST_CASE("lstm step gradient matches finite differences") {
  Rng rng(4);
  ParamSet ps;
  lstm_init_params(ps, "lstm", {3, 4}, rng);
  TensorBuf x = random_tensor({2, 3}, rng);
  LstmState s{random_tensor({2, 4}, rng, 0.5), random_tensor({2, 4}, rng, 0.5)};
  TensorBuf wh = random_tensor({2, 4}, rng);  // scalarizer over h'

  auto f = [&](const ParamSet& p) {
    LstmState out = lstm_step(p, "lstm", x, s);
    double v = 0.0;
    for (std::size_t i = 0; i < out.h.size(); ++i) v += wh[i] * out.h[i];
    return v;
  };

  LstmStepCache cache;
  lstm_step(ps, "lstm", x, s, &cache);
  GradMap analytic;
  lstm_step_backward(ps, "lstm", cache, wh, TensorBuf::zeros({2, 4}), analytic);
  GradMap numeric = finite_diff_grad(f, ps);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("lstm rejects mismatched shapes") {
  Rng rng(6);
  ParamSet ps;
  lstm_init_params(ps, "lstm", {3, 4}, rng);
  TensorBuf x = TensorBuf::zeros({2, 5});
  LstmState s{TensorBuf::zeros({2, 4}), TensorBuf::zeros({2, 4})};
  CHECK_THROWS_AS(lstm_step(ps, "lstm", x, s), Error);
}

TEST_CASE("encoder gradient matches finite differences") {
  const SeqDims d{2, 6, 4, 3};  // L=2, W=6, H=4, n=3
  Rng rng(8);
  ParamSet ps;
  init_encoder_params(ps, d, rng);
  TensorBuf x = random_tensor({2, d.layer_count, d.token_width}, rng);
  TensorBuf we = random_tensor({2, d.embed_dim}, rng);

  auto f = [&](const ParamSet& p) {
    TensorBuf e = encoder_forward(p, d, x);
    double v = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) v += we[i] * e[i];
    return v;
  };

  EncoderCache cache;
  encoder_forward(ps, d, x, &cache);
  GradMap analytic;
  encoder_backward(ps, d, cache, we, analytic);
  GradMap numeric = finite_diff_grad(f, ps);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("decoder gradient matches finite differences through feedback") {
  const SeqDims d{3, 6, 4, 3};
  Rng rng(9);
  ParamSet ps;
  init_decoder_params(ps, d, rng);
  TensorBuf e = random_tensor({2, d.embed_dim}, rng);
  TensorBuf target = random_tensor({2, d.layer_count, d.token_width}, rng, 0.4);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += 0.5;

  auto f = [&](const ParamSet& p) { return mse(decoder_forward(p, d, e), target); };

  DecoderCache cache;
  TensorBuf y = decoder_forward(ps, d, e, &cache);
  GradMap analytic;
  decoder_backward(ps, d, cache, mse_grad(y, target), analytic);
  GradMap numeric = finite_diff_grad(f, ps);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("decoder output stays inside the unit hypercube") {
  const SeqDims d{4, 8, 8, 4};
  Rng rng(10);
  ParamSet ps;
  init_decoder_params(ps, d, rng);
  TensorBuf e = random_tensor({3, d.embed_dim}, rng, 3.0);
  TensorBuf y = decoder_forward(ps, d, e);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] > 0.0);
    CHECK(y[i] < 1.0);
  }
}
