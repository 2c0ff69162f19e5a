#include <doctest.h>

#include <filesystem>

#include "nases/autoencoder.hpp"
#include "nases/grad_check.hpp"

using namespace nases;

namespace {

const SpaceConfig kTinySpace{3, true};  // m = 3*7 = 21

AutoencoderModel tiny_model(std::uint64_t seed = 5) {
  return make_autoencoder(kTinySpace, /*embed_dim=*/4, /*hidden=*/16, seed);
}

}  // namespace

TEST_CASE("autoencoder construction validates compression") {
  CHECK_THROWS_AS(make_autoencoder(kTinySpace, 21, 16, 1), Error);
  CHECK_THROWS_AS(make_autoencoder(kTinySpace, 0, 16, 1), Error);
  AutoencoderModel m = tiny_model();
  CHECK(m.origin_dim == 21);
  CHECK(m.dims.token_width == 7);
}

TEST_CASE("pretrain batches are uniform in [0,1] and seeded") {
  TensorBuf a = sample_pretrain_batch(8, kTinySpace, 3);
  TensorBuf b = sample_pretrain_batch(8, kTinySpace, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= 0.0);
    CHECK(a[i] < 1.0);
    CHECK(a[i] == b[i]);
  }

  TensorBuf big = sample_pretrain_batch(5000, kTinySpace, 11);
  double mean = 0.0;
  for (std::size_t i = 0; i < big.size(); ++i) mean += big[i];
  mean /= static_cast<double>(big.size());  // 105k draws
  CHECK(mean > 0.497);
  CHECK(mean < 0.503);
}

TEST_CASE("one-hot pretrain batches encode valid architectures") {
  TensorBuf x = sample_pretrain_batch(16, kTinySpace, 7, PretrainSampleKind::OneHot);
  const std::size_t m = origin_dim(kTinySpace);
  for (std::size_t r = 0; r < 16; ++r) {
    OriginVector v(x.data() + r * m, x.data() + (r + 1) * m);
    Architecture a = discretize(v, kTinySpace);
    CHECK(encode_origin(a, kTinySpace) == v);
  }
}

TEST_CASE("ae_forward shapes and output range") {
  AutoencoderModel m = tiny_model();
  TensorBuf x = sample_pretrain_batch(6, kTinySpace, 1);
  AeForward f = ae_forward(m, x);
  REQUIRE(f.embedding.shape() == std::vector<std::size_t>{6, 4});
  REQUIRE(f.reconstruction.shape() == x.shape());
  for (std::size_t i = 0; i < f.reconstruction.size(); ++i) {
    CHECK(f.reconstruction[i] > 0.0);
    CHECK(f.reconstruction[i] < 1.0);
  }
  const double loss = mse(f.reconstruction, x);
  CHECK(std::isfinite(loss));
  CHECK(loss < 1.0);
}

TEST_CASE("simulate and decode are typed and deterministic") {
  AutoencoderModel m = tiny_model();
  OriginVector noise(m.origin_dim);
  Rng rng(9);
  for (double& v : noise) v = rng.uniform();

  Embedding e1 = simulate(m, noise);
  Embedding e2 = simulate(m, noise);
  REQUIRE(e1.size() == 4);
  CHECK(e1 == e2);

  OriginVector y = decode(m, e1);
  REQUIRE(y.size() == m.origin_dim);
  for (double v : y) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_NOTHROW(validate_architecture(discretize(y, kTinySpace), kTinySpace));

  CHECK_THROWS_AS(simulate(m, OriginVector(3, 0.0)), Error);
  CHECK_THROWS_AS(decode(m, Embedding(9, 0.0)), Error);
}

TEST_CASE("full autoencoder gradient matches finite differences") {
  // joint check through decoder feedback, bottleneck and encoder unroll
  const SpaceConfig space{2, true};
  AutoencoderModel m = make_autoencoder(space, 3, 5, 17);
  TensorBuf x = sample_pretrain_batch(2, space, 23);

  ParamSet joint;
  for (const auto& [name, p] : m.encoder.entries) joint.insert("enc::" + name, p.value);
  for (const auto& [name, p] : m.decoder.entries) joint.insert("dec::" + name, p.value);

  auto rebuild = [&](const ParamSet& j) {
    AutoencoderModel copy = m;
    for (auto& [name, p] : copy.encoder.entries) p.value = j.at("enc::" + name);
    for (auto& [name, p] : copy.decoder.entries) p.value = j.at("dec::" + name);
    return copy;
  };
  auto f = [&](const ParamSet& j) {
    AutoencoderModel copy = rebuild(j);
    return mse(ae_forward(copy, x).reconstruction, x);
  };

  EncoderCache ec;
  DecoderCache dc;
  AeForward fw = ae_forward(m, x, &ec, &dc);
  GradMap dec_grads, enc_grads;
  TensorBuf d_embed =
      decoder_backward(m.decoder, m.dims, dc, mse_grad(fw.reconstruction, x), dec_grads);
  encoder_backward(m.encoder, m.dims, ec, d_embed, enc_grads);

  GradMap analytic;
  for (auto& [name, g] : enc_grads) analytic.emplace("enc::" + name, g);
  for (auto& [name, g] : dec_grads) analytic.emplace("dec::" + name, g);
  GradMap numeric = finite_diff_grad(f, joint);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("short pretraining run reduces holdout MSE") {
  AutoencoderModel m = tiny_model(41);
  PretrainOptions opt;
  opt.epochs = 3;
  opt.batches_per_epoch = 40;
  opt.batch = 16;
  opt.lr = 1e-3;
  opt.holdout = 256;
  opt.seed = 13;
  PretrainReport r = pretrain(m, opt);
  CHECK(r.loss_curve.size() == 3);
  CHECK(r.final_holdout_mse < r.initial_holdout_mse);
  CHECK(r.improved);
  CHECK(m.pretrained);

  PretrainOptions bad;
  bad.epochs = 0;
  CHECK_THROWS_AS(pretrain(m, bad), Error);
}

TEST_CASE("pretraining loss equals an independent MSE computation") {
  AutoencoderModel m = tiny_model(3);
  TensorBuf x = sample_pretrain_batch(4, kTinySpace, 2);
  AeForward f = ae_forward(m, x);
  double manual = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = f.reconstruction[i] - x[i];
    manual += d * d;
  }
  manual /= static_cast<double>(x.size());
  CHECK(mse(f.reconstruction, x) == doctest::Approx(manual).epsilon(1e-15));
}

TEST_CASE("autoencoder checkpoint reload reproduces forward outputs") {
  AutoencoderModel m = tiny_model(77);
  m.pretrained = true;
  m.epochs_trained = 1;
  const std::string dir =
      (std::filesystem::temp_directory_path() / "nases_ae_ckpt_test").string();
  save_autoencoder(m, dir);
  AutoencoderModel back = load_autoencoder(dir);

  CHECK(back.pretrained);
  CHECK(back.dims.embed_dim == m.dims.embed_dim);
  TensorBuf x = sample_pretrain_batch(3, kTinySpace, 5);
  AeForward a = ae_forward(m, x);
  AeForward b = ae_forward(back, x);
  for (std::size_t i = 0; i < a.reconstruction.size(); ++i)
    CHECK(a.reconstruction[i] == b.reconstruction[i]);
  for (std::size_t i = 0; i < a.embedding.size(); ++i) CHECK(a.embedding[i] == b.embedding[i]);

  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_autoencoder(dir), Error);
}
