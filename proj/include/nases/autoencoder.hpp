#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nases/arch_space.hpp"
#include "nases/optim.hpp"
#include "nases/recurrent.hpp"

namespace nases {

// Architecture autoencoder: the encoder half doubles as the architecture
// simulator (noise -> embedding) and donates its weights to the controller;
// the decoder half maps embeddings back to origin vectors and stays frozen
// during search.
struct AutoencoderModel {
  ParamSet encoder;
  ParamSet decoder;
  SeqDims dims;            // layer_count, token_width, hidden, embed_dim
  std::size_t origin_dim = 0;
  bool pretrained = false;
  std::uint64_t seed = 0;
  std::size_t epochs_trained = 0;
};

inline AutoencoderModel make_autoencoder(const SpaceConfig& space, std::size_t embed_dim,
                                         std::size_t hidden, std::uint64_t seed) {
  AutoencoderModel m;
  m.dims.layer_count = space.layer_count;
  m.dims.token_width = token_width(space);
  m.dims.hidden = hidden;
  m.dims.embed_dim = embed_dim;
  m.origin_dim = origin_dim(space);
  m.seed = seed;
  if (embed_dim == 0 || hidden == 0) fail(ErrorKind::Config, "embed_dim and hidden must be positive");
  if (embed_dim >= m.origin_dim)
    fail(ErrorKind::Config, "embedding dimension must compress the origin space (n < m)");
  Rng enc_rng(derive_seed(seed, /*stream=*/1));
  Rng dec_rng(derive_seed(seed, /*stream=*/2));
  init_encoder_params(m.encoder, m.dims, enc_rng);
  init_decoder_params(m.decoder, m.dims, dec_rng);
  return m;
}

// Reshapes a flat origin vector into the (1,L,W) sequence the encoder eats.
inline TensorBuf origin_to_sequence(const AutoencoderModel& m, const OriginVector& v) {
  if (v.size() != m.origin_dim) fail(ErrorKind::Shape, "origin vector has wrong dimension");
  return TensorBuf({1, m.dims.layer_count, m.dims.token_width}, std::vector<double>(v));
}

enum class PretrainSampleKind { Uniform, OneHot };

// Uniform[0,1] over every coordinate; OneHot instead encodes random valid
// architectures (exposed behind a flag, the default mirrors the uniform
// pretraining distribution).
inline TensorBuf sample_pretrain_batch(std::size_t batch, const SpaceConfig& cfg,
                                       std::uint64_t seed,
                                       PretrainSampleKind kind = PretrainSampleKind::Uniform) {
  if (batch < 1) fail(ErrorKind::Config, "batch must be at least 1");
  const std::size_t L = cfg.layer_count, W = token_width(cfg);
  TensorBuf x = TensorBuf::zeros({batch, L, W});
  Rng rng(seed);
  if (kind == PretrainSampleKind::Uniform) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  } else {
    for (std::size_t r = 0; r < batch; ++r) {
      OriginVector v = encode_origin(random_architecture(cfg, rng.next_u64()), cfg);
      std::copy(v.begin(), v.end(), x.data() + r * L * W);
    }
  }
  return x;
}

struct AeForward {
  TensorBuf embedding;       // (B,n)
  TensorBuf reconstruction;  // (B,L,W), entries in (0,1)
};

inline AeForward ae_forward(const AutoencoderModel& m, const TensorBuf& x,
                            EncoderCache* enc_cache = nullptr, DecoderCache* dec_cache = nullptr) {
  AeForward out;
  out.embedding = encoder_forward(m.encoder, m.dims, x, enc_cache);
  out.reconstruction = decoder_forward(m.decoder, m.dims, out.embedding, dec_cache);
  return out;
}

// Simulator half: s_v applied to an origin-shaped noise vector.
inline Embedding simulate(const AutoencoderModel& m, const OriginVector& noise) {
  TensorBuf e = encoder_forward(m.encoder, m.dims, origin_to_sequence(m, noise));
  return Embedding(e.data(), e.data() + e.size());
}

// Decoder half: f_theta applied to an embedding; output lies in (0,1)^m.
inline OriginVector decode(const AutoencoderModel& m, const Embedding& e) {
  if (e.size() != m.dims.embed_dim) fail(ErrorKind::Shape, "embedding has wrong dimension");
  TensorBuf eb({1, m.dims.embed_dim}, std::vector<double>(e));
  TensorBuf y = decoder_forward(m.decoder, m.dims, eb);
  return OriginVector(y.data(), y.data() + y.size());
}

struct PretrainOptions {
  std::size_t epochs = 50;
  std::size_t batches_per_epoch = 256;
  std::size_t batch = 64;
  double lr = 1e-5;
  std::uint64_t seed = 0;
  std::size_t holdout = 4096;
  PretrainSampleKind sample_kind = PretrainSampleKind::Uniform;
};

struct PretrainReport {
  std::size_t epochs = 0;
  double initial_holdout_mse = 0.0;  // before any update (epoch 0)
  double final_train_mse = 0.0;
  double final_holdout_mse = 0.0;
  std::vector<std::pair<std::size_t, double>> loss_curve;  // holdout MSE per epoch, 1-based
  bool improved = false;
};

namespace detail {

inline double holdout_mse(const AutoencoderModel& m, const TensorBuf& holdout) {
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t B = holdout.extent(0);
  const std::size_t chunk = 256;
  const std::size_t L = holdout.extent(1), W = holdout.extent(2);
  for (std::size_t off = 0; off < B; off += chunk) {
    const std::size_t n = std::min(chunk, B - off);
    TensorBuf x = TensorBuf::zeros({n, L, W});
    std::copy(holdout.data() + off * L * W, holdout.data() + (off + n) * L * W, x.data());
    AeForward f = ae_forward(m, x);
    total += mse(f.reconstruction, x) * static_cast<double>(n);
    count += n;
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

// Alg: sample a uniform batch, reconstruct, Adam on the least-square error.
// Holdout MSE uses a disjoint seeded sample, measured before training and
// after every epoch. On a non-finite loss the last epoch snapshot is restored
// and a numeric error raised.
inline PretrainReport pretrain(AutoencoderModel& m, const PretrainOptions& opt) {
  if (opt.epochs < 1) fail(ErrorKind::Config, "epochs must be at least 1");
  if (opt.batches_per_epoch < 1 || opt.batch < 1)
    fail(ErrorKind::Config, "batch settings must be at least 1");
  SpaceConfig space{m.dims.layer_count, true};

  const TensorBuf holdout =
      sample_pretrain_batch(opt.holdout, space, derive_seed(opt.seed, 101), opt.sample_kind);

  PretrainReport report;
  report.epochs = opt.epochs;
  report.initial_holdout_mse = detail::holdout_mse(m, holdout);

  ParamSet enc_snapshot = m.encoder, dec_snapshot = m.decoder;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    double train_sum = 0.0;
    for (std::size_t b = 0; b < opt.batches_per_epoch; ++b) {
      const std::uint64_t batch_seed =
          derive_seed(opt.seed, 200, (epoch - 1) * opt.batches_per_epoch + b);
      TensorBuf x = sample_pretrain_batch(opt.batch, space, batch_seed, opt.sample_kind);
      EncoderCache enc_cache;
      DecoderCache dec_cache;
      try {
        AeForward f = ae_forward(m, x, &enc_cache, &dec_cache);
        const double loss = mse(f.reconstruction, x);
        if (!std::isfinite(loss)) fail(ErrorKind::Numeric, "non-finite pretraining loss");
        train_sum += loss;
        TensorBuf d_recon = mse_grad(f.reconstruction, x);
        GradMap dec_grads;
        TensorBuf d_embed = decoder_backward(m.decoder, m.dims, dec_cache, d_recon, dec_grads);
        GradMap enc_grads;
        encoder_backward(m.encoder, m.dims, enc_cache, d_embed, enc_grads);
        adam_step(m.encoder, enc_grads, opt.lr);
        adam_step(m.decoder, dec_grads, opt.lr);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        m.encoder = std::move(enc_snapshot);  // roll back to the last epoch boundary
        m.decoder = std::move(dec_snapshot);
        fail(ErrorKind::Numeric,
             std::string("pretraining aborted, last epoch checkpoint retained: ") + e.what());
      }
    }
    report.final_train_mse = train_sum / static_cast<double>(opt.batches_per_epoch);
    report.final_holdout_mse = detail::holdout_mse(m, holdout);
    report.loss_curve.emplace_back(epoch, report.final_holdout_mse);
    enc_snapshot = m.encoder;
    dec_snapshot = m.decoder;
  }
  report.improved = report.final_holdout_mse < report.initial_holdout_mse;
  m.pretrained = true;
  m.epochs_trained += opt.epochs;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/encoder.bin + <dir>/decoder.bin in the ParamSet format,
// with a JSON sidecar <dir>/model.json.
// ---------------------------------------------------------------------------

inline void save_autoencoder(const AutoencoderModel& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(m.encoder, dir + "/encoder.bin");
  save_checkpoint(m.decoder, dir + "/decoder.bin");
  nlohmann::json meta{{"embed_dim", m.dims.embed_dim},
                      {"origin_dim", m.origin_dim},
                      {"layer_count", m.dims.layer_count},
                      {"seed", m.seed},
                      {"epochs", m.epochs_trained}};
  std::ofstream os(dir + "/model.json", std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write sidecar in " + dir);
  os << meta.dump(2) << "\n";
}

inline AutoencoderModel load_autoencoder(const std::string& dir) {
  const std::string sidecar = dir + "/model.json";
  if (!std::filesystem::exists(sidecar))
    fail(ErrorKind::NotPretrained, "no autoencoder checkpoint at " + dir);
  std::ifstream is(sidecar);
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded()) fail(ErrorKind::Format, "invalid sidecar JSON in " + dir);

  AutoencoderModel m;
  m.encoder = load_checkpoint(dir + "/encoder.bin");
  m.decoder = load_checkpoint(dir + "/decoder.bin");
  m.dims = encoder_dims(m.encoder);
  m.origin_dim = m.dims.layer_count * m.dims.token_width;
  m.seed = meta.value("seed", std::uint64_t{0});
  m.epochs_trained = meta.value("epochs", std::size_t{0});
  m.pretrained = m.epochs_trained > 0;
  if (meta.value("embed_dim", std::size_t{0}) != m.dims.embed_dim ||
      meta.value("origin_dim", std::size_t{0}) != m.origin_dim ||
      meta.value("layer_count", std::size_t{0}) != m.dims.layer_count)
    fail(ErrorKind::Format, "sidecar metadata disagrees with checkpoint shapes in " + dir);
  return m;
}

}  // namespace nases
