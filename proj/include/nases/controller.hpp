#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nases/autoencoder.hpp"

namespace nases {

// Policy network g_k: same shape as the simulator/encoder, warm-started from
// its pretrained weights and fine-tuned by REINFORCE. Actions are embeddings
// drawn from an isotropic Gaussian around the deterministic encoder output.
struct ControllerModel {
  ParamSet params;  // encoder-shaped: lstm.* + proj.*
  SeqDims dims;
  std::size_t origin_dim = 0;
  double sigma = 0.1;
  double baseline = 0.0;
  bool baseline_set = false;
  double baseline_decay = 0.95;
  std::uint64_t updates = 0;
};

inline void validate_controller_settings(double sigma, double baseline_decay) {
  if (!(sigma > 0.0)) fail(ErrorKind::Config, "sigma must be positive");
  if (!(baseline_decay > 0.0 && baseline_decay < 1.0))
    fail(ErrorKind::Config, "baseline decay must lie in (0,1)");
}

// Deep copy of the simulator weights; later controller updates never touch
// the autoencoder.
inline ControllerModel init_from_simulator(const AutoencoderModel& ae, double sigma = 0.1,
                                           double baseline_decay = 0.95) {
  validate_controller_settings(sigma, baseline_decay);
  if (!ae.pretrained)
    fail(ErrorKind::NotPretrained, "autoencoder has not been pretrained");
  ControllerModel c;
  c.params = ae.encoder;
  c.params.step = 0;
  for (auto& [name, p] : c.params.entries) {
    p.m1 = TensorBuf::zeros(p.value.shape());
    p.m2 = TensorBuf::zeros(p.value.shape());
  }
  c.dims = ae.dims;
  c.origin_dim = ae.origin_dim;
  c.sigma = sigma;
  c.baseline_decay = baseline_decay;
  return c;
}

// Standalone controller (no autoencoder), used by surrogate experiments.
inline ControllerModel make_controller(const SpaceConfig& space, std::size_t embed_dim,
                                       std::size_t hidden, double sigma, double baseline_decay,
                                       std::uint64_t seed) {
  validate_controller_settings(sigma, baseline_decay);
  ControllerModel c;
  c.dims.layer_count = space.layer_count;
  c.dims.token_width = token_width(space);
  c.dims.hidden = hidden;
  c.dims.embed_dim = embed_dim;
  c.origin_dim = origin_dim(space);
  Rng rng(derive_seed(seed, 3));
  init_encoder_params(c.params, c.dims, rng);
  c.sigma = sigma;
  c.baseline_decay = baseline_decay;
  return c;
}

inline TensorBuf controller_input(const ControllerModel& c, const OriginVector& a) {
  if (a.size() != c.origin_dim) fail(ErrorKind::Shape, "origin vector has wrong dimension");
  return TensorBuf({1, c.dims.layer_count, c.dims.token_width}, std::vector<double>(a));
}

inline Embedding policy_mean(const ControllerModel& c, const OriginVector& a) {
  TensorBuf e = encoder_forward(c.params, c.dims, controller_input(c, a));
  return Embedding(e.data(), e.data() + e.size());
}

struct PolicySample {
  OriginVector input;    // conditioning architecture vector
  Embedding mean;
  Embedding action;
  double log_prob = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t update_stamp = 0;  // controller update count at sampling time
};

inline double gaussian_log_prob(const Embedding& action, const Embedding& mean, double sigma) {
  const double log_norm =
      -0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma) * static_cast<double>(mean.size());
  double quad = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double d = action[i] - mean[i];
    quad += d * d;
  }
  return log_norm - quad / (2.0 * sigma * sigma);
}

inline PolicySample sample_action(const ControllerModel& c, const OriginVector& a,
                                  std::uint64_t seed) {
  PolicySample s;
  s.input = a;
  s.mean = policy_mean(c, a);
  s.action.resize(s.mean.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < s.mean.size(); ++i) s.action[i] = s.mean[i] + c.sigma * rng.normal();
  s.log_prob = gaussian_log_prob(s.action, s.mean, c.sigma);
  s.seed = seed;
  s.update_stamp = c.updates;
  return s;
}

inline double read_baseline(const ControllerModel& c) { return c.baseline_set ? c.baseline : 0.0; }

// EMA baseline, initialized to the first observed reward.
inline double update_baseline(ControllerModel& c, double reward) {
  if (!std::isfinite(reward)) fail(ErrorKind::Numeric, "non-finite reward");
  if (!c.baseline_set) {
    c.baseline = reward;
    c.baseline_set = true;
  } else {
    c.baseline = c.baseline_decay * c.baseline + (1.0 - c.baseline_decay) * reward;
  }
  return c.baseline;
}

struct UpdateReport {
  double advantage = 0.0;
  double grad_norm = 0.0;       // L2 norm of d(advantage * log pi)/d(params)
  double baseline_before = 0.0;
  double baseline_after = 0.0;
};

// One REINFORCE ascent step on (reward - baseline) * grad log pi(action|input),
// applied through Adam; the baseline updates afterwards. The sample must come
// from the current or the immediately preceding controller state.
inline UpdateReport reinforce_update(ControllerModel& c, const PolicySample& sample, double reward,
                                     double lr) {
  if (!std::isfinite(reward)) fail(ErrorKind::Numeric, "non-finite reward");
  if (c.updates < sample.update_stamp || c.updates - sample.update_stamp > 1)
    fail(ErrorKind::Config, "stale policy sample (more than one update old)");

  UpdateReport report;
  report.baseline_before = read_baseline(c);
  const double baseline = c.baseline_set ? c.baseline : reward;
  report.advantage = reward - baseline;

  EncoderCache cache;
  TensorBuf x = controller_input(c, sample.input);
  TensorBuf mean = encoder_forward(c.params, c.dims, x, &cache);

  // d log pi / d mean_i = (action_i - mean_i) / sigma^2; ascend advantage*logpi
  const double inv_var = 1.0 / (c.sigma * c.sigma);
  TensorBuf d_mean = TensorBuf::zeros(mean.shape());
  for (std::size_t i = 0; i < d_mean.size(); ++i)
    d_mean[i] = report.advantage * (sample.action[i] - mean[i]) * inv_var;

  GradMap ascent;
  encoder_backward(c.params, c.dims, cache, d_mean, ascent);
  report.grad_norm = grad_l2_norm(ascent);

  GradMap descent;
  for (auto& [name, g] : ascent) {
    TensorBuf neg = TensorBuf::zeros(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
    descent.emplace(name, std::move(neg));
  }
  adam_step(c.params, descent, lr);
  c.updates += 1;

  report.baseline_after = update_baseline(c, reward);
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/controller.bin + sidecar <dir>/controller.json
// ---------------------------------------------------------------------------

inline void save_controller(const ControllerModel& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(c.params, dir + "/controller.bin");
  nlohmann::json meta{{"sigma", c.sigma},
                      {"baseline", c.baseline},
                      {"decay", c.baseline_decay},
                      {"baseline_set", c.baseline_set},
                      {"updates", c.updates}};
  const std::string tmp = dir + "/controller.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot write sidecar in " + dir);
    os << meta.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir + "/controller.json");
}

inline ControllerModel load_controller(const std::string& dir) {
  const std::string sidecar = dir + "/controller.json";
  if (!std::filesystem::exists(sidecar))
    fail(ErrorKind::NotPretrained, "no controller checkpoint at " + dir);
  std::ifstream is(sidecar);
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded()) fail(ErrorKind::Format, "invalid controller sidecar in " + dir);
  ControllerModel c;
  c.params = load_checkpoint(dir + "/controller.bin");
  c.dims = encoder_dims(c.params);
  c.origin_dim = c.dims.layer_count * c.dims.token_width;
  c.sigma = meta.value("sigma", 0.1);
  c.baseline = meta.value("baseline", 0.0);
  c.baseline_decay = meta.value("decay", 0.95);
  c.baseline_set = meta.value("baseline_set", false);
  c.updates = meta.value("updates", std::uint64_t{0});
  validate_controller_settings(c.sigma, c.baseline_decay);
  return c;
}

}  // namespace nases
