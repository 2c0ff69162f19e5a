#pragma once

#include <chrono>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "nases/child_net.hpp"
#include "nases/dataset.hpp"
#include "nases/optim.hpp"
#include "nases/schedule.hpp"

namespace nases {

struct EvalBudget {
  std::size_t epochs_e1 = 70;   // search-phase training epochs
  std::size_t epochs_e2 = 630;  // final-phase training epochs
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

inline void validate(const EvalBudget& b) {
  if (b.epochs_e1 < 1) fail(ErrorKind::Config, "epochs_e1 must be at least 1");
  if (b.batch_size < 1) fail(ErrorKind::Config, "batch_size must be at least 1");
}

struct Reward {
  double value = 0.0;  // validation accuracy in [0,1]
  std::vector<double> loss_curve;
  std::size_t param_count = 0;
  double wall_ms = 0.0;
  double final_epoch_value = 0.0;  // last-epoch accuracy, logged alongside the best
};

// The evaluation contract: a pure function of (architecture, budget.seed).
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Reward evaluate(const Architecture& arch, const EvalBudget& budget) = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Synthetic oracle: reward is the weighted fraction of decisions (operator
// choices and feasible skip bits) matching a target architecture. Exact and
// brute-force verifiable; the unique maximum 1.0 sits at the target.
// ---------------------------------------------------------------------------

class SyntheticOracle final : public Evaluator {
 public:
  SyntheticOracle(Architecture target, SpaceConfig space)
      : SyntheticOracle(std::move(target), space,
                        std::vector<double>(decision_count(space), 1.0)) {}

  SyntheticOracle(Architecture target, SpaceConfig space, std::vector<double> weights)
      : target_(std::move(target)), space_(space), weights_(std::move(weights)) {
    validate_architecture(target_, space_);
    if (weights_.size() != decision_count(space_))
      fail(ErrorKind::Config, "oracle weight count does not match the decision count");
    double sum = 0.0;
    for (double w : weights_) {
      if (w < 0.0) fail(ErrorKind::Config, "oracle weights must be nonnegative");
      sum += w;
    }
    if (sum <= 0.0) fail(ErrorKind::Config, "oracle weights must not all be zero");
    for (double& w : weights_) w /= sum;
  }

  static std::size_t decision_count(const SpaceConfig& space) {
    std::size_t n = space.layer_count;  // one operator decision per layer
    if (space.skips_enabled) n += space.layer_count * (space.layer_count - 1) / 2;
    return n;
  }

  Reward evaluate(const Architecture& arch, const EvalBudget&) override {
    validate_architecture(arch, space_);
    Reward r;
    std::size_t d = 0;
    for (std::size_t i = 0; i < space_.layer_count; ++i) {
      if (arch.layers[i].op == target_.layers[i].op) r.value += weights_[d];
      ++d;
    }
    if (space_.skips_enabled)
      for (std::size_t i = 0; i < space_.layer_count; ++i)
        for (std::size_t s = 0; s < i; ++s) {
          const bool got = std::count(arch.layers[i].skips.begin(), arch.layers[i].skips.end(), s);
          const bool want =
              std::count(target_.layers[i].skips.begin(), target_.layers[i].skips.end(), s);
          if (got == want) r.value += weights_[d];
          ++d;
        }
    return r;
  }

  std::string name() const override { return "synthetic"; }

  const Architecture& target() const { return target_; }

 private:
  Architecture target_;
  SpaceConfig space_;
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Child-network trainer
// ---------------------------------------------------------------------------

struct ChildTrainOptions {
  ChildNetConfig net;  // reductions filled from default_reductions when empty
  LrSchedule schedule{0.05, 0.001, 10};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t pad = 4;
  std::size_t cutout = 0;  // 0 disables cutout
};

namespace detail {

inline double accuracy(ChildNet& net, const LabeledImages& images, const ChannelStats& stats) {
  const std::size_t chunk = 256;
  std::size_t correct = 0;
  for (std::size_t off = 0; off < images.count; off += chunk) {
    const std::size_t n = std::min(chunk, images.count - off);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), off);
    TensorBuf x = normalize_to_tensor(images, stats, idx);
    TensorBuf logits = child_forward(net, x, /*training=*/false);
    const std::size_t k = logits.extent(1);
    for (std::size_t r = 0; r < n; ++r) {
      const double* row = logits.data() + r * k;
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == images.labels[off + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(images.count);
}

struct EpochResult {
  double mean_loss = 0.0;
};

inline EpochResult train_one_epoch(ChildNet& net, const LabeledImages& train,
                                   const ChannelStats& stats, const ChildTrainOptions& opt,
                                   const EvalBudget& budget, std::size_t epoch) {
  std::vector<std::size_t> order(train.count);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(budget.seed, 500, epoch));
  for (std::size_t i = train.count; i-- > 1;)
    std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);

  const std::size_t batches = (train.count + budget.batch_size - 1) / budget.batch_size;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t begin = b * budget.batch_size;
    const std::size_t end = std::min(train.count, begin + budget.batch_size);
    std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
    TensorBuf x = normalize_to_tensor(train, stats, idx);
    x = augment_batch(x, derive_seed(budget.seed, 600, epoch * batches + b), opt.pad, opt.cutout);
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) labels[r] = train.labels[idx[r]];

    ChildForwardCache cache;
    TensorBuf logits = child_forward(net, x, /*training=*/true, &cache);
    TensorBuf dlogits;
    const double loss = softmax_cross_entropy(logits, labels, &dlogits);
    if (!std::isfinite(loss)) fail(ErrorKind::EvaluationFailed, "child training diverged");
    loss_sum += loss;
    GradMap grads = child_backward(net, cache, dlogits);
    const double t =
        static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(batches);
    nesterov_step(net.params, grads, cosine_lr(opt.schedule, t), opt.momentum, opt.weight_decay);
  }
  return {loss_sum / static_cast<double>(batches)};
}

}  // namespace detail

// Trains a child on the train split for e1 epochs under cosine-annealed
// Nesterov SGD; the reward is the best validation accuracy over epochs.
inline Reward train_child(const Architecture& arch, const DatasetSplit& data,
                          const EvalBudget& budget, const ChildTrainOptions& opt) {
  validate(budget);
  if (data.train.count == 0 || data.validation.count == 0)
    fail(ErrorKind::Config, "dataset split has empty train or validation set");
  const auto started = std::chrono::steady_clock::now();

  ChildNetConfig net_cfg = opt.net;
  if (net_cfg.reductions.empty()) net_cfg.reductions = default_reductions(arch.layers.size());
  ChildNet net = build_child(arch, net_cfg, derive_seed(budget.seed, 400));
  const ChannelStats stats = compute_channel_stats(data.train);

  Reward reward;
  reward.param_count = child_param_count(net);
  for (std::size_t epoch = 0; epoch < budget.epochs_e1; ++epoch) {
    const auto res =
        detail::train_one_epoch(net, data.train, stats, opt, budget, epoch);
    reward.loss_curve.push_back(res.mean_loss);
    const double acc = detail::accuracy(net, data.validation, stats);
    reward.final_epoch_value = acc;
    reward.value = std::max(reward.value, acc);
  }
  reward.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             started)
                       .count();
  return reward;
}

// Final phase: retrain from scratch on train+validation for e2 epochs, then
// evaluate once on the held-out test split.
inline Reward train_final(const Architecture& arch, const DatasetSplit& data,
                          const EvalBudget& budget, const ChildTrainOptions& opt) {
  if (budget.epochs_e2 < 1) fail(ErrorKind::Config, "epochs_e2 must be at least 1");
  if (data.test.count == 0) fail(ErrorKind::Config, "final training requires a test split");
  const auto started = std::chrono::steady_clock::now();

  LabeledImages pool = data.train;
  pool.labels.insert(pool.labels.end(), data.validation.labels.begin(),
                     data.validation.labels.end());
  pool.pixels.insert(pool.pixels.end(), data.validation.pixels.begin(),
                     data.validation.pixels.end());
  pool.count += data.validation.count;

  ChildNetConfig net_cfg = opt.net;
  if (net_cfg.reductions.empty()) net_cfg.reductions = default_reductions(arch.layers.size());
  ChildNet net = build_child(arch, net_cfg, derive_seed(budget.seed, 401));
  const ChannelStats stats = compute_channel_stats(pool);

  Reward reward;
  reward.param_count = child_param_count(net);
  for (std::size_t epoch = 0; epoch < budget.epochs_e2; ++epoch) {
    const auto res = detail::train_one_epoch(net, pool, stats, opt, budget, epoch);
    reward.loss_curve.push_back(res.mean_loss);
  }
  reward.value = detail::accuracy(net, data.test, stats);
  reward.final_epoch_value = reward.value;
  reward.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             started)
                       .count();
  return reward;
}

class ChildEvaluator final : public Evaluator {
 public:
  ChildEvaluator(std::shared_ptr<const DatasetSplit> data, ChildTrainOptions opt)
      : data_(std::move(data)), opt_(std::move(opt)) {
    if (!data_) fail(ErrorKind::Config, "child evaluator needs a dataset");
  }

  Reward evaluate(const Architecture& arch, const EvalBudget& budget) override {
    return train_child(arch, *data_, budget, opt_);
  }

  std::string name() const override { return "child"; }

 private:
  std::shared_ptr<const DatasetSplit> data_;
  ChildTrainOptions opt_;
};

}  // namespace nases
