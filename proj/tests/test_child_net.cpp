#include <doctest.h>

#include "nases/child_net.hpp"
#include "nases/grad_check.hpp"

using namespace nases;

namespace {

Architecture all_identity(std::size_t layers) {
  Architecture a;
  a.layers.resize(layers);
  return a;
}

TensorBuf random_image_batch(std::size_t batch, std::size_t hw, Rng& rng) {
  TensorBuf x = TensorBuf::zeros({batch, 3, hw, hw});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * rng.uniform() - 1.0;
  return x;
}

}  // namespace

TEST_CASE("default reductions sit at L/3 and 2L/3") {
  CHECK(default_reductions(15) == std::vector<std::size_t>{5, 10});
  CHECK(default_reductions(4) == std::vector<std::size_t>{1, 2});
  CHECK(default_reductions(2) == std::vector<std::size_t>{1});
  CHECK(default_reductions(1).empty());
}

TEST_CASE("all-identity parameter count is adapters plus head") {
  ChildNetConfig cfg;
  cfg.filters = 8;
  cfg.classes = 10;
  cfg.reductions = {1, 2};
  cfg.double_filters_at_reduction = false;
  ChildNet net = build_child(all_identity(4), cfg, 1);

  // layer 0: identity on the 3-channel image; layers 1..3: 1x1 adapters F=8
  std::size_t expected = 0;
  std::size_t prev_ch = 3;
  for (std::size_t i = 1; i < 4; ++i) {
    expected += 8 * prev_ch + 2 * 8;  // conv1x1 + bn gamma/beta
    prev_ch = 8;
  }
  expected += 10 * 8 + 10;  // head
  CHECK(child_param_count(net) == expected);
}

TEST_CASE("parameter count matches hand-summed formulas on fixed architectures") {
  ChildNetConfig cfg;
  cfg.filters = 4;
  cfg.classes = 10;
  cfg.reductions = {1};
  cfg.double_filters_at_reduction = true;

  // arch A: conv3x3 at layer 0, identity at layer 1 (skipless)
  {
    Architecture a;
    a.layers = {{OperatorKind::SepConv3x3, {}}, {OperatorKind::Identity, {}}};
    ChildNet net = build_child(a, cfg, 2);
    // l0 op: dw 3*3*3 + pw 4*3 + bn 8; l1 adapter: 8*4 + 16 (F doubles); head 10*8+10
    const std::size_t expected = (27 + 12 + 8) + (32 + 16) + 90;
    CHECK(child_param_count(net) == expected);
  }
  // arch B: identity, then conv5x5 with skip of layer 0
  {
    Architecture a;
    a.layers = {{OperatorKind::Identity, {}}, {OperatorKind::SepConv5x5, {0}}};
    ChildNet net = build_child(a, cfg, 3);
    // l1 adapter: in = 3 (seq) + 3 (skip) = 6 -> 8: 48 + 16
    // l1 op: dw 8*25 + pw 8*8 + bn 16; head 10*8+10
    const std::size_t expected = (48 + 16) + (200 + 64 + 16) + 90;
    CHECK(child_param_count(net) == expected);
  }
  // arch C: avg pool then max pool: adapters only
  {
    Architecture a;
    a.layers = {{OperatorKind::AvgPool3x3, {}}, {OperatorKind::MaxPool3x3, {0}}};
    ChildNet net = build_child(a, cfg, 4);
    const std::size_t expected = (48 + 16) + 90;  // pool ops carry no parameters
    CHECK(child_param_count(net) == expected);
  }
}

TEST_CASE("child forward yields (batch, classes) for every operator mix") {
  SpaceConfig space{4, true};
  ChildNetConfig cfg;
  cfg.filters = 4;
  cfg.classes = 10;
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Architecture a = random_architecture(space, seed);
    cfg.reductions = default_reductions(4);
    ChildNet net = build_child(a, cfg, seed);
    TensorBuf x = random_image_batch(3, 16, rng);
    TensorBuf logits = child_forward(net, x, true);
    CHECK(logits.shape() == std::vector<std::size_t>{3, 10});
    CHECK(all_finite(logits));
  }
}

TEST_CASE("skip concatenation plus adapter restores the stage filter count") {
  Architecture a;
  a.layers = {{OperatorKind::SepConv3x3, {}},
              {OperatorKind::Identity, {0}},
              {OperatorKind::AvgPool3x3, {0, 1}},
              {OperatorKind::SepConv5x5, {0, 2}}};
  ChildNetConfig cfg;
  cfg.filters = 4;
  cfg.classes = 10;
  cfg.reductions = {2};
  ChildNet net = build_child(a, cfg, 9);

  Rng rng(6);
  TensorBuf x = random_image_batch(2, 16, rng);
  ChildForwardCache cache;
  child_forward(net, x, true, &cache);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(cache.outs[i].extent(1) == net.out_channels[i]);
    const std::size_t scale = std::size_t{1} << net.halvings[i];
    CHECK(cache.outs[i].extent(2) == 16 / scale);
  }
  // adapter inputs concatenate sequential + skips at the pre-reduction size
  CHECK(cache.layers[3].cat.extent(1) ==
        net.out_channels[2] + net.out_channels[0] + net.out_channels[2]);
}

TEST_CASE("whole child network gradient matches finite differences") {
  Architecture a;
  a.layers = {{OperatorKind::SepConv3x3, {}},
              {OperatorKind::MaxPool3x3, {0}},
              {OperatorKind::SepConv5x5, {0, 1}}};
  ChildNetConfig cfg;
  cfg.filters = 2;
  cfg.classes = 3;
  cfg.reductions = {1};
  ChildNet net = build_child(a, cfg, 11);

  Rng rng(7);
  TensorBuf x = random_image_batch(2, 6, rng);
  std::vector<std::size_t> labels{1, 2};

  auto f = [&](const ParamSet& p) {
    ChildNet probe = net;  // fresh BN state per evaluation
    probe.params = p;
    for (auto& s : probe.adapter_bn) s = BatchNormState{};
    for (auto& s : probe.op_bn) s = BatchNormState{};
    TensorBuf logits = child_forward(probe, x, true);
    return softmax_cross_entropy(logits, labels);
  };

  ChildNet fwd = net;
  ChildForwardCache cache;
  TensorBuf logits = child_forward(fwd, x, true, &cache);
  TensorBuf dlogits;
  softmax_cross_entropy(logits, labels, &dlogits);
  GradMap analytic = child_backward(net, cache, dlogits);
  GradMap numeric = finite_diff_grad(f, net.params);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("build rejects bad configurations") {
  ChildNetConfig cfg;
  cfg.filters = 4;
  cfg.reductions = {0};
  CHECK_THROWS_AS(build_child(all_identity(3), cfg, 1), Error);
  cfg.reductions = {5};
  CHECK_THROWS_AS(build_child(all_identity(3), cfg, 1), Error);
  cfg.reductions = {};
  cfg.filters = 0;
  CHECK_THROWS_AS(build_child(all_identity(3), cfg, 1), Error);
}

TEST_CASE("full-scale child builds and reports its parameter count") {
  SpaceConfig space{15, true};
  Architecture a = random_architecture(space, 2024);
  ChildNetConfig cfg;
  cfg.filters = 40;
  cfg.classes = 10;
  cfg.reductions = default_reductions(15);
  ChildNet net = build_child(a, cfg, 1);
  const std::size_t params = child_param_count(net);
  MESSAGE("15-layer F=40 child parameter count: ", params);
  CHECK(params > 100000);

  Rng rng(8);
  TensorBuf x = random_image_batch(2, 32, rng);
  TensorBuf logits = child_forward(net, x, true);
  CHECK(logits.shape() == std::vector<std::size_t>{2, 10});
}
