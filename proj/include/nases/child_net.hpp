#pragma once

#include <string>
#include <vector>

#include "nases/conv.hpp"
#include "nases/init.hpp"

namespace nases {

// Child convolutional network assembled from a decoded Architecture.
//
// Layer 0 applies its operator directly to the input image. Every later layer
// concatenates its sequential input with the (resolution-aligned) outputs of
// its skip sources, then runs a ReLU -> 1x1 conv -> batchnorm adapter that
// restores the stage filter count, then its operator block. Convolutional
// operators are ReLU -> separable conv -> batchnorm; identity and the pooling
// operators carry no parameters. Reduction layers stride the adapter by 2.
// The classifier is global average pooling into a single linear layer.

struct ChildNetConfig {
  std::size_t filters = 40;
  std::size_t classes = 10;
  std::size_t input_channels = 3;
  std::vector<std::size_t> reductions;  // stride-2 adapter layer indices
  bool double_filters_at_reduction = true;
};

// {L/3, 2L/3}, skipping index 0 (layer 0 has no adapter to stride)
inline std::vector<std::size_t> default_reductions(std::size_t layer_count) {
  std::vector<std::size_t> out;
  for (std::size_t r : {layer_count / 3, 2 * layer_count / 3})
    if (r > 0 && (out.empty() || out.back() != r)) out.push_back(r);
  return out;
}

struct ChildNet {
  Architecture arch;
  ChildNetConfig cfg;
  ParamSet params;
  std::vector<BatchNormState> adapter_bn, op_bn;
  // static shape plan, filled by build_child
  std::vector<std::size_t> out_channels;  // per layer
  std::vector<std::size_t> cat_channels;  // adapter input width per layer (0 for layer 0)
  std::vector<std::size_t> stage_filters; // F_i per layer
  std::vector<std::size_t> halvings;      // reductions applied up to and including layer i
};

namespace detail {

inline bool is_conv(OperatorKind op) {
  return op == OperatorKind::SepConv3x3 || op == OperatorKind::SepConv5x5;
}

inline std::size_t kernel_of(OperatorKind op) { return op == OperatorKind::SepConv5x5 ? 5 : 3; }

inline std::string layer_prefix(std::size_t i) { return "l" + std::to_string(i); }

}  // namespace detail

inline ChildNet build_child(const Architecture& arch, const ChildNetConfig& cfg,
                            std::uint64_t seed) {
  const std::size_t L = arch.layers.size();
  if (L == 0) fail(ErrorKind::InvalidArchitecture, "architecture has no layers");
  SpaceConfig space{L, true};
  validate_architecture(arch, space);
  for (std::size_t r : cfg.reductions) {
    if (r >= L) fail(ErrorKind::Config, "reduction index beyond last layer");
    if (r == 0) fail(ErrorKind::Config, "layer 0 has no adapter and cannot reduce");
  }
  if (cfg.filters == 0 || cfg.classes == 0) fail(ErrorKind::Config, "filters/classes must be positive");

  ChildNet net;
  net.arch = arch;
  net.cfg = cfg;
  net.adapter_bn.resize(L);
  net.op_bn.resize(L);
  net.out_channels.resize(L);
  net.cat_channels.resize(L, 0);
  net.stage_filters.resize(L);
  net.halvings.resize(L);

  Rng rng(derive_seed(seed, 7));
  std::size_t reductions_so_far = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const bool reduce = std::count(cfg.reductions.begin(), cfg.reductions.end(), i) > 0;
    if (reduce) ++reductions_so_far;
    net.halvings[i] = reductions_so_far;
    net.stage_filters[i] =
        cfg.double_filters_at_reduction ? cfg.filters << reductions_so_far : cfg.filters;

    const OperatorKind op = arch.layers[i].op;
    std::size_t in_ch;
    if (i == 0) {
      in_ch = cfg.input_channels;
    } else {
      std::size_t cat = net.out_channels[i - 1];
      for (std::size_t s : arch.layers[i].skips) cat += net.out_channels[s];
      net.cat_channels[i] = cat;
      const std::string ap = detail::layer_prefix(i) + ".adapter";
      net.params.insert(ap + ".w", he_init({net.stage_filters[i], cat}, cat, rng));
      net.params.insert(ap + ".bn.gamma", TensorBuf::full({net.stage_filters[i]}, 1.0));
      net.params.insert(ap + ".bn.beta", TensorBuf::zeros({net.stage_filters[i]}));
      in_ch = net.stage_filters[i];
    }

    if (detail::is_conv(op)) {
      const std::size_t k = detail::kernel_of(op);
      const std::size_t out_ch = i == 0 ? cfg.filters : net.stage_filters[i];
      const std::string pp = detail::layer_prefix(i) + ".op";
      net.params.insert(pp + ".dw", he_init({in_ch, k, k}, k * k, rng));
      net.params.insert(pp + ".pw", he_init({out_ch, in_ch}, in_ch, rng));
      net.params.insert(pp + ".bn.gamma", TensorBuf::full({out_ch}, 1.0));
      net.params.insert(pp + ".bn.beta", TensorBuf::zeros({out_ch}));
      net.out_channels[i] = out_ch;
    } else {
      net.out_channels[i] = in_ch;  // identity and pooling preserve channels
    }
  }

  const std::size_t last = net.out_channels[L - 1];
  net.params.insert("head.W", he_init({cfg.classes, last}, last, rng));
  net.params.insert("head.b", TensorBuf::zeros({cfg.classes}));
  return net;
}

inline std::size_t child_param_count(const ChildNet& net) { return net.params.value_count(); }

struct ChildLayerCache {
  std::vector<TensorBuf> down_steps;  // per skip input, intermediate shapes for avg_down2
  std::vector<std::size_t> part_channels;
  TensorBuf cat;           // adapter input (pre-ReLU)
  TensorBuf adapter_mid;   // relu(cat), input to the 1x1 conv
  TensorBuf adapter_conv;  // conv output (pre-BN)
  BatchNormCache adapter_bn;
  TensorBuf op_in;         // operator block input (pre-ReLU for convs)
  TensorBuf op_relu;       // relu(op_in) for conv ops
  ConvOpsCache op;
  TensorBuf op_conv;       // separable conv output (pre-BN)
  BatchNormCache op_bn;
};

struct ChildForwardCache {
  std::vector<ChildLayerCache> layers;
  std::vector<TensorBuf> outs;  // per-layer outputs
  TensorBuf gap_in;             // final feature map
  TensorBuf gap_out;            // (B, C)
};

namespace detail {

// Align a skip source to the target number of halvings, caching the shape
// chain for backward.
inline TensorBuf align_skip(const TensorBuf& src, std::size_t from_halvings,
                            std::size_t to_halvings, std::vector<TensorBuf>* steps) {
  TensorBuf cur = src;
  for (std::size_t h = from_halvings; h < to_halvings; ++h) {
    if (steps) steps->push_back(cur);
    cur = avg_down2(cur);
  }
  return cur;
}

inline TensorBuf concat_channels(const std::vector<TensorBuf>& parts) {
  const std::size_t B = parts[0].extent(0), H = parts[0].extent(2), W = parts[0].extent(3);
  std::size_t C = 0;
  for (const TensorBuf& p : parts) {
    if (p.extent(0) != B || p.extent(2) != H || p.extent(3) != W)
      fail(ErrorKind::Shape, "concat inputs disagree on batch or spatial extents");
    C += p.extent(1);
  }
  TensorBuf out = TensorBuf::zeros({B, C, H, W});
  const std::size_t hw = H * W;
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t c0 = 0;
    for (const TensorBuf& p : parts) {
      const std::size_t pc = p.extent(1);
      std::copy(p.data() + b * pc * hw, p.data() + (b + 1) * pc * hw,
                out.data() + (b * C + c0) * hw);
      c0 += pc;
    }
  }
  return out;
}

inline std::vector<TensorBuf> split_channels(const TensorBuf& x,
                                             const std::vector<std::size_t>& channels) {
  const std::size_t B = x.extent(0), C = x.extent(1), hw = x.extent(2) * x.extent(3);
  std::vector<TensorBuf> parts;
  std::size_t c0 = 0;
  for (std::size_t pc : channels) {
    TensorBuf p = TensorBuf::zeros({B, pc, x.extent(2), x.extent(3)});
    for (std::size_t b = 0; b < B; ++b)
      std::copy(x.data() + (b * C + c0) * hw, x.data() + (b * C + c0 + pc) * hw,
                p.data() + b * pc * hw);
    parts.push_back(std::move(p));
    c0 += pc;
  }
  return parts;
}

}  // namespace detail

// Forward pass; training mode updates batchnorm running statistics.
inline TensorBuf child_forward(ChildNet& net, const TensorBuf& x, bool training,
                               ChildForwardCache* cache = nullptr) {
  detail::require_nchw(x, "child_forward");
  if (x.extent(1) != net.cfg.input_channels)
    fail(ErrorKind::Shape, "input channel count does not match the network");
  const std::size_t L = net.arch.layers.size();
  if (cache) {
    cache->layers.assign(L, {});
    cache->outs.assign(L, {});
  }
  std::vector<TensorBuf> outs(L);

  for (std::size_t i = 0; i < L; ++i) {
    ChildLayerCache local;
    ChildLayerCache* lc = cache ? &cache->layers[i] : &local;
    const OperatorKind op = net.arch.layers[i].op;
    const std::string lp = detail::layer_prefix(i);

    TensorBuf cur;
    if (i == 0) {
      cur = x;
    } else {
      const bool reduce =
          std::count(net.cfg.reductions.begin(), net.cfg.reductions.end(), i) > 0;
      std::vector<TensorBuf> parts;
      parts.push_back(outs[i - 1]);
      lc->part_channels = {outs[i - 1].extent(1)};
      lc->down_steps.clear();
      for (std::size_t s : net.arch.layers[i].skips) {
        TensorBuf aligned = detail::align_skip(outs[s], net.halvings[s], net.halvings[i - 1],
                                               cache ? &lc->down_steps : nullptr);
        lc->part_channels.push_back(aligned.extent(1));
        parts.push_back(std::move(aligned));
      }
      lc->cat = detail::concat_channels(parts);
      lc->adapter_mid = relu(lc->cat);
      lc->adapter_conv =
          conv1x1_forward(net.params.at(lp + ".adapter.w"), lc->adapter_mid, reduce ? 2 : 1);
      cur = batchnorm_forward(net.params.at(lp + ".adapter.bn.gamma"),
                              net.params.at(lp + ".adapter.bn.beta"), lc->adapter_conv, training,
                              net.adapter_bn[i], cache ? &lc->adapter_bn : nullptr);
    }

    lc->op_in = cur;
    if (detail::is_conv(op)) {
      lc->op_relu = relu(cur);
      lc->op_conv = conv_ops(net.params, lp + ".op", lc->op_relu, op, 1, cache ? &lc->op : nullptr);
      outs[i] = batchnorm_forward(net.params.at(lp + ".op.bn.gamma"),
                                  net.params.at(lp + ".op.bn.beta"), lc->op_conv, training,
                                  net.op_bn[i], cache ? &lc->op_bn : nullptr);
    } else {
      outs[i] = conv_ops(net.params, lp + ".op", cur, op, 1, cache ? &lc->op : nullptr);
    }
    if (cache) cache->outs[i] = outs[i];
  }

  TensorBuf gap = global_avg_pool(outs[L - 1]);
  if (cache) {
    cache->gap_in = outs[L - 1];
    cache->gap_out = gap;
  }
  return dense_forward(net.params, "head", gap);
}

// Backward for a training-mode forward pass; returns parameter gradients.
inline GradMap child_backward(const ChildNet& net, const ChildForwardCache& cache,
                              const TensorBuf& dlogits) {
  GradMap grads;
  const std::size_t L = net.arch.layers.size();

  TensorBuf dgap = dense_backward(net.params, "head", cache.gap_out, dlogits, grads);
  std::vector<TensorBuf> douts(L);
  douts[L - 1] = global_avg_pool_backward(cache.gap_in.shape(), dgap);

  for (std::size_t i = L; i-- > 0;) {
    const ChildLayerCache& lc = cache.layers[i];
    const OperatorKind op = net.arch.layers[i].op;
    const std::string lp = detail::layer_prefix(i);
    TensorBuf dy = std::move(douts[i]);

    // operator block
    TensorBuf dcur;
    if (detail::is_conv(op)) {
      BatchNormGrads bg =
          batchnorm_backward(net.params.at(lp + ".op.bn.gamma"), lc.op_bn, dy);
      grad_accumulate(grads, lp + ".op.bn.gamma", std::move(bg.dgamma));
      grad_accumulate(grads, lp + ".op.bn.beta", std::move(bg.dbeta));
      TensorBuf dconv = conv_ops_backward(net.params, lp + ".op", lc.op, bg.dx, grads);
      dcur = relu_backward(lc.op_in, dconv);
    } else {
      dcur = conv_ops_backward(net.params, lp + ".op", lc.op, dy, grads);
    }

    if (i == 0) continue;  // gradient w.r.t. the image is discarded

    // adapter
    BatchNormGrads ag =
        batchnorm_backward(net.params.at(lp + ".adapter.bn.gamma"), lc.adapter_bn, dcur);
    grad_accumulate(grads, lp + ".adapter.bn.gamma", std::move(ag.dgamma));
    grad_accumulate(grads, lp + ".adapter.bn.beta", std::move(ag.dbeta));
    const bool reduce = std::count(net.cfg.reductions.begin(), net.cfg.reductions.end(), i) > 0;
    Conv1x1Grads cg = conv1x1_backward(net.params.at(lp + ".adapter.w"), lc.adapter_mid, ag.dx,
                                       reduce ? 2 : 1);
    grad_accumulate(grads, lp + ".adapter.w", std::move(cg.dw));
    TensorBuf dcat = relu_backward(lc.cat, cg.dx);

    // split into sequential input + skip inputs, undoing the alignment chain
    std::vector<TensorBuf> dparts = detail::split_channels(dcat, lc.part_channels);
    auto add_into = [](TensorBuf& acc, const TensorBuf& g) {
      if (acc.size() == 0) acc = g;
      else {
        check_same_shape(acc, g, "skip gradient accumulation");
        for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
      }
    };
    add_into(douts[i - 1], dparts[0]);
    std::size_t step_idx = lc.down_steps.size();
    const auto& skips = net.arch.layers[i].skips;
    for (std::size_t si = skips.size(); si-- > 0;) {
      TensorBuf d = std::move(dparts[si + 1]);
      const std::size_t n_steps = net.halvings[i - 1] - net.halvings[skips[si]];
      for (std::size_t s = 0; s < n_steps; ++s) {
        --step_idx;
        d = avg_down2_backward(lc.down_steps[step_idx].shape(), d);
      }
      add_into(douts[skips[si]], d);
    }
  }
  return grads;
}

}  // namespace nases
