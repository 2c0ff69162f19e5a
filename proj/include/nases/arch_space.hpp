#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "nases/error.hpp"
#include "nases/rng.hpp"

namespace nases {

// The five child-network operators. Integer codes are stable and index the
// one-hot slots of the origin encoding.
enum class OperatorKind : int {
  Identity = 0,
  SepConv3x3 = 1,
  SepConv5x5 = 2,
  AvgPool3x3 = 3,
  MaxPool3x3 = 4,
};

inline constexpr std::size_t kOperatorCount = 5;

inline const char* to_string(OperatorKind op) {
  switch (op) {
    case OperatorKind::Identity: return "identity";
    case OperatorKind::SepConv3x3: return "sep_conv_3x3";
    case OperatorKind::SepConv5x5: return "sep_conv_5x5";
    case OperatorKind::AvgPool3x3: return "avg_pool_3x3";
    case OperatorKind::MaxPool3x3: return "max_pool_3x3";
  }
  fail(ErrorKind::InvalidArchitecture, "unknown operator code");
}

inline OperatorKind operator_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kOperatorCount; ++i) {
    const auto op = static_cast<OperatorKind>(i);
    if (s == to_string(op)) return op;
  }
  fail(ErrorKind::Format, "unknown operator name: " + s);
}

// One chain layer: its operator and the set of earlier layers whose outputs
// feed in as skip connections. Skips are kept sorted and unique.
struct LayerSpec {
  OperatorKind op = OperatorKind::Identity;
  std::vector<std::size_t> skips;

  bool operator==(const LayerSpec& o) const { return op == o.op && skips == o.skips; }
};

struct Architecture {
  std::vector<LayerSpec> layers;

  bool operator==(const Architecture& o) const { return layers == o.layers; }
};

struct SpaceConfig {
  std::size_t layer_count = 15;
  bool skips_enabled = true;
};

inline void validate(const SpaceConfig& cfg) {
  if (cfg.layer_count < 1) fail(ErrorKind::Config, "layer_count must be at least 1");
}

// Width of one per-layer token: 5 one-hot operator slots followed by L-1 skip
// slots (slot s marks layer s as a skip source; slots s >= i stay 0).
inline std::size_t token_width(const SpaceConfig& cfg) {
  validate(cfg);
  return kOperatorCount + (cfg.layer_count - 1);
}

inline std::size_t origin_dim(const SpaceConfig& cfg) { return cfg.layer_count * token_width(cfg); }

// Flattened continuous representation of an Architecture, length origin_dim.
using OriginVector = std::vector<double>;
using Embedding = std::vector<double>;

inline void validate_architecture(const Architecture& arch, const SpaceConfig& cfg) {
  validate(cfg);
  if (arch.layers.size() != cfg.layer_count)
    fail(ErrorKind::InvalidArchitecture, "layer count does not match space config");
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& layer = arch.layers[i];
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (std::size_t s : layer.skips) {
      if (s >= i) fail(ErrorKind::InvalidArchitecture, "skip source must precede its layer");
      if (prev != std::numeric_limits<std::size_t>::max() && s <= prev)
        fail(ErrorKind::InvalidArchitecture, "skips must be sorted and unique");
      prev = s;
    }
    if (!cfg.skips_enabled && !layer.skips.empty())
      fail(ErrorKind::InvalidArchitecture, "skips present but disabled in space config");
  }
}

inline OriginVector encode_origin(const Architecture& arch, const SpaceConfig& cfg) {
  validate_architecture(arch, cfg);
  const std::size_t width = token_width(cfg);
  OriginVector v(origin_dim(cfg), 0.0);
  for (std::size_t i = 0; i < cfg.layer_count; ++i) {
    double* token = v.data() + i * width;
    token[static_cast<std::size_t>(arch.layers[i].op)] = 1.0;
    for (std::size_t s : arch.layers[i].skips) token[kOperatorCount + s] = 1.0;
  }
  return v;
}

// Snaps a continuous origin vector to a valid architecture: argmax over the
// operator slots (ties to the lowest index), skip slot active iff > 0.5 and
// the source index is feasible.
inline Architecture discretize(const OriginVector& v, const SpaceConfig& cfg) {
  const std::size_t width = token_width(cfg);
  if (v.size() != origin_dim(cfg))
    fail(ErrorKind::InvalidVector, "origin vector has wrong dimension");
  Architecture arch;
  arch.layers.resize(cfg.layer_count);
  for (std::size_t i = 0; i < cfg.layer_count; ++i) {
    const double* token = v.data() + i * width;
    std::size_t best = 0;
    for (std::size_t j = 1; j < kOperatorCount; ++j)
      if (token[j] > token[best]) best = j;
    arch.layers[i].op = static_cast<OperatorKind>(best);
    if (cfg.skips_enabled) {
      for (std::size_t s = 0; s < i; ++s)
        if (token[kOperatorCount + s] > 0.5) arch.layers[i].skips.push_back(s);
    }
  }
  return arch;
}

// Number of architectures in the space, saturating at max() on overflow.
inline std::uint64_t space_size(const SpaceConfig& cfg) {
  validate(cfg);
  const std::uint64_t cap = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t n = 1;
  auto mul = [&](std::uint64_t f) {
    if (n > cap / f) n = cap;
    else n *= f;
  };
  for (std::size_t i = 0; i < cfg.layer_count; ++i) mul(kOperatorCount);
  if (cfg.skips_enabled) {
    const std::size_t bits = cfg.layer_count * (cfg.layer_count - 1) / 2;
    for (std::size_t i = 0; i < bits; ++i) mul(2);
  }
  return n;
}

// Exhaustive, duplicate-free enumeration in lexicographic order (operators
// vary fastest in the last layer; skip masks iterate within each op choice).
inline std::vector<Architecture> enumerate_space(const SpaceConfig& cfg,
                                                 std::uint64_t cap = 1000000) {
  validate(cfg);
  const std::uint64_t n = space_size(cfg);
  if (n > cap) fail(ErrorKind::SpaceTooLarge, "search space exceeds enumeration cap");

  std::vector<Architecture> out;
  out.reserve(static_cast<std::size_t>(n));
  const std::size_t L = cfg.layer_count;

  std::vector<std::size_t> ops(L, 0);
  auto emit_skips = [&](auto&& self, Architecture& arch, std::size_t layer) -> void {
    if (layer == L) {
      out.push_back(arch);
      return;
    }
    const std::size_t combos = cfg.skips_enabled ? (std::size_t{1} << layer) : 1;
    for (std::size_t mask = 0; mask < combos; ++mask) {
      arch.layers[layer].skips.clear();
      for (std::size_t s = 0; s < layer; ++s)
        if (mask & (std::size_t{1} << s)) arch.layers[layer].skips.push_back(s);
      self(self, arch, layer + 1);
    }
  };

  while (true) {
    Architecture arch;
    arch.layers.resize(L);
    for (std::size_t i = 0; i < L; ++i) arch.layers[i].op = static_cast<OperatorKind>(ops[i]);
    emit_skips(emit_skips, arch, 0);

    std::size_t i = L;
    while (i > 0) {
      --i;
      if (++ops[i] < kOperatorCount) break;
      ops[i] = 0;
      if (i == 0) return out;
    }
  }
}

// Uniform operator per layer; each feasible skip bit on with probability 1/2.
inline Architecture random_architecture(const SpaceConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  Architecture arch;
  arch.layers.resize(cfg.layer_count);
  for (std::size_t i = 0; i < cfg.layer_count; ++i) {
    arch.layers[i].op = static_cast<OperatorKind>(rng.uniform_index(kOperatorCount));
    if (cfg.skips_enabled)
      for (std::size_t s = 0; s < i; ++s)
        if (rng.bernoulli(0.5)) arch.layers[i].skips.push_back(s);
  }
  return arch;
}

// ---------------------------------------------------------------------------
// Canonical JSON: {"layers":[{"op":"sep_conv_3x3","skips":[0,2]},...]} with
// sorted skips and no whitespace, identical on every platform.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Architecture& arch) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& layer : arch.layers) {
    nlohmann::json l;
    l["op"] = to_string(layer.op);
    l["skips"] = layer.skips;
    layers.push_back(std::move(l));
  }
  return nlohmann::json{{"layers", std::move(layers)}};
}

inline std::string architecture_to_json(const Architecture& arch) { return to_json(arch).dump(); }

inline Architecture architecture_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
    fail(ErrorKind::Format, "architecture JSON must contain a layers array");
  Architecture arch;
  for (const auto& l : j["layers"]) {
    LayerSpec layer;
    layer.op = operator_from_string(l.at("op").get<std::string>());
    if (l.contains("skips")) layer.skips = l["skips"].get<std::vector<std::size_t>>();
    std::sort(layer.skips.begin(), layer.skips.end());
    arch.layers.push_back(std::move(layer));
  }
  return arch;
}

inline Architecture architecture_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Format, "invalid architecture JSON");
  return architecture_from_json(j);
}

}  // namespace nases
