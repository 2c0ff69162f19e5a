#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "nases/tensor.hpp"

namespace nases {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

// One learnable tensor plus its optimizer slots. Adam uses m1/m2 as first and
// second moments; Nesterov uses m1 as the velocity.
struct Param {
  TensorBuf value;
  TensorBuf m1;
  TensorBuf m2;
};

struct ParamSet {
  std::map<std::string, Param> entries;
  std::uint64_t step = 0;

  TensorBuf& insert(const std::string& name, TensorBuf value) {
    Param p;
    p.m1 = TensorBuf::zeros(value.shape());
    p.m2 = TensorBuf::zeros(value.shape());
    p.value = std::move(value);
    auto [it, fresh] = entries.insert_or_assign(name, std::move(p));
    (void)fresh;
    return it->second.value;
  }

  bool contains(const std::string& name) const { return entries.count(name) != 0; }

  Param& param(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) fail(ErrorKind::Config, "unknown parameter: " + name);
    return it->second;
  }

  const Param& param(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) fail(ErrorKind::Config, "unknown parameter: " + name);
    return it->second;
  }

  TensorBuf& at(const std::string& name) { return param(name).value; }
  const TensorBuf& at(const std::string& name) const { return param(name).value; }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries) n += p.value.size();
    return n;
  }
};

// Named gradients, keyed like the ParamSet they belong to.
using GradMap = std::map<std::string, TensorBuf>;

inline void grad_accumulate(GradMap& grads, const std::string& name, TensorBuf g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, std::move(g));
    return;
  }
  check_same_shape(it->second, g, "grad_accumulate");
  double* a = it->second.data();
  const double* b = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) a[i] += b[i];
}

inline double grad_l2_norm(const GradMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * g[i];
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Checkpoint format (file extension .bin by convention):
//   magic "NASESPK1", then entries until EOF. Per entry, little-endian:
//     u64 name length, UTF-8 name bytes,
//     u64 rank, u64 extents[rank],
//     f64 data[prod(extents)]  (raw IEEE-754 bits, bit-exact round trip).
// Optimizer slots are stored as sibling entries "<name>.m1" / "<name>.m2",
// and the step counter as a 1-element entry "__step".
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) fail(ErrorKind::Format, "truncated checkpoint");
  return v;
}

inline void write_entry(std::ostream& os, const std::string& name, const TensorBuf& t) {
  write_u64(os, name.size());
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(os, t.rank());
  for (std::size_t e : t.shape()) write_u64(os, e);
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline std::pair<std::string, TensorBuf> read_entry(std::istream& is) {
  const std::uint64_t name_len = read_u64(is);
  if (name_len > (1u << 20)) fail(ErrorKind::Format, "implausible name length in checkpoint");
  std::string name(name_len, '\0');
  is.read(name.data(), static_cast<std::streamsize>(name_len));
  if (!is) fail(ErrorKind::Format, "truncated checkpoint name");
  const std::uint64_t rank = read_u64(is);
  if (rank > 8) fail(ErrorKind::Format, "implausible rank in checkpoint");
  std::vector<std::size_t> shape(rank);
  for (auto& e : shape) e = read_u64(is);
  const std::size_t n = TensorBuf::element_count(shape);
  std::vector<double> data(n);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) fail(ErrorKind::Format, "truncated checkpoint data");
  TensorBuf t = TensorBuf::zeros(shape);
  t.vec() = std::move(data);  // bypass finite check: raw bits must round-trip
  return {std::move(name), std::move(t)};
}

}  // namespace detail

inline constexpr char kCheckpointMagic[9] = "NASESPK1";

// Writes to a temp file and renames, so readers never observe a partial file.
inline void save_checkpoint(const ParamSet& ps, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open for writing: " + tmp);
    os.write(kCheckpointMagic, 8);
    for (const auto& [name, p] : ps.entries) {
      detail::write_entry(os, name, p.value);
      detail::write_entry(os, name + ".m1", p.m1);
      detail::write_entry(os, name + ".m2", p.m2);
    }
    TensorBuf step({1}, {static_cast<double>(ps.step)});
    detail::write_entry(os, "__step", step);
    if (!os) fail(ErrorKind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline ParamSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open checkpoint: " + path);
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    fail(ErrorKind::Format, "bad checkpoint magic in " + path);

  ParamSet ps;
  std::map<std::string, TensorBuf> raw;
  while (is.peek() != std::char_traits<char>::eof()) {
    auto [name, t] = detail::read_entry(is);
    raw.insert_or_assign(std::move(name), std::move(t));
  }
  for (auto& [name, t] : raw) {
    if (name == "__step" || name.ends_with(".m1") || name.ends_with(".m2")) continue;
    Param p;
    p.value = t;
    auto m1 = raw.find(name + ".m1");
    auto m2 = raw.find(name + ".m2");
    p.m1 = m1 != raw.end() ? m1->second : TensorBuf::zeros(t.shape());
    p.m2 = m2 != raw.end() ? m2->second : TensorBuf::zeros(t.shape());
    if (!p.m1.same_shape(p.value) || !p.m2.same_shape(p.value))
      fail(ErrorKind::Format, "optimizer state shape mismatch for " + name);
    ps.entries.insert_or_assign(name, std::move(p));
  }
  auto step = raw.find("__step");
  if (step != raw.end() && step->second.size() == 1)
    ps.step = static_cast<std::uint64_t>(step->second[0]);
  return ps;
}

}  // namespace nases
