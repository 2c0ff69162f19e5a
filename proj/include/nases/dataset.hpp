#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "nases/rng.hpp"
#include "nases/tensor.hpp"

namespace nases {

// 32x32 RGB images in the CIFAR-10 byte layout: per record one label byte
// followed by 3072 channel-major pixel bytes (1024 red, 1024 green, 1024
// blue, each row-major).
struct LabeledImages {
  static constexpr std::size_t kHeight = 32, kWidth = 32, kChannels = 3;
  static constexpr std::size_t kPixelBytes = kHeight * kWidth * kChannels;  // 3072
  static constexpr std::size_t kClasses = 10;

  std::size_t count = 0;
  std::vector<std::uint8_t> pixels;  // count * 3072
  std::vector<std::uint8_t> labels;  // count

  const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * kPixelBytes; }
};

inline LabeledImages load_cifar_binary(const std::vector<std::string>& files) {
  constexpr std::size_t kRecord = 1 + LabeledImages::kPixelBytes;  // 3073
  LabeledImages out;
  for (const std::string& path : files) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) fail(ErrorKind::Io, "cannot open dataset file: " + path);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes == 0 || bytes % kRecord != 0)
      fail(ErrorKind::Format, "truncated CIFAR-10 file (records are 3073 bytes): " + path);
    is.seekg(0);
    const std::size_t records = bytes / kRecord;
    std::vector<std::uint8_t> buf(kRecord);
    for (std::size_t r = 0; r < records; ++r) {
      is.read(reinterpret_cast<char*>(buf.data()), kRecord);
      if (!is) fail(ErrorKind::Format, "short read in " + path);
      if (buf[0] > 9) fail(ErrorKind::Format, "label byte out of range in " + path);
      out.labels.push_back(buf[0]);
      out.pixels.insert(out.pixels.end(), buf.begin() + 1, buf.end());
    }
    out.count += records;
  }
  return out;
}

// data_batch_1..5.bin for training, test_batch.bin otherwise
inline LabeledImages load_cifar_dir(const std::string& dir, bool train) {
  std::vector<std::string> files;
  if (train)
    for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  else
    files.push_back(dir + "/test_batch.bin");
  return load_cifar_binary(files);
}

// First k records of each class, preserving order.
inline LabeledImages subset_per_class(const LabeledImages& in, std::size_t per_class) {
  LabeledImages out;
  std::array<std::size_t, LabeledImages::kClasses> taken{};
  for (std::size_t i = 0; i < in.count; ++i) {
    const std::uint8_t label = in.labels[i];
    if (taken[label] >= per_class) continue;
    ++taken[label];
    out.labels.push_back(label);
    out.pixels.insert(out.pixels.end(), in.image(i), in.image(i) + LabeledImages::kPixelBytes);
    ++out.count;
  }
  return out;
}

// Seeded 10-class synthetic dataset with the loader's layout: each class is a
// Gaussian intensity blob at a class-specific position with a class-specific
// color, plus pixel noise. Stands in for CIFAR-10 at desk scale.
inline LabeledImages make_blob_dataset(std::size_t per_class, std::uint64_t seed) {
  constexpr std::size_t H = LabeledImages::kHeight, W = LabeledImages::kWidth;
  static constexpr std::array<std::array<double, 3>, 10> palette{{{230, 60, 60},
                                                                  {60, 230, 60},
                                                                  {60, 60, 230},
                                                                  {230, 230, 60},
                                                                  {230, 60, 230},
                                                                  {60, 230, 230},
                                                                  {240, 150, 40},
                                                                  {150, 40, 240},
                                                                  {40, 240, 150},
                                                                  {200, 200, 200}}};
  LabeledImages out;
  Rng rng(derive_seed(seed, 77));
  for (std::size_t k = 0; k < LabeledImages::kClasses; ++k) {
    const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(k) / 10.0;
    const double cy0 = 16.0 + 8.0 * std::sin(angle);
    const double cx0 = 16.0 + 8.0 * std::cos(angle);
    for (std::size_t r = 0; r < per_class; ++r) {
      const double cy = cy0 + 1.5 * rng.normal();
      const double cx = cx0 + 1.5 * rng.normal();
      std::array<std::uint8_t, LabeledImages::kPixelBytes> img{};
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) {
            const double d2 = (static_cast<double>(i) - cy) * (static_cast<double>(i) - cy) +
                              (static_cast<double>(j) - cx) * (static_cast<double>(j) - cx);
            double v = palette[k][c] * std::exp(-d2 / 40.0) + 12.0 * rng.uniform();
            img[c * H * W + i * W + j] = static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v)));
          }
      out.labels.push_back(static_cast<std::uint8_t>(k));
      out.pixels.insert(out.pixels.end(), img.begin(), img.end());
      ++out.count;
    }
  }
  return out;
}

struct DatasetSplit {
  LabeledImages train, validation, test;
  std::uint64_t split_seed = 0;
};

// Seeded permutation of the pool; the first ratio-fraction becomes training.
inline DatasetSplit split_dataset(const LabeledImages& pool, LabeledImages test, double ratio,
                                  std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::Config, "split ratio must lie in (0,1)");
  if (pool.count < 2) fail(ErrorKind::Config, "pool too small to split");
  std::vector<std::size_t> order(pool.count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 31));
  for (std::size_t i = pool.count; i-- > 1;) {
    const std::size_t j = rng.uniform_index(i + 1);
    std::swap(order[i], order[j]);
  }
  const auto train_count = static_cast<std::size_t>(ratio * static_cast<double>(pool.count));

  DatasetSplit split;
  split.split_seed = seed;
  split.test = std::move(test);
  auto take = [&](LabeledImages& dst, std::size_t begin, std::size_t end) {
    dst.count = end - begin;
    dst.labels.reserve(dst.count);
    dst.pixels.reserve(dst.count * LabeledImages::kPixelBytes);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t src = order[i];
      dst.labels.push_back(pool.labels[src]);
      dst.pixels.insert(dst.pixels.end(), pool.image(src),
                        pool.image(src) + LabeledImages::kPixelBytes);
    }
  };
  take(split.train, 0, train_count);
  take(split.validation, train_count, pool.count);
  return split;
}

struct ChannelStats {
  std::array<double, 3> mean{}, stddev{};
};

// Per-channel mean/std over a training set; reused verbatim for validation
// and test so every split sees the same transform.
inline ChannelStats compute_channel_stats(const LabeledImages& images) {
  if (images.count == 0) fail(ErrorKind::Config, "cannot compute statistics of an empty set");
  constexpr std::size_t HW = LabeledImages::kHeight * LabeledImages::kWidth;
  ChannelStats stats;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < images.count; ++i) {
      const std::uint8_t* img = images.image(i);
      for (std::size_t p = 0; p < HW; ++p) sum += img[c * HW + p];
    }
    const double n = static_cast<double>(images.count * HW);
    const double mean = sum / n;
    double var = 0.0;
    for (std::size_t i = 0; i < images.count; ++i) {
      const std::uint8_t* img = images.image(i);
      for (std::size_t p = 0; p < HW; ++p) {
        const double d = img[c * HW + p] - mean;
        var += d * d;
      }
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(var / n);
    if (stats.stddev[c] == 0.0)
      fail(ErrorKind::Numeric, "constant channel: zero standard deviation");
  }
  return stats;
}

// Materializes (x - mean)/std doubles for the given record indices, NCHW.
inline TensorBuf normalize_to_tensor(const LabeledImages& images, const ChannelStats& stats,
                                     const std::vector<std::size_t>& indices) {
  constexpr std::size_t H = LabeledImages::kHeight, W = LabeledImages::kWidth;
  TensorBuf out = TensorBuf::zeros({indices.size(), 3, H, W});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::uint8_t* img = images.image(indices[r]);
    double* dst = out.data() + r * 3 * H * W;
    for (std::size_t c = 0; c < 3; ++c) {
      const double inv = 1.0 / stats.stddev[c];
      for (std::size_t p = 0; p < H * W; ++p)
        dst[c * H * W + p] = (static_cast<double>(img[c * H * W + p]) - stats.mean[c]) * inv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation on normalized batches: pad, random crop, horizontal flip,
// optional cutout. Deterministic given the seed.
// ---------------------------------------------------------------------------

inline TensorBuf pad_batch(const TensorBuf& x, std::size_t pad) {
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  TensorBuf out = TensorBuf::zeros({B, C, H + 2 * pad, W + 2 * pad});
  const std::size_t oh = H + 2 * pad, ow = W + 2 * pad;
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t i = 0; i < H; ++i)
      std::copy(x.data() + bc * H * W + i * W, x.data() + bc * H * W + (i + 1) * W,
                out.data() + bc * oh * ow + (i + pad) * ow + pad);
  return out;
}

inline TensorBuf crop_image(const TensorBuf& padded, std::size_t image, std::size_t oy,
                            std::size_t ox, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = padded.extent(1), H = padded.extent(2), W = padded.extent(3);
  if (oy + out_h > H || ox + out_w > W) fail(ErrorKind::Config, "crop window out of bounds");
  TensorBuf out = TensorBuf::zeros({1, C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < out_h; ++i)
      std::copy(padded.data() + ((image * C + c) * H + oy + i) * W + ox,
                padded.data() + ((image * C + c) * H + oy + i) * W + ox + out_w,
                out.data() + (c * out_h + i) * out_w);
  return out;
}

inline void hflip_image(TensorBuf& x, std::size_t image) {
  const std::size_t C = x.extent(1), H = x.extent(2), W = x.extent(3);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i) {
      double* row = x.data() + ((image * C + c) * H + i) * W;
      for (std::size_t j = 0; j < W / 2; ++j) std::swap(row[j], row[W - 1 - j]);
    }
}

// Zeroes a size x size square centered at (cy, cx), clipped at the borders.
inline void cutout_image(TensorBuf& x, std::size_t image, std::size_t cy, std::size_t cx,
                         std::size_t size) {
  const std::size_t C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(size) / 2;
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(cy) - half);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(cx) - half);
  const std::ptrdiff_t y1 =
      std::min<std::ptrdiff_t>(H, static_cast<std::ptrdiff_t>(cy) - half + static_cast<std::ptrdiff_t>(size));
  const std::ptrdiff_t x1 =
      std::min<std::ptrdiff_t>(W, static_cast<std::ptrdiff_t>(cx) - half + static_cast<std::ptrdiff_t>(size));
  for (std::size_t c = 0; c < C; ++c)
    for (std::ptrdiff_t i = y0; i < y1; ++i)
      for (std::ptrdiff_t j = x0; j < x1; ++j)
        x[((image * C + c) * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)] = 0.0;
}

// Per image: pad to (H+2p, W+2p), random crop back, flip with probability 1/2,
// optional cutout.
inline TensorBuf augment_batch(const TensorBuf& x, std::uint64_t seed, std::size_t pad = 4,
                               std::size_t cutout = 0) {
  const std::size_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  TensorBuf padded = pad_batch(x, pad);
  TensorBuf out = TensorBuf::zeros(x.shape());
  Rng rng(seed);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t oy = rng.uniform_index(2 * pad + 1);
    const std::size_t ox = rng.uniform_index(2 * pad + 1);
    TensorBuf img = crop_image(padded, b, oy, ox, H, W);
    if (rng.bernoulli(0.5)) hflip_image(img, 0);
    if (cutout > 0)
      cutout_image(img, 0, rng.uniform_index(H), rng.uniform_index(W), cutout);
    std::copy(img.data(), img.data() + C * H * W, out.data() + b * C * H * W);
  }
  return out;
}

}  // namespace nases
