#include <doctest.h>

#include <filesystem>
#include <set>
#include <fstream>

#include "nases/dataset.hpp"

using namespace nases;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// two records with recognizable byte patterns
std::string write_fixture() {
  const std::string path = temp_path("nases_cifar_fixture.bin");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  std::vector<std::uint8_t> rec(3073);
  rec[0] = 3;  // label
  for (std::size_t i = 0; i < 3072; ++i) rec[i + 1] = static_cast<std::uint8_t>(i % 251);
  os.write(reinterpret_cast<const char*>(rec.data()), 3073);
  rec[0] = 9;
  for (std::size_t i = 0; i < 3072; ++i) rec[i + 1] = static_cast<std::uint8_t>((i * 7 + 5) % 256);
  os.write(reinterpret_cast<const char*>(rec.data()), 3073);
  return path;
}

}  // namespace

TEST_CASE("cifar binary fixture parses bit-exactly") {
  const std::string path = write_fixture();
  LabeledImages data = load_cifar_binary({path});
  REQUIRE(data.count == 2);
  CHECK(data.labels[0] == 3);
  CHECK(data.labels[1] == 9);
  for (std::size_t i = 0; i < 3072; ++i) {
    CHECK(data.image(0)[i] == static_cast<std::uint8_t>(i % 251));
    CHECK(data.image(1)[i] == static_cast<std::uint8_t>((i * 7 + 5) % 256));
  }
  std::filesystem::remove(path);
}

TEST_CASE("cifar loader rejects truncation and bad labels") {
  const std::string path = write_fixture();
  std::filesystem::resize_file(path, 3073 + 100);
  CHECK_THROWS_AS(load_cifar_binary({path}), Error);
  std::filesystem::remove(path);

  const std::string bad = temp_path("nases_cifar_badlabel.bin");
  {
    std::ofstream os(bad, std::ios::binary);
    std::vector<std::uint8_t> rec(3073, 0);
    rec[0] = 10;  // out of range
    os.write(reinterpret_cast<const char*>(rec.data()), 3073);
  }
  CHECK_THROWS_AS(load_cifar_binary({bad}), Error);
  std::filesystem::remove(bad);

  CHECK_THROWS_AS(load_cifar_binary({temp_path("nases_cifar_missing.bin")}), Error);
}

TEST_CASE("blob dataset is balanced and loader compatible") {
  LabeledImages blobs = make_blob_dataset(20, 5);
  REQUIRE(blobs.count == 200);
  std::array<int, 10> per_class{};
  for (std::uint8_t l : blobs.labels) per_class[l] += 1;
  for (int c : per_class) CHECK(c == 20);
  CHECK(blobs.pixels.size() == 200 * 3072);

  LabeledImages again = make_blob_dataset(20, 5);
  CHECK(again.pixels == blobs.pixels);

  LabeledImages sub = subset_per_class(blobs, 3);
  CHECK(sub.count == 30);
}

TEST_CASE("split respects the 0.9 ratio") {
  LabeledImages pool;
  pool.count = 50000;
  pool.labels.assign(50000, 0);
  pool.pixels.assign(50000 * LabeledImages::kPixelBytes, 0);
  DatasetSplit split = split_dataset(pool, LabeledImages{}, 0.9, 7);
  CHECK(split.train.count == 45000);
  CHECK(split.validation.count == 5000);

  CHECK_THROWS_AS(split_dataset(pool, LabeledImages{}, 0.0, 7), Error);
  CHECK_THROWS_AS(split_dataset(pool, LabeledImages{}, 1.0, 7), Error);
}

TEST_CASE("split is a seeded permutation covering the pool") {
  LabeledImages pool = make_blob_dataset(10, 1);  // 100 images
  DatasetSplit a = split_dataset(pool, LabeledImages{}, 0.9, 3);
  DatasetSplit b = split_dataset(pool, LabeledImages{}, 0.9, 3);
  CHECK(a.train.pixels == b.train.pixels);
  CHECK(a.validation.pixels == b.validation.pixels);
  CHECK(a.train.count + a.validation.count == pool.count);

  DatasetSplit c = split_dataset(pool, LabeledImages{}, 0.9, 4);
  CHECK(c.train.pixels != a.train.pixels);
}

TEST_CASE("normalization yields zero mean unit variance on the fitted set") {
  LabeledImages blobs = make_blob_dataset(30, 9);
  ChannelStats stats = compute_channel_stats(blobs);
  std::vector<std::size_t> all(blobs.count);
  std::iota(all.begin(), all.end(), 0);
  TensorBuf x = normalize_to_tensor(blobs, stats, all);

  constexpr std::size_t HW = 1024;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t b = 0; b < blobs.count; ++b)
      for (std::size_t p = 0; p < HW; ++p) mean += x[(b * 3 + c) * HW + p];
    mean /= static_cast<double>(blobs.count * HW);
    for (std::size_t b = 0; b < blobs.count; ++b)
      for (std::size_t p = 0; p < HW; ++p) {
        const double d = x[(b * 3 + c) * HW + p] - mean;
        var += d * d;
      }
    var /= static_cast<double>(blobs.count * HW);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("validation normalized with training statistics keeps its offset") {
  LabeledImages pool = make_blob_dataset(40, 11);
  DatasetSplit split = split_dataset(pool, LabeledImages{}, 0.9, 2);
  ChannelStats stats = compute_channel_stats(split.train);
  std::vector<std::size_t> all(split.validation.count);
  std::iota(all.begin(), all.end(), 0);
  TensorBuf x = normalize_to_tensor(split.validation, stats, all);
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
  mean /= static_cast<double>(x.size());
  CHECK(mean != 0.0);  // training stats, not the validation set's own
  CHECK(std::abs(mean) < 0.5);
}

TEST_CASE("constant channel input is rejected") {
  LabeledImages flat;
  flat.count = 4;
  flat.labels.assign(4, 0);
  flat.pixels.assign(4 * LabeledImages::kPixelBytes, 128);
  CHECK_THROWS_AS(compute_channel_stats(flat), Error);
}

TEST_CASE("horizontal flip is an involution") {
  Rng rng(21);
  TensorBuf x = TensorBuf::zeros({1, 3, 8, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  TensorBuf flipped = x;
  hflip_image(flipped, 0);
  bool changed = false;
  for (std::size_t i = 0; i < x.size(); ++i) changed = changed || flipped[i] != x[i];
  CHECK(changed);
  hflip_image(flipped, 0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(flipped[i] == x[i]);
}

TEST_CASE("center crop of a padded image recovers the original") {
  Rng rng(22);
  TensorBuf x = TensorBuf::zeros({1, 3, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  TensorBuf padded = pad_batch(x, 4);
  CHECK(padded.shape() == std::vector<std::size_t>{1, 3, 40, 40});
  TensorBuf back = crop_image(padded, 0, 4, 4, 32, 32);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("cutout zeroes at most size^2 pixels per channel") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    TensorBuf x = TensorBuf::full({1, 3, 32, 32}, 1.0);
    cutout_image(x, 0, rng.uniform_index(32), rng.uniform_index(32), 8);
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t zeroed = 0;
      for (std::size_t p = 0; p < 1024; ++p)
        if (x[c * 1024 + p] == 0.0) ++zeroed;
      CHECK(zeroed <= 64);
      CHECK(zeroed > 0);
    }
  }
}

TEST_CASE("augment is deterministic and shape preserving") {
  LabeledImages blobs = make_blob_dataset(4, 13);
  ChannelStats stats = compute_channel_stats(blobs);
  std::vector<std::size_t> idx{0, 5, 11, 17};
  TensorBuf x = normalize_to_tensor(blobs, stats, idx);
  TensorBuf a = augment_batch(x, 99, 4, 8);
  TensorBuf b = augment_batch(x, 99, 4, 8);
  CHECK(a.shape() == x.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  TensorBuf c = augment_batch(x, 100, 4, 8);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != c[i];
  CHECK(differs);
}

TEST_CASE("augment without cutout only rearranges pixels and pad zeros") {
  LabeledImages blobs = make_blob_dataset(2, 31);
  ChannelStats stats = compute_channel_stats(blobs);
  std::vector<std::size_t> idx{0, 7, 13};
  TensorBuf x = normalize_to_tensor(blobs, stats, idx);
  TensorBuf y = augment_batch(x, 41, 4, 0);

  // every output value is either an input pixel value or a padding zero
  std::multiset<double> pool(x.vec().begin(), x.vec().end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    auto it = pool.find(y[i]);
    REQUIRE(it != pool.end());
    pool.erase(it);
  }
  CHECK(y.shape() == x.shape());
}

TEST_CASE("loader concatenates multiple files and reads directory layouts") {
  const std::string dir = temp_path("nases_cifar_dir");
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto write_records = [&](const std::string& path, std::uint8_t label, std::size_t n) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    std::vector<std::uint8_t> rec(3073, label);
    rec[0] = label;
    for (std::size_t i = 0; i < n; ++i)
      os.write(reinterpret_cast<const char*>(rec.data()), 3073);
  };
  for (int i = 1; i <= 5; ++i)
    write_records(dir + "/data_batch_" + std::to_string(i) + ".bin",
                  static_cast<std::uint8_t>(i), 3);
  write_records(dir + "/test_batch.bin", 9, 2);

  LabeledImages train = load_cifar_dir(dir, true);
  REQUIRE(train.count == 15);
  CHECK(train.labels[0] == 1);
  CHECK(train.labels[14] == 5);
  LabeledImages test = load_cifar_dir(dir, false);
  REQUIRE(test.count == 2);
  CHECK(test.labels[0] == 9);

  LabeledImages both = load_cifar_binary(
      {dir + "/data_batch_1.bin", dir + "/data_batch_2.bin"});
  CHECK(both.count == 6);
  std::filesystem::remove_all(dir);
}
