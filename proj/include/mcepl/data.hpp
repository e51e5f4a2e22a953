#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcepl/error.hpp"
#include "mcepl/rng.hpp"
#include "mcepl/tensor.hpp"

namespace mcepl {

/// Labelled samples. features is [n, C, H, W] with every entry in [0, 1].
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }

  Shape sample_shape() const { return Shape(features.shape().begin() + 1, features.shape().end()); }

  std::size_t sample_size() const { return shape_size(sample_shape()); }
};

struct Batch {
  Tensor features;
  std::vector<int> labels;
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ArgumentError("cannot gather an empty batch");
  const std::size_t per = ds.sample_size();
  std::vector<double> buf(indices.size() * per);
  std::vector<int> labels(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= ds.size()) throw ArgumentError("sample index out of range");
    std::copy_n(ds.features.data() + i * per, per, buf.data() + k * per);
    labels[k] = ds.labels[i];
  }
  Shape shape{indices.size()};
  for (auto e : ds.sample_shape()) shape.push_back(e);
  return {Tensor(std::move(shape), std::move(buf)), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Synthetic prototype task
// ---------------------------------------------------------------------------

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Per class: a random prototype in [0.25, 0.75]^dim; samples are the
/// prototype plus uniform noise in [-noise, noise], clipped to [0, 1].
/// Each class contributes max(1, round(0.2 * per_class)) test samples and the
/// rest to train.
inline SplitDataset synth_generate(std::size_t classes, const Shape& dim, std::size_t per_class, double noise,
                                   std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("synthetic task needs at least 2 classes");
  if (per_class < 2) throw ArgumentError("synthetic task needs at least 2 samples per class");
  if (noise < 0.0) throw ArgumentError("noise must be nonnegative");
  const std::size_t per = shape_size(dim);
  const std::size_t n_test =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(per_class))));
  const std::size_t n_train = per_class - n_test;

  std::vector<double> train_buf, test_buf;
  std::vector<int> train_labels, test_labels;
  train_buf.reserve(classes * n_train * per);
  test_buf.reserve(classes * n_test * per);
  for (std::size_t c = 0; c < classes; ++c) {
    auto proto_eng = make_engine(seed, "synth-prototype", c);
    std::vector<double> proto(per);
    for (auto& p : proto) p = uniform(proto_eng, 0.25, 0.75);
    auto noise_eng = make_engine(seed, "synth-noise", c);
    for (std::size_t s = 0; s < per_class; ++s) {
      auto& buf = s < n_train ? train_buf : test_buf;
      for (std::size_t k = 0; k < per; ++k) {
        const double e = noise > 0.0 ? uniform(noise_eng, -noise, noise) : 0.0;
        buf.push_back(std::clamp(proto[k] + e, 0.0, 1.0));
      }
      (s < n_train ? train_labels : test_labels).push_back(static_cast<int>(c));
    }
  }
  auto make = [&](std::vector<double>& buf, std::vector<int>& labels) {
    Shape shape{labels.size()};
    for (auto e : dim) shape.push_back(e);
    return Dataset{Tensor(std::move(shape), std::move(buf)), std::move(labels), classes};
  };
  return {make(train_buf, train_labels), make(test_buf, test_labels)};
}

// ---------------------------------------------------------------------------
// Label-skew partitioning
// ---------------------------------------------------------------------------

using LabelSets = std::vector<std::vector<int>>;

/// Each agent draws c distinct labels uniformly; the whole assignment is
/// redrawn until every label has at least one holder.
inline LabelSets assign_labels(std::size_t agents, std::size_t classes, std::size_t c, std::uint64_t seed,
                               std::size_t max_retries = 100) {
  if (c < 1 || c > classes) throw ArgumentError("labels per agent must lie in [1, classes]");
  if (agents * c < classes) {
    throw ArgumentError("cannot cover " + std::to_string(classes) + " labels with " + std::to_string(agents) +
                        " agents holding " + std::to_string(c) + " each");
  }
  auto eng = make_engine(seed, "labels", agents, classes);
  for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
    LabelSets sets(agents);
    std::vector<std::uint8_t> covered(classes, 0);
    for (auto& s : sets) {
      std::vector<int> pool(classes);
      for (std::size_t k = 0; k < classes; ++k) pool[k] = static_cast<int>(k);
      // Partial Fisher-Yates: the first c slots are a uniform draw without replacement.
      for (std::size_t k = 0; k < c; ++k) {
        const auto j = k + uniform_index(eng, classes - k);
        std::swap(pool[k], pool[j]);
      }
      s.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c));
      std::sort(s.begin(), s.end());
      for (int l : s) covered[static_cast<std::size_t>(l)] = 1;
    }
    if (std::all_of(covered.begin(), covered.end(), [](auto v) { return v != 0; })) return sets;
  }
  throw GenerationError("label assignment left a label uncovered after " + std::to_string(max_retries) +
                        " draws");
}

struct PartitionPlan {
  LabelSets labels;
  std::vector<std::vector<std::size_t>> train;  // indices into the train Dataset
  std::vector<std::vector<std::size_t>> test;   // indices into the test Dataset
};

/// Train samples of each label are shuffled and dealt out as evenly as
/// possible (sizes differ by at most one, earlier holders take the
/// remainder). Every agent receives all test samples of its labels.
inline PartitionPlan partition(const Dataset& train, const Dataset& test, const LabelSets& labels,
                               std::uint64_t seed) {
  const std::size_t agents = labels.size();
  const std::size_t classes = train.classes;
  std::vector<std::vector<std::size_t>> holders(classes);
  for (std::size_t a = 0; a < agents; ++a) {
    std::set<int> seen;
    for (int l : labels[a]) {
      if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ArgumentError("label outside class range");
      if (!seen.insert(l).second) throw ArgumentError("duplicate label in an agent's label set");
      holders[static_cast<std::size_t>(l)].push_back(a);
    }
  }
  for (std::size_t l = 0; l < classes; ++l) {
    if (holders[l].empty()) throw ArgumentError("label " + std::to_string(l) + " has no holder");
  }

  PartitionPlan plan{labels, std::vector<std::vector<std::size_t>>(agents),
                     std::vector<std::vector<std::size_t>>(agents)};
  for (std::size_t l = 0; l < classes; ++l) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train.labels[i] == static_cast<int>(l)) idx.push_back(i);
    }
    auto eng = make_engine(seed, "partition", l);
    shuffle(idx.begin(), idx.end(), eng);
    const std::size_t h = holders[l].size();
    const std::size_t base = idx.size() / h, extra = idx.size() % h;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < h; ++k) {
      const std::size_t len = base + (k < extra ? 1 : 0);
      auto& dst = plan.train[holders[l][k]];
      dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                 idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
    }
  }
  for (std::size_t a = 0; a < agents; ++a) {
    std::sort(plan.train[a].begin(), plan.train[a].end());
    const std::set<int> mine(labels[a].begin(), labels[a].end());
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (mine.count(test.labels[i])) plan.test[a].push_back(i);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

/// Reads one CIFAR-10 binary batch (records of 1 label byte + 3072 pixel
/// bytes, channel-major 3x32x32) and appends to `out`. Pixels are scaled by 1/255.
inline void load_cifar10_batch(const std::filesystem::path& file, std::vector<double>& pixels,
                               std::vector<int>& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open CIFAR-10 batch " + file.string());
  std::vector<unsigned char> record(kCifarRecordBytes);
  std::size_t offset = 0;
  std::size_t records = 0;
  while (true) {
    in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(kCifarRecordBytes));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    if (got != kCifarRecordBytes) {
      throw InputError("truncated record in " + file.string() + " at offset " + std::to_string(offset));
    }
    if (record[0] >= 10) {
      throw InputError("label byte " + std::to_string(record[0]) + " out of range in " + file.string() +
                       " at offset " + std::to_string(offset));
    }
    labels.push_back(record[0]);
    for (std::size_t k = 0; k < kCifarPixels; ++k) pixels.push_back(record[1 + k] / 255.0);
    offset += kCifarRecordBytes;
    ++records;
  }
  if (records == 0) throw InputError("empty CIFAR-10 batch " + file.string());
}

/// data_batch_1..5.bin for train and test_batch.bin for test. The standard
/// release holds 10000 records per file (50000 train / 10000 test).
inline SplitDataset load_cifar10(const std::filesystem::path& dir) {
  auto load = [&](const std::vector<std::string>& names) {
    std::vector<double> px;
    std::vector<int> labels;
    for (const auto& name : names) load_cifar10_batch(dir / name, px, labels);
    const std::size_t n = labels.size();
    return Dataset{Tensor({n, 3, 32, 32}, std::move(px)), std::move(labels), 10};
  };
  return {load({"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                "data_batch_5.bin"}),
          load({"test_batch.bin"})};
}

}  // namespace mcepl
