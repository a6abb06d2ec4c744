/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "weissi/tensor.hpp"

namespace weissi {

enum class Split { train, test };

/// Labeled images with pixel values in [0, 1]. Images are [N x D]
/// (flattened) or [N x C x H x W].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 10;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t example_size() const { return size() ? images.size() / size() : 0; }
  Shape example_shape() const { return Shape(images.shape.begin() + 1, images.shape.end()); }
};

/// Checks the range and label invariants; throws ContractError.
inline void validate(const Dataset& ds) {
  if (ds.images.shape.empty() || ds.images.shape[0] != ds.labels.size()) {
    throw ContractError("dataset: image count does not match label count");
  }
  for (double v : ds.images.data)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("dataset: pixel value outside [0, 1]");
  for (int l : ds.labels)
    if (l < 0 || static_cast<std::size_t>(l) >= ds.num_classes) {
      throw ContractError("dataset: label " + std::to_string(l) + " out of range");
    }
}

// IDX ------------------------------------------------------------------------------

class IdxError : public IoError {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace idx_detail {

inline constexpr std::uint32_t kImagesMagic = 0x00000803;
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IdxError(IdxError::Kind::io, "cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), {});
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (b.size() < off + 4) throw IdxError(IdxError::Kind::truncated, path + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline void put_be32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace idx_detail

/// Parses an IDX image file (magic 0x00000803, dims N, rows, cols, u8
/// payload) and label file (magic 0x00000801, dim N, u8 payload). Pixels are
/// divided by 255 and flattened to [N x rows*cols].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              Split split = Split::train) {
  using namespace idx_detail;
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (be32(img, 0, images_path) != kImagesMagic) {
    throw IdxError(IdxError::Kind::bad_magic, images_path + ": bad magic, expected 0x00000803");
  }
  if (be32(lab, 0, labels_path) != kLabelsMagic) {
    throw IdxError(IdxError::Kind::bad_magic, labels_path + ": bad magic, expected 0x00000801");
  }
  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t n_labels = be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw IdxError(IdxError::Kind::count_mismatch, "image count " + std::to_string(n) +
                                                       " does not match label count " + std::to_string(n_labels));
  }
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d) throw IdxError(IdxError::Kind::truncated, images_path + ": truncated payload");
  if (lab.size() < 8 + n) throw IdxError(IdxError::Kind::truncated, labels_path + ": truncated payload");

  Dataset ds;
  ds.split = split;
  ds.images = Tensor(Shape{n, d});
  for (std::size_t i = 0; i < n * d; ++i) ds.images[i] = static_cast<double>(img[16 + i]) / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    if (lab[8 + i] > 9) throw ContractError(labels_path + ": label " + std::to_string(lab[8 + i]) + " out of range");
  }
  return ds;
}

/// Loads `<dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte`.
inline Dataset load_mnist_dir(const std::string& dir, Split split) {
  const std::string prefix = dir + (split == Split::train ? "/train" : "/t10k");
  return load_mnist_idx(prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte", split);
}

/// Writes a dataset in IDX format. Pixels are quantized to round(255 v), so
/// data that was loaded from IDX reloads bit-identically.
inline void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
                      std::size_t rows, std::size_t cols) {
  using namespace idx_detail;
  validate(ds);
  if (ds.example_size() != rows * cols) throw ShapeError("write_idx: rows * cols does not match example size");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IdxError(IdxError::Kind::io, "cannot open IDX output files");
  put_be32(img, kImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.images.data) img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  put_be32(lab, kLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) {
    if (l > 255) throw ContractError("write_idx: label does not fit in a byte");
    lab.put(static_cast<char>(static_cast<unsigned char>(l)));
  }
}

// Layout helpers ----------------------------------------------------------------------

/// [N x D] -> [N x C x H x W].
inline Dataset as_images(Dataset ds, std::size_t c, std::size_t h, std::size_t w) {
  ds.images = ds.images.reshaped(Shape{ds.size(), c, h, w});
  return ds;
}

inline Dataset flattened(Dataset ds) {
  ds.images = ds.images.reshaped(Shape{ds.size(), ds.example_size()});
  return ds;
}

/// First `n` examples.
inline Dataset head(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.size());
  Dataset out;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  Shape s = ds.images.shape;
  s[0] = n;
  const std::size_t d = ds.example_size();
  out.images = Tensor(s, std::vector<double>(ds.images.data.begin(), ds.images.data.begin() + n * d));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  return out;
}

// Batching -------------------------------------------------------------------------------

using BatchPlan = std::vector<std::vector<std::size_t>>;

/// Deterministic permutation of [0, n) from the seed, cut into batches of
/// `batch_size` (the last batch may be partial).
inline BatchPlan batches(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed, bool shuffle = true) {
  if (batch_size < 1) throw ContractError("batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (shuffle) {
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    Rng rng(shuffle_seed);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(perm[i - 1], perm[j]);
    }
  }
  BatchPlan plan;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    plan.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return plan;
}

inline BatchPlan batches(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed) {
  return batches(ds.size(), batch_size, shuffle_seed);
}

struct Batch {
  Tensor x;
  std::vector<int> labels;
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> idx) {
  const std::size_t d = ds.example_size();
  Shape s = ds.images.shape;
  s[0] = idx.size();
  Batch b{Tensor(s), {}};
  b.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(ds.images.data.begin() + idx[r] * d, d, b.x.data.begin() + r * d);
    b.labels.push_back(ds.labels[idx[r]]);
  }
  return b;
}

/// Contiguous slice [start, start + count).
inline Batch slice(const Dataset& ds, std::size_t start, std::size_t count) {
  count = std::min(count, ds.size() - start);
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), start);
  return gather(ds, idx);
}

// Synthetic data ------------------------------------------------------------------------------

/// Gaussian clusters around class means drawn uniformly from [0.1, 0.9]^d,
/// clamped to [0, 1].
inline Dataset synthetic_blobs(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed,
                               double stddev = 0.05) {
  if (n < 1 || d < 1 || classes < 1) throw ContractError("synthetic_blobs: n, d and classes must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> mean_dist(0.1, 0.9);
  std::vector<double> means(classes * d);
  for (double& m : means) m = mean_dist(rng);
  std::normal_distribution<double> noise(0.0, stddev);
  Dataset ds;
  ds.num_classes = classes;
  ds.images = Tensor(Shape{n, d});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t k = 0; k < d; ++k)
      ds.images[i * d + k] = std::clamp(means[c * d + k] + noise(rng), 0.0, 1.0);
  }
  return ds;
}

}  // namespace weissi
