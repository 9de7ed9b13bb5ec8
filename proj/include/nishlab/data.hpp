#pragma once

// MNIST ingestion (IDX format), deterministic splitting, Gaussian-noise
// corruption and batch iteration.
//
// IDX layout, all integers big-endian:
//   images: u32 magic 0x00000803, u32 N, u32 rows, u32 cols, N*rows*cols u8
//   labels: u32 magic 0x00000801, u32 N, N u8

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nishlab/errors.hpp"
#include "nishlab/random.hpp"
#include "nishlab/tensor.hpp"

namespace nishlab {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kNumClasses = 10;

// images: [N,1,28,28] in [0,1] (or beyond once noise is added).
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                               const std::string& what) {
  if (bytes.size() < offset + 4) throw FormatError(what + ": truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                         std::span<const std::uint8_t> label_bytes,
                         const std::string& image_name = "images",
                         const std::string& label_name = "labels") {
  const auto image_magic = detail::read_be32(image_bytes, 0, image_name);
  if (image_magic != kIdxImagesMagic) {
    throw FormatError(image_name + ": bad magic " + std::to_string(image_magic) +
                          ", expected 2051 (0x00000803)", 0);
  }
  const std::size_t n = detail::read_be32(image_bytes, 4, image_name);
  const std::size_t rows = detail::read_be32(image_bytes, 8, image_name);
  const std::size_t cols = detail::read_be32(image_bytes, 12, image_name);
  if (rows != kImageSide || cols != kImageSide) {
    throw FormatError(image_name + ": expected 28x28 images, got " + std::to_string(rows) + "x" +
                          std::to_string(cols), 8);
  }
  const std::size_t pixel_bytes = n * rows * cols;
  if (image_bytes.size() < 16 + pixel_bytes) {
    throw FormatError(image_name + ": truncated pixel data, need " +
                          std::to_string(16 + pixel_bytes) + " bytes", image_bytes.size());
  }

  const auto label_magic = detail::read_be32(label_bytes, 0, label_name);
  if (label_magic != kIdxLabelsMagic) {
    throw FormatError(label_name + ": bad magic " + std::to_string(label_magic) +
                          ", expected 2049 (0x00000801)", 0);
  }
  const std::size_t label_count = detail::read_be32(label_bytes, 4, label_name);
  if (label_count != n) {
    throw FormatError(label_name + ": " + std::to_string(label_count) + " labels for " +
                          std::to_string(n) + " images", 4);
  }
  if (label_bytes.size() < 8 + n) {
    throw FormatError(label_name + ": truncated label data", label_bytes.size());
  }
  if (n == 0) throw FormatError(image_name + ": file holds no samples", 4);

  Dataset ds{Tensor<float>({n, 1, rows, cols}), std::vector<int>(n)};
  for (std::size_t i = 0; i < pixel_bytes; ++i) {
    ds.images[i] = static_cast<float>(image_bytes[16 + i]) / 255.0f;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int label = label_bytes[8 + i];
    if (label >= kNumClasses) {
      throw FormatError(label_name + ": label " + std::to_string(label) + " out of range", 8 + i);
    }
    ds.labels[i] = label;
  }
  return ds;
}

inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);
  return parse_idx(images, labels, images_path.string(), labels_path.string());
}

inline Dataset concatenate(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw UsageError("nothing to concatenate");
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Dataset out{Tensor<float>({n, 1, kImageSide, kImageSide}), {}};
  out.labels.reserve(n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.images.values().begin(), p.images.values().end(), out.images.data() + offset);
    offset += p.images.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

// Loads every `<prefix>-images-idx3-ubyte` / `<prefix>-labels-idx1-ubyte`
// pair in `dir` (sorted by prefix) and concatenates them, so the standard
// train and t10k files merge into one pool.
inline Dataset load_dataset_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' not found");
  const std::string image_suffix = "-images-idx3-ubyte";
  std::vector<std::string> prefixes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > image_suffix.size() &&
        name.compare(name.size() - image_suffix.size(), image_suffix.size(), image_suffix) == 0) {
      prefixes.push_back(name.substr(0, name.size() - image_suffix.size()));
    }
  }
  if (prefixes.empty()) throw IoError("no *-images-idx3-ubyte files in '" + dir.string() + "'");
  std::sort(prefixes.begin(), prefixes.end());
  std::vector<Dataset> parts;
  for (const auto& prefix : prefixes) {
    parts.push_back(load_idx(dir / (prefix + image_suffix), dir / (prefix + "-labels-idx1-ubyte")));
  }
  return parts.size() == 1 ? std::move(parts.front()) : concatenate(parts);
}

inline Dataset gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) return {};
  Dataset out{Tensor<float>({indices.size(), 1, kImageSide, kImageSide}), {}};
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= ds.size()) throw UsageError("sample index out of range");
    std::copy_n(ds.images.data() + i * kImagePixels, kImagePixels,
                out.images.data() + k * kImagePixels);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

struct Split {
  Dataset train;
  Dataset test;
};

// Seeded permutation of all samples; the first floor(N * fraction) go to
// train and the rest to test.
inline Split merge_and_split(const Dataset& full, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  }
  const auto order = seeded_permutation(full.size(), derive_seed(seed, streams::kSplit));
  const auto cut = static_cast<std::size_t>(
      std::floor(static_cast<double>(full.size()) * train_fraction));
  std::span<const std::size_t> all(order);
  return {gather(full, all.first(cut)), gather(full, all.subspan(cut))};
}

inline Dataset take_first(const Dataset& ds, std::size_t n) {
  if (n >= ds.size()) return ds;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return gather(ds, idx);
}

// out = in + N(0, sigma^2) per pixel, no clamping.
inline Tensor<float> add_gaussian_noise(const Tensor<float>& images, const NoiseSpec& spec) {
  if (!(spec.sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (spec.sigma == 0.0) return images;
  Tensor<float> out = images;
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  for (auto& v : out.values()) v = static_cast<float>(v + noise(rng));
  return out;
}

// Index batches for one epoch: a seeded shuffle cut into chunks of
// batch_size, the final partial chunk included.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  const auto order = seeded_permutation(n, shuffle_seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed) {
  return batches(ds.size(), batch_size, shuffle_seed);
}

}  // namespace nishlab
