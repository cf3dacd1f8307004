#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "btsnet/tensor.hpp"

namespace btsnet {

/// One RGB-D scene. rgb (1, 3, H, W) and depth (1, 1, H, W) in [0, 1];
/// gt (1, 1, H, W) in {0, 1}. Larger depth means nearer.
struct Sample {
  Tensor<float> rgb;
  Tensor<float> depth;
  Tensor<float> gt;
  std::string stem;
};

enum class Split { kTrain, kTest };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// Directory with RGB/, depth/ and GT/ subfolders sharing filename stems.
struct DatasetSpec {
  std::filesystem::path root;
  Split split = Split::kTrain;
  std::string name;
  /// false when the dataset stores far pixels with larger values; depth is
  /// then inverted on load.
  bool depth_near_is_high = true;
};

/// Decodes every triple in stem order. All problems (missing folders, stems
/// without counterparts, undecodable files) are collected and thrown together
/// as an ItemizedError.
std::vector<Sample> load_dataset(const DatasetSpec& spec);

/// Per-channel standardization of network RGB input.
struct RgbNormalization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};

  bool operator==(const RgbNormalization&) const = default;
};

/// Resizes to (h, w): bilinear for rgb and depth, nearest for gt. Depth is
/// min-max normalized (zero range → 0.5). With `flip` set the three fields
/// are mirrored horizontally.
Sample preprocess(const Sample& sample, int h, int w, bool flip = false);

/// Training variant: flips with probability 0.5 drawn from `rng`.
Sample preprocess_train(const Sample& sample, int h, int w, std::mt19937_64& rng);

/// Deterministic scenes of 1-3 flat-colored shapes on a textured background.
/// Depth is below 0.5 on the background and above 0.5 on the shapes, so
/// thresholding it at 0.5 reproduces gt. Foreground fraction lies in
/// [0.05, 0.6].
std::vector<Sample> synthetic_dataset(int n, std::uint64_t seed, int h, int w);

/// Network inputs for a batch of equally sized samples.
template <typename T>
struct Batch {
  Tensor<T> rgb;    // standardized
  Tensor<T> depth;
  Tensor<T> gt;
  std::vector<std::string> stems;
};

template <typename T>
Batch<T> make_batch(std::span<const Sample> samples, const RgbNormalization& norm = {});

/// Writes samples as RGB/<stem>.png, depth/<stem>.png, GT/<stem>.png.
void write_dataset(const std::filesystem::path& root, std::span<const Sample> samples);

}  // namespace btsnet
