#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "btsnet/data.hpp"
#include "btsnet/network.hpp"
#include "btsnet/image_io.hpp"

namespace btsnet {

struct FeatureLevel {
  Modality modality = Modality::kRgb;
  int level = 0;  // 0..5
};

/// Parses "r3" / "d3" style level names.
FeatureLevel parse_feature_level(const std::string& s);
std::string to_string(const FeatureLevel& l);

/// Channel mean of sample 0 of `feature`, min-max normalized (constant maps
/// become 0.5), bilinearly upsampled to (rows, cols) and colored with JET.
template <typename T>
Image feature_heatmap(const Tensor<T>& feature, int rows, int cols);

/// Runs the network on one preprocessed sample and writes
/// <out_dir>/<stem>_f<r|d><level>.png per requested level.
template <typename T>
std::vector<std::filesystem::path> export_heatmaps(BtsNet<T>& net, const Sample& sample,
                                                   const std::vector<FeatureLevel>& levels,
                                                   const RgbNormalization& norm,
                                                   const std::filesystem::path& out_dir);

}  // namespace btsnet
