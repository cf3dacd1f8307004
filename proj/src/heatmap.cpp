#include "btsnet/heatmap.hpp"

#include <algorithm>

#include "btsnet/errors.hpp"

namespace btsnet {

FeatureLevel parse_feature_level(const std::string& s) {
  if (s.size() == 2 && (s[0] == 'r' || s[0] == 'd') && s[1] >= '0' && s[1] <= '5') {
    return {s[0] == 'r' ? Modality::kRgb : Modality::kDepth, s[1] - '0'};
  }
  throw ConfigError("unknown feature level '" + s + "' (expected r0..r5 or d0..d5)");
}

std::string to_string(const FeatureLevel& l) {
  return std::string(l.modality == Modality::kRgb ? "r" : "d") + std::to_string(l.level);
}

template <typename T>
Image feature_heatmap(const Tensor<T>& feature, int rows, int cols) {
  Image mean;
  mean.rows = feature.h();
  mean.cols = feature.w();
  mean.channels = 1;
  mean.values.assign(static_cast<std::size_t>(mean.rows) * mean.cols, 0.0f);
  for (int c = 0; c < feature.c(); ++c)
    for (int r = 0; r < mean.rows; ++r)
      for (int x = 0; x < mean.cols; ++x) {
        mean.values[static_cast<std::size_t>(r) * mean.cols + x] +=
            static_cast<float>(feature.at(0, c, r, x)) / feature.c();
      }
  const auto [lo, hi] = std::minmax_element(mean.values.begin(), mean.values.end());
  const float a = *lo, b = *hi;
  for (auto& v : mean.values) v = b > a ? (v - a) / (b - a) : 0.5f;
  return apply_colormap(resize_image(mean, rows, cols, false));
}

template <typename T>
std::vector<std::filesystem::path> export_heatmaps(BtsNet<T>& net, const Sample& sample,
                                                   const std::vector<FeatureLevel>& levels,
                                                   const RgbNormalization& norm,
                                                   const std::filesystem::path& out_dir) {
  for (const auto& l : levels) {
    if (l.level < 0 || l.level > 5) {
      throw ConfigError("feature level " + std::to_string(l.level) + " outside 0..5");
    }
  }
  NoGradGuard guard;
  const bool was_training = net.training();
  net.set_training(false);
  const Batch<T> batch = make_batch<T>(std::span<const Sample>(&sample, 1), norm);
  const NetworkOutput<T> out = net.forward(Var<T>(batch.rgb), Var<T>(batch.depth));
  net.set_training(was_training);
  std::vector<std::filesystem::path> written;
  for (const auto& l : levels) {
    const auto& pyramid = l.modality == Modality::kRgb ? out.pyramids.rgb : out.pyramids.depth;
    const Image img =
        feature_heatmap(pyramid.levels[l.level].value(), sample.rgb.h(), sample.rgb.w());
    const auto path = out_dir / (sample.stem + "_f" + to_string(l) + ".png");
    write_image8(path, img);
    written.push_back(path);
  }
  return written;
}

template Image feature_heatmap(const Tensor<float>&, int, int);
template Image feature_heatmap(const Tensor<double>&, int, int);
template std::vector<std::filesystem::path> export_heatmaps(BtsNet<float>&, const Sample&,
                                                            const std::vector<FeatureLevel>&,
                                                            const RgbNormalization&,
                                                            const std::filesystem::path&);
template std::vector<std::filesystem::path> export_heatmaps(BtsNet<double>&, const Sample&,
                                                            const std::vector<FeatureLevel>&,
                                                            const RgbNormalization&,
                                                            const std::filesystem::path&);

}  // namespace btsnet
