#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "btsnet/tensor.hpp"

namespace btsnet::metrics {

// Field-standard constants of the saliency benchmarks.
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kAlpha = 0.5;
inline constexpr int kThresholds = 256;
inline constexpr double kEps = 2.220446049250313e-16;

/// Single-channel image with values in [0, 1], row-major.
struct Plane {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int r, int c, double fill = 0.0) : rows(r), cols(c), values(std::size_t(r) * c, fill) {}
  Plane(int r, int c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double& operator()(int r, int c) { return values[std::size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return values[std::size_t(r) * cols + c]; }

  /// Sample `n`, channel 0 of a (N, 1, H, W) tensor.
  template <typename T>
  static Plane from_tensor(const Tensor<T>& t, int n = 0);
};

/// Pixel counts of the binarization `s > k/255` against the mask `g > 0.5`.
struct ThresholdCounts {
  std::array<long, kThresholds> tp{};
  std::array<long, kThresholds> fp{};
  std::array<long, kThresholds> fn{};
};

/// (s - min) / (max - min); constant maps are returned unchanged.
Plane min_max_normalized(const Plane& s);

double mae(const Plane& s, const Plane& g);

/// Counts over the 256 thresholds of the already-normalized map.
ThresholdCounts threshold_counts(const Plane& s, const Plane& g);

/// F_β from counts. An empty prediction on an empty mask scores 1; any other
/// zero denominator scores 0.
double f_beta(long tp, long fp, long fn);

/// Max over thresholds of F_β (β² = 0.3) after per-image min-max
/// normalization of s.
double f_measure_max(const Plane& s, const Plane& g);

/// Structure measure, α = 0.5, clamped to [0, 1]. All-background and
/// all-foreground masks use the mean-prediction degenerate branches.
double s_measure(const Plane& s, const Plane& g);

/// Enhanced-alignment score of a binary prediction against a binary mask.
double e_measure(const Plane& binary_pred, const Plane& g);

/// Max over thresholds of `e_measure` after min-max normalization of s.
double e_measure_max(const Plane& s, const Plane& g);

struct ImageMetrics {
  std::string stem;
  double s_alpha = 0;
  double f_beta_max = 0;
  double e_xi_max = 0;
  double mae = 0;
};

struct MetricsReport {
  double s_alpha = 0;
  double f_beta_max = 0;
  double e_xi_max = 0;
  double mae = 0;
  std::vector<ImageMetrics> per_image;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};

/// `g` is binarized at 0.5.
ImageMetrics evaluate_pair(const Plane& s, const Plane& g, std::string stem = {});

/// Arithmetic means of the per-image values.
MetricsReport aggregate(std::vector<ImageMetrics> per_image);

/// Pairs prediction and ground-truth images by filename stem (sorted) and
/// evaluates each pair. Missing counterparts and unreadable files are listed
/// in `errors` while the remaining pairs are still evaluated. Predictions are
/// resized to the ground-truth extents when they differ; ground truth is
/// foreground where the 8-bit value exceeds 127.
MetricsReport evaluate_dataset(const std::filesystem::path& pred_dir,
                               const std::filesystem::path& gt_dir);

/// JSON document with dataset means, per-image rows and errors.
std::string report_json(const MetricsReport& report);

/// Aligned text table with columns S_α↑ F_β^max↑ E_ξ^max↑ M↓, one row per
/// labelled report.
std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace btsnet::metrics
