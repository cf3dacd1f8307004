#include "btsnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "btsnet/errors.hpp"
#include "btsnet/image_io.hpp"

namespace btsnet::metrics {

namespace {

void require_same_extent(const Plane& s, const Plane& g) {
  if (s.rows != g.rows || s.cols != g.cols || s.size() != g.size()) {
    throw PreconditionError("prediction " + std::to_string(s.rows) + "x" +
                            std::to_string(s.cols) + " and ground truth " +
                            std::to_string(g.rows) + "x" + std::to_string(g.cols) + " differ");
  }
  if (s.size() == 0) throw PreconditionError("empty map");
}

double threshold(int k) { return static_cast<double>(k) / (kThresholds - 1); }

// Number of thresholds k in [0, 255] with v > k/255.
int passes(double v) {
  int m = static_cast<int>(std::ceil(v * (kThresholds - 1)));
  m = std::clamp(m, 0, kThresholds);
  while (m > 0 && !(v > threshold(m - 1))) --m;
  while (m < kThresholds && v > threshold(m)) ++m;
  return m;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / v.size();
}

// Object-level similarity over the pixels selected by `mask`.
double object_score(const Plane& values, const std::vector<bool>& mask) {
  std::vector<double> picked;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) picked.push_back(values.values[i]);
  }
  if (picked.empty()) return 0.0;
  const double x = mean_of(picked);
  double sq = 0;
  for (double v : picked) sq += (v - x) * (v - x);
  const double sigma = picked.size() > 1 ? std::sqrt(sq / (picked.size() - 1)) : 0.0;
  // The denominator is at least 1, so no eps guard is needed.
  return 2.0 * x / (x * x + 1.0 + sigma);
}

double s_object(const Plane& s, const Plane& g) {
  std::vector<bool> fg(g.size()), bg(g.size());
  Plane fg_pred(s.rows, s.cols), bg_pred(s.rows, s.cols);
  double fg_count = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    fg[i] = g.values[i] > 0.5;
    bg[i] = !fg[i];
    fg_pred.values[i] = fg[i] ? s.values[i] : 0.0;
    bg_pred.values[i] = fg[i] ? 0.0 : 1.0 - s.values[i];
    fg_count += fg[i];
  }
  // Weighted by pixel counts so two perfect scores give exactly 1.
  const double bg_count = static_cast<double>(g.size()) - fg_count;
  return (fg_count * object_score(fg_pred, fg) + bg_count * object_score(bg_pred, bg)) /
         static_cast<double>(g.size());
}

// SSIM-style similarity of one block [r0, r1) x [c0, c1).
double block_ssim(const Plane& s, const Plane& g, int r0, int r1, int c0, int c1) {
  const double n = static_cast<double>(r1 - r0) * (c1 - c0);
  if (n <= 0) return 0.0;
  double sx = 0, sy = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      sx += s(r, c);
      sy += g(r, c);
    }
  const double x = sx / n, y = sy / n;
  double vx = 0, vy = 0, cxy = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const double dx = s(r, c) - x, dy = g(r, c) - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  // eps only guards zero denominators here, so identical blocks score exactly 1.
  const double norm = n > 1 ? n - 1 : 1;
  vx /= norm;
  vy /= norm;
  cxy /= norm;
  const double alpha = 4 * x * y * cxy;
  const double beta = (x * x + y * y) * (vx + vy);
  if (alpha != 0) return alpha / (beta > 0 ? beta : kEps);
  return beta == 0 ? 1.0 : 0.0;
}

double s_region(const Plane& s, const Plane& g) {
  // Centroid in 1-based pixel units; the split keeps columns [0, X) left and
  // rows [0, Y) on top.
  double total = 0, sum_x = 0, sum_y = 0;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const double v = g(r, c) > 0.5 ? 1.0 : 0.0;
      total += v;
      sum_x += v * (c + 1);
      sum_y += v * (r + 1);
    }
  int cx, cy;
  if (total == 0) {
    cx = static_cast<int>(std::round(g.cols / 2.0));
    cy = static_cast<int>(std::round(g.rows / 2.0));
  } else {
    cx = static_cast<int>(std::round(sum_x / total));
    cy = static_cast<int>(std::round(sum_y / total));
  }
  // Block weights are pixel counts over the area.
  const double area = static_cast<double>(g.rows) * g.cols;
  const double n1 = cx * cy, n2 = (g.cols - cx) * cy, n3 = cx * (g.rows - cy);
  const double n4 = area - n1 - n2 - n3;
  return (n1 * block_ssim(s, g, 0, cy, 0, cx) + n2 * block_ssim(s, g, 0, cy, cx, g.cols) +
          n3 * block_ssim(s, g, cy, g.rows, 0, cx) +
          n4 * block_ssim(s, g, cy, g.rows, cx, g.cols)) /
         area;
}

}  // namespace

template <typename T>
Plane Plane::from_tensor(const Tensor<T>& t, int n) {
  Plane p(t.h(), t.w());
  for (int r = 0; r < t.h(); ++r)
    for (int c = 0; c < t.w(); ++c) p(r, c) = static_cast<double>(t.at(n, 0, r, c));
  return p;
}

template Plane Plane::from_tensor(const Tensor<float>&, int);
template Plane Plane::from_tensor(const Tensor<double>&, int);

Plane min_max_normalized(const Plane& s) {
  if (s.size() == 0) return s;
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  const double a = *lo, b = *hi;
  if (b <= a) return s;
  Plane out(s.rows, s.cols);
  for (std::size_t i = 0; i < s.size(); ++i) out.values[i] = (s.values[i] - a) / (b - a);
  return out;
}

double mae(const Plane& s, const Plane& g) {
  require_same_extent(s, g);
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s.values[i] - g.values[i]);
  return acc / s.size();
}

ThresholdCounts threshold_counts(const Plane& s, const Plane& g) {
  require_same_extent(s, g);
  // hist[m]: pixels passing exactly thresholds 0..m-1.
  std::array<long, kThresholds + 1> fg_hist{}, bg_hist{};
  long positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int m = passes(s.values[i]);
    if (g.values[i] > 0.5) {
      ++fg_hist[m];
      ++positives;
    } else {
      ++bg_hist[m];
    }
  }
  ThresholdCounts out;
  long tp = 0, fp = 0;
  for (int k = kThresholds - 1; k >= 0; --k) {
    tp += fg_hist[k + 1];
    fp += bg_hist[k + 1];
    out.tp[k] = tp;
    out.fp[k] = fp;
    out.fn[k] = positives - tp;
  }
  return out;
}

double f_beta(long tp, long fp, long fn) {
  if (tp + fp + fn == 0) return 1.0;
  const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double denom = kBetaSquared * precision + recall;
  return denom > 0 ? (1 + kBetaSquared) * precision * recall / denom : 0.0;
}

double f_measure_max(const Plane& s, const Plane& g) {
  const ThresholdCounts counts = threshold_counts(min_max_normalized(s), g);
  double best = 0;
  for (int k = 0; k < kThresholds; ++k) {
    best = std::max(best, f_beta(counts.tp[k], counts.fp[k], counts.fn[k]));
  }
  return best;
}

double s_measure(const Plane& s, const Plane& g) {
  require_same_extent(s, g);
  double fg = 0, mean_pred = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    fg += g.values[i] > 0.5;
    mean_pred += s.values[i];
  }
  mean_pred /= s.size();
  const double y = fg / g.size();
  if (y == 0) return std::clamp(1.0 - mean_pred, 0.0, 1.0);
  if (y == 1) return std::clamp(mean_pred, 0.0, 1.0);
  const double q = kAlpha * s_object(s, g) + (1 - kAlpha) * s_region(s, g);
  return std::clamp(q, 0.0, 1.0);
}

namespace {

// Enhanced-alignment value for one (prediction, mask) pixel category.
double alignment(double pred, double mask, double mu_pred, double mu_mask) {
  const double ap = pred - mu_pred;
  const double ag = mask - mu_mask;
  const double denom = ag * ag + ap * ap;
  const double xi = denom > 0 ? 2 * ag * ap / denom : 0.0;
  return (xi + 1) * (xi + 1) / 4;
}

// E-measure from the confusion counts of one binarization.
double e_from_counts(long tp, long fp, long fn, long n) {
  const long positives = tp + fn;
  const long predicted = tp + fp;
  if (positives == 0) return 1.0 - static_cast<double>(predicted) / n;
  if (positives == n) return static_cast<double>(predicted) / n;
  const double mu_p = static_cast<double>(predicted) / n;
  const double mu_g = static_cast<double>(positives) / n;
  const long tn = n - tp - fp - fn;
  const double sum = tp * alignment(1, 1, mu_p, mu_g) + fp * alignment(1, 0, mu_p, mu_g) +
                     fn * alignment(0, 1, mu_p, mu_g) + tn * alignment(0, 0, mu_p, mu_g);
  return sum / n;
}

}  // namespace

double e_measure(const Plane& binary_pred, const Plane& g) {
  require_same_extent(binary_pred, g);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool p = binary_pred.values[i] > 0.5;
    const bool t = g.values[i] > 0.5;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  return e_from_counts(tp, fp, fn, static_cast<long>(g.size()));
}

double e_measure_max(const Plane& s, const Plane& g) {
  const ThresholdCounts counts = threshold_counts(min_max_normalized(s), g);
  const long n = static_cast<long>(g.size());
  double best = 0;
  for (int k = 0; k < kThresholds; ++k) {
    best = std::max(best, e_from_counts(counts.tp[k], counts.fp[k], counts.fn[k], n));
  }
  return best;
}

ImageMetrics evaluate_pair(const Plane& s, const Plane& g, std::string stem) {
  Plane mask(g.rows, g.cols);
  for (std::size_t i = 0; i < g.size(); ++i) mask.values[i] = g.values[i] > 0.5 ? 1.0 : 0.0;
  ImageMetrics m;
  m.stem = std::move(stem);
  m.mae = mae(s, mask);
  m.s_alpha = s_measure(s, mask);
  m.f_beta_max = f_measure_max(s, mask);
  m.e_xi_max = e_measure_max(s, mask);
  return m;
}

MetricsReport aggregate(std::vector<ImageMetrics> per_image) {
  MetricsReport r;
  for (const auto& m : per_image) {
    r.s_alpha += m.s_alpha;
    r.f_beta_max += m.f_beta_max;
    r.e_xi_max += m.e_xi_max;
    r.mae += m.mae;
  }
  if (!per_image.empty()) {
    const double n = static_cast<double>(per_image.size());
    r.s_alpha /= n;
    r.f_beta_max /= n;
    r.e_xi_max /= n;
    r.mae /= n;
  }
  r.per_image = std::move(per_image);
  return r;
}

MetricsReport evaluate_dataset(const std::filesystem::path& pred_dir,
                               const std::filesystem::path& gt_dir) {
  std::vector<std::string> errors;
  std::map<std::string, std::filesystem::path> preds, gts;
  try {
    preds = index_images(pred_dir);
  } catch (const std::exception& e) {
    errors.push_back("cannot list predictions in " + pred_dir.string() + ": " + e.what());
  }
  try {
    gts = index_images(gt_dir);
  } catch (const std::exception& e) {
    errors.push_back("cannot list ground truth in " + gt_dir.string() + ": " + e.what());
  }
  std::vector<ImageMetrics> rows;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) {
      errors.push_back("missing prediction for '" + stem + "'");
      continue;
    }
    try {
      const Image gt = read_image(gt_path, ReadMode::kGray);
      Image pred = read_image(it->second, ReadMode::kGray);
      pred = resize_image(pred, gt.rows, gt.cols, false);
      Plane s(gt.rows, gt.cols), g(gt.rows, gt.cols);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s.values[i] = std::clamp(static_cast<double>(pred.values[i]), 0.0, 1.0);
        // 8-bit value > 127 ⇔ scaled value > 127/255.
        g.values[i] = gt.values[i] * 255.0f > 127.5f ? 1.0 : 0.0;
      }
      rows.push_back(evaluate_pair(s, g, stem));
    } catch (const std::exception& e) {
      errors.push_back("'" + stem + "': " + e.what());
    }
  }
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) errors.push_back("missing ground truth for '" + stem + "'");
  }
  MetricsReport report = aggregate(std::move(rows));
  report.errors = std::move(errors);
  return report;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::json j;
  j["s_alpha"] = report.s_alpha;
  j["f_beta_max"] = report.f_beta_max;
  j["e_xi_max"] = report.e_xi_max;
  j["mae"] = report.mae;
  j["count"] = report.per_image.size();
  j["per_image"] = nlohmann::json::array();
  for (const auto& m : report.per_image) {
    j["per_image"].push_back({{"stem", m.stem},
                              {"s_alpha", m.s_alpha},
                              {"f_beta_max", m.f_beta_max},
                              {"e_xi_max", m.e_xi_max},
                              {"mae", m.mae}});
  }
  j["errors"] = report.errors;
  return j.dump(2);
}

std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t label_width = 8;
  for (const auto& [label, r] : rows) label_width = std::max(label_width, label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width)) << "Setting"
      << "  S_alpha↑  F_beta^max↑  E_xi^max↑     M↓\n";
  out << std::string(label_width + 42, '-') << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& [label, r] : rows) {
    // Labels may hold multi-byte arrows; pad on code points.
    std::size_t glyphs = 0;
    for (unsigned char ch : label) glyphs += (ch & 0xC0) != 0x80;
    out << label << std::string(label_width - std::min(label_width, glyphs) + 2, ' ')
        << std::right << std::setw(7) << r.s_alpha << std::setw(13) << r.f_beta_max
        << std::setw(11) << r.e_xi_max << std::setw(7) << r.mae << std::left << '\n';
  }
  return out.str();
}

}  // namespace btsnet::metrics
