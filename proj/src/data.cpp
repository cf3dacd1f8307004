#include "btsnet/data.hpp"

#include <algorithm>
#include <cmath>

#include "btsnet/errors.hpp"
#include "btsnet/image_io.hpp"

namespace btsnet {

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (expected train or test)");
}

namespace {

Tensor<float> to_tensor(const Image& img) {
  Tensor<float> t(Shape{1, img.channels, img.rows, img.cols});
  std::copy(img.values.begin(), img.values.end(), t.data());
  return t;
}

Image to_image(const Tensor<float>& t) {
  Image img;
  img.rows = t.h();
  img.cols = t.w();
  img.channels = t.c();
  img.values.assign(t.data(), t.data() + t.size());
  return img;
}

Tensor<float> channel_mean(const Image& img) {
  Tensor<float> t(Shape{1, 1, img.rows, img.cols});
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) {
      float acc = 0;
      for (int ch = 0; ch < img.channels; ++ch) acc += img.at(ch, r, c);
      t.at(0, 0, r, c) = acc / img.channels;
    }
  return t;
}

Tensor<float> resize(const Tensor<float>& t, int h, int w, bool nearest) {
  return to_tensor(resize_image(to_image(t), h, w, nearest));
}

void mirror(Tensor<float>& t) {
  for (int c = 0; c < t.c(); ++c)
    for (int r = 0; r < t.h(); ++r) {
      float* row = &t.at(0, c, r, 0);
      std::reverse(row, row + t.w());
    }
}

}  // namespace

std::vector<Sample> load_dataset(const DatasetSpec& spec) {
  std::vector<std::string> errors;
  const std::array<std::string, 3> folders{"RGB", "depth", "GT"};
  std::array<std::map<std::string, std::filesystem::path>, 3> index;
  for (int i = 0; i < 3; ++i) {
    const auto dir = spec.root / folders[i];
    if (!std::filesystem::is_directory(dir)) {
      errors.push_back("missing subdirectory " + dir.string());
      continue;
    }
    index[i] = index_images(dir);
  }
  if (!errors.empty()) throw ItemizedError(errors);

  std::vector<std::string> stems;
  for (const auto& [stem, path] : index[0]) {
    if (index[1].count(stem) && index[2].count(stem)) stems.push_back(stem);
  }
  std::map<std::string, std::vector<std::string>> missing;
  for (int i = 0; i < 3; ++i)
    for (const auto& [stem, path] : index[i])
      for (int j = 0; j < 3; ++j)
        if (!index[j].count(stem)) missing[stem].push_back(folders[j]);
  for (auto& [stem, where] : missing) {
    std::sort(where.begin(), where.end());
    where.erase(std::unique(where.begin(), where.end()), where.end());
    std::string joined;
    for (const auto& f : where) joined += (joined.empty() ? "" : ", ") + f + "/";
    errors.push_back("stem '" + stem + "' missing from " + joined);
  }

  std::vector<Sample> out;
  for (const auto& stem : stems) {
    try {
      Sample s;
      s.stem = stem;
      Image rgb = read_image(index[0].at(stem), ReadMode::kColor);
      Image depth = read_image(index[1].at(stem), ReadMode::kUnchanged);
      Image gt = read_image(index[2].at(stem), ReadMode::kUnchanged);
      s.rgb = to_tensor(rgb);
      s.depth = channel_mean(depth);
      if (!spec.depth_near_is_high) {
        for (auto& v : s.depth.span()) v = 1.0f - v;
      }
      if (depth.rows != rgb.rows || depth.cols != rgb.cols) {
        s.depth = resize(s.depth, rgb.rows, rgb.cols, false);
      }
      Tensor<float> mask = channel_mean(gt);
      for (auto& v : mask.span()) v = v * 255.0f > 127.5f ? 1.0f : 0.0f;
      if (gt.rows != rgb.rows || gt.cols != rgb.cols) {
        mask = resize(mask, rgb.rows, rgb.cols, true);
      }
      s.gt = std::move(mask);
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      errors.push_back("'" + stem + "': " + e.what());
    }
  }
  if (!errors.empty()) throw ItemizedError(errors);
  return out;
}

Sample preprocess(const Sample& sample, int h, int w, bool flip) {
  if (h < 1 || w < 1) throw PreconditionError("preprocess target size must be positive");
  Sample out;
  out.stem = sample.stem;
  out.rgb = resize(sample.rgb, h, w, false);
  for (auto& v : out.rgb.span()) v = std::clamp(v, 0.0f, 1.0f);
  out.depth = resize(sample.depth, h, w, false);
  out.gt = resize(sample.gt, h, w, true);
  const float lo = out.depth.min(), hi = out.depth.max();
  for (auto& v : out.depth.span()) v = hi > lo ? (v - lo) / (hi - lo) : 0.5f;
  if (flip) {
    mirror(out.rgb);
    mirror(out.depth);
    mirror(out.gt);
  }
  return out;
}

Sample preprocess_train(const Sample& sample, int h, int w, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  return preprocess(sample, h, w, coin(rng));
}

namespace {

struct Shape2d {
  int kind;  // 0 ellipse, 1 rectangle, 2 triangle
  double cx, cy, a, b;
  double depth;
  std::array<float, 3> color;

  bool contains(double x, double y) const {
    const double dx = (x - cx) / a, dy = (y - cy) / b;
    switch (kind) {
      case 0: return dx * dx + dy * dy <= 1.0;
      case 1: return std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
      default: return dy <= 1.0 && dy >= 2.0 * std::abs(dx) - 1.0;
    }
  }
};

}  // namespace

std::vector<Sample> synthetic_dataset(int n, std::uint64_t seed, int h, int w) {
  if (n < 1) throw PreconditionError("synthetic_dataset needs n >= 1");
  if (h < 8 || w < 8) throw PreconditionError("synthetic scenes need at least 8x8 pixels");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.stem = "synth_" + std::string(i < 10 ? "000" : i < 100 ? "00" : i < 1000 ? "0" : "") +
             std::to_string(i);
    s.rgb = Tensor<float>(Shape{1, 3, h, w});
    s.depth = Tensor<float>(Shape{1, 1, h, w});
    s.gt = Tensor<float>(Shape{1, 1, h, w});

    std::vector<Shape2d> shapes;
    double fraction = 0;
    do {
      shapes.clear();
      const int count = 1 + static_cast<int>(unit(rng) * 3) % 3;
      for (int k = 0; k < count; ++k) {
        Shape2d sh;
        sh.kind = static_cast<int>(unit(rng) * 3) % 3;
        sh.a = (0.12 + 0.2 * unit(rng)) * w;
        sh.b = (0.12 + 0.2 * unit(rng)) * h;
        sh.cx = sh.a + unit(rng) * (w - 2 * sh.a);
        sh.cy = sh.b + unit(rng) * (h - 2 * sh.b);
        sh.depth = 0.65 + 0.3 * unit(rng);
        // Saturated colors, distinct from the gray-ish background.
        for (auto& c : sh.color) c = static_cast<float>(unit(rng) < 0.5 ? 0.1 + 0.2 * unit(rng)
                                                                          : 0.7 + 0.3 * unit(rng));
        sh.color[k % 3] = 0.95f;
        shapes.push_back(sh);
      }
      long inside = 0;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          for (const auto& sh : shapes) {
            if (sh.contains(c + 0.5, r + 0.5)) {
              ++inside;
              break;
            }
          }
        }
      fraction = static_cast<double>(inside) / (static_cast<double>(h) * w);
    } while (fraction < 0.05 || fraction > 0.6);

    const double fx = 1 + 3 * unit(rng), fy = 1 + 3 * unit(rng), phase = 6.283 * unit(rng);
    const double tilt = 0.1 + 0.2 * unit(rng);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double x = c + 0.5, y = r + 0.5;
        const Shape2d* top = nullptr;
        for (const auto& sh : shapes) {
          if (sh.contains(x, y) && (!top || sh.depth > top->depth)) top = &sh;
        }
        const double noise = 0.04 * (unit(rng) - 0.5);
        if (top) {
          for (int ch = 0; ch < 3; ++ch) s.rgb.at(0, ch, r, c) = top->color[ch];
          s.depth.at(0, 0, r, c) = static_cast<float>(top->depth + noise);
          s.gt.at(0, 0, r, c) = 1.0f;
        } else {
          const double texture =
              0.5 + 0.15 * std::sin(fx * 6.283 * x / w + phase) * std::cos(fy * 6.283 * y / h);
          for (int ch = 0; ch < 3; ++ch) {
            s.rgb.at(0, ch, r, c) = static_cast<float>(texture + 0.05 * (ch - 1) + noise);
          }
          s.depth.at(0, 0, r, c) = static_cast<float>(0.1 + tilt * y / h + noise);
        }
      }
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
Batch<T> make_batch(std::span<const Sample> samples, const RgbNormalization& norm) {
  if (samples.empty()) throw PreconditionError("empty batch");
  const Shape first = samples[0].rgb.shape();
  Batch<T> b;
  const int n = static_cast<int>(samples.size());
  b.rgb = Tensor<T>(Shape{n, 3, first.h, first.w});
  b.depth = Tensor<T>(Shape{n, 1, first.h, first.w});
  b.gt = Tensor<T>(Shape{n, 1, first.h, first.w});
  for (int i = 0; i < n; ++i) {
    const Sample& s = samples[i];
    if (s.rgb.shape() != first || s.depth.h() != first.h || s.depth.w() != first.w ||
        s.gt.h() != first.h || s.gt.w() != first.w) {
      throw PreconditionError("batch samples differ in size: '" + s.stem + "'");
    }
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < first.h; ++r)
        for (int col = 0; col < first.w; ++col) {
          b.rgb.at(i, c, r, col) =
              static_cast<T>((s.rgb.at(0, c, r, col) - norm.mean[c]) / norm.stddev[c]);
        }
    for (int r = 0; r < first.h; ++r)
      for (int col = 0; col < first.w; ++col) {
        b.depth.at(i, 0, r, col) = static_cast<T>(s.depth.at(0, 0, r, col));
        b.gt.at(i, 0, r, col) = static_cast<T>(s.gt.at(0, 0, r, col));
      }
    b.stems.push_back(s.stem);
  }
  return b;
}

template Batch<float> make_batch(std::span<const Sample>, const RgbNormalization&);
template Batch<double> make_batch(std::span<const Sample>, const RgbNormalization&);

void write_dataset(const std::filesystem::path& root, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    write_image8(root / "RGB" / (s.stem + ".png"), to_image(s.rgb));
    write_image8(root / "depth" / (s.stem + ".png"), to_image(s.depth));
    write_image8(root / "GT" / (s.stem + ".png"), to_image(s.gt));
  }
}

}  // namespace btsnet
