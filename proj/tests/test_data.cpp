#include <doctest.h>

#include <filesystem>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "btsnet/data.hpp"
#include "btsnet/errors.hpp"

using namespace btsnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_triple(const fs::path& root, const std::string& stem, bool depth = true) {
  fs::create_directories(root / "RGB");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "GT");
  cv::Mat rgb(4, 6, CV_8UC3, cv::Scalar(10, 20, 30));  // BGR on disk
  cv::imwrite((root / "RGB" / (stem + ".jpg")).string(), rgb);
  if (depth) {
    cv::Mat d(4, 6, CV_16UC1, cv::Scalar(0));
    d.at<std::uint16_t>(0, 0) = 65535;
    d.at<std::uint16_t>(1, 1) = 32768;
    cv::imwrite((root / "depth" / (stem + ".png")).string(), d);
  }
  cv::Mat gt(4, 6, CV_8UC1, cv::Scalar(0));
  gt.at<std::uint8_t>(0, 0) = 127;
  gt.at<std::uint8_t>(0, 1) = 128;
  gt.at<std::uint8_t>(3, 5) = 255;
  cv::imwrite((root / "GT" / (stem + ".png")).string(), gt);
}

double fg_fraction(const Sample& s) {
  double fg = 0;
  for (float v : s.gt.span()) fg += v;
  return fg / s.gt.size();
}

}  // namespace

TEST_CASE("directory dataset decoding") {
  TempDir dir("btsnet_data_fixture");
  write_triple(dir.path, "b");
  write_triple(dir.path, "a");
  const auto samples = load_dataset({dir.path, Split::kTest, "fixture", true});
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].stem == "a");
  const Sample& s = samples[0];
  CHECK(s.rgb.shape() == Shape{1, 3, 4, 6});
  CHECK(s.depth.shape() == Shape{1, 1, 4, 6});
  CHECK(s.gt.shape() == Shape{1, 1, 4, 6});
  // channel order is R, G, B
  CHECK(s.rgb.at(0, 0, 0, 0) == doctest::Approx(30 / 255.0).epsilon(0.02));
  CHECK(s.rgb.at(0, 2, 0, 0) == doctest::Approx(10 / 255.0).epsilon(0.02));
  // 16-bit depth scales by its container
  CHECK(s.depth.at(0, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(s.depth.at(0, 0, 1, 1) == doctest::Approx(32768 / 65535.0));
  CHECK(s.depth.at(0, 0, 2, 2) == 0.0f);
  // 8-bit threshold: 127 is background, 128 foreground
  CHECK(s.gt.at(0, 0, 0, 0) == 0.0f);
  CHECK(s.gt.at(0, 0, 0, 1) == 1.0f);
  CHECK(s.gt.at(0, 0, 3, 5) == 1.0f);

  const auto far_high = load_dataset({dir.path, Split::kTest, "fixture", false});
  CHECK(far_high[0].depth.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(far_high[0].depth.at(0, 0, 2, 2) == doctest::Approx(1.0));
}

TEST_CASE("missing stems and folders are itemized") {
  TempDir dir("btsnet_data_missing");
  write_triple(dir.path, "a");
  write_triple(dir.path, "c", false);
  fs::remove(dir.path / "GT" / "a.png");
  try {
    load_dataset({dir.path, Split::kTrain, "", true});
    FAIL("expected ItemizedError");
  } catch (const ItemizedError& e) {
    REQUIRE(e.items().size() == 2);
    CHECK(e.items()[0] == "stem 'a' missing from GT/");
    CHECK(e.items()[1] == "stem 'c' missing from depth/");
  }
  fs::remove_all(dir.path / "depth");
  fs::remove_all(dir.path / "GT");
  try {
    load_dataset({dir.path, Split::kTrain, "", true});
    FAIL("expected ItemizedError");
  } catch (const ItemizedError& e) {
    CHECK(e.items().size() == 2);
  }
}

TEST_CASE("preprocessing") {
  const auto samples = synthetic_dataset(2, 5, 40, 48);
  const Sample p = preprocess(samples[0], 32, 24);
  CHECK(p.rgb.shape() == Shape{1, 3, 32, 24});
  CHECK(p.depth.shape() == Shape{1, 1, 32, 24});
  CHECK(p.gt.shape() == Shape{1, 1, 32, 24});
  CHECK(p.depth.min() == 0.0f);
  CHECK(p.depth.max() == 1.0f);
  for (float v : p.gt.span()) CHECK((v == 0.0f || v == 1.0f));

  const Sample f = preprocess(samples[0], 32, 24, true);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 24; ++c) {
      CHECK(f.gt.at(0, 0, r, c) == p.gt.at(0, 0, r, 23 - c));
      CHECK(f.rgb.at(0, 1, r, c) == p.rgb.at(0, 1, r, 23 - c));
    }

  Sample flat = samples[1];
  flat.depth.fill(0.3f);
  const Sample q = preprocess(flat, 8, 8);
  CHECK(q.depth.min() == 0.5f);
  CHECK(q.depth.max() == 0.5f);
  CHECK_THROWS_AS(preprocess(flat, 0, 8), PreconditionError);

  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 5; ++i) {
    CHECK(max_abs_diff(preprocess_train(samples[0], 16, 16, a).gt,
                       preprocess_train(samples[0], 16, 16, b).gt) == 0.0);
  }
}

TEST_CASE("synthetic scenes") {
  const auto a = synthetic_dataset(12, 7, 64, 64);
  const auto b = synthetic_dataset(12, 7, 64, 64);
  const auto c = synthetic_dataset(12, 8, 64, 64);
  REQUIRE(a.size() == 12);
  CHECK(a[0].stem == "synth_0000");
  CHECK(a[11].stem == "synth_0011");
  double differs = 0;
  for (int i = 0; i < 12; ++i) {
    CHECK(max_abs_diff(a[i].rgb, b[i].rgb) == 0.0);
    CHECK(max_abs_diff(a[i].depth, b[i].depth) == 0.0);
    CHECK(max_abs_diff(a[i].gt, b[i].gt) == 0.0);
    differs += max_abs_diff(a[i].gt, c[i].gt);
    const double fg = fg_fraction(a[i]);
    CHECK(fg >= 0.05);
    CHECK(fg <= 0.6);
    CHECK(a[i].rgb.min() >= 0.0f);
    CHECK(a[i].rgb.max() <= 1.0f);
    // thresholding depth reproduces the mask
    for (std::size_t k = 0; k < a[i].gt.size(); ++k) {
      CHECK((a[i].depth[k] > 0.5f) == (a[i].gt[k] == 1.0f));
    }
  }
  CHECK(differs > 0);
}

TEST_CASE("batches standardize rgb") {
  const auto samples = synthetic_dataset(3, 1, 8, 8);
  RgbNormalization norm;
  const auto batch = make_batch<double>(samples, norm);
  CHECK(batch.rgb.shape() == Shape{3, 3, 8, 8});
  CHECK(batch.depth.shape() == Shape{3, 1, 8, 8});
  CHECK(batch.stems == std::vector<std::string>{"synth_0000", "synth_0001", "synth_0002"});
  const double expect = (samples[2].rgb.at(0, 1, 4, 5) - norm.mean[1]) / norm.stddev[1];
  CHECK(batch.rgb.at(2, 1, 4, 5) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(batch.gt.at(1, 0, 3, 3) == samples[1].gt.at(0, 0, 3, 3));
}

TEST_CASE("written datasets load back") {
  TempDir dir("btsnet_data_roundtrip");
  const auto samples = synthetic_dataset(3, 11, 24, 20);
  write_dataset(dir.path, samples);
  const auto back = load_dataset({dir.path, Split::kTrain, "", true});
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].stem == samples[i].stem);
    CHECK(max_abs_diff(back[i].gt, samples[i].gt) == 0.0);
    CHECK(max_abs_diff(back[i].rgb, samples[i].rgb) <= 0.5 / 255 + 1e-6);
    CHECK(max_abs_diff(back[i].depth, samples[i].depth) <= 0.5 / 255 + 1e-6);
  }
}

TEST_CASE("split names") {
  CHECK(parse_split("train") == Split::kTrain);
  CHECK(to_string(Split::kTest) == "test");
  CHECK_THROWS_AS(parse_split("val"), ConfigError);
}
