#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "btsnet/image_io.hpp"
#include "btsnet/metrics.hpp"
#include "reference_metrics.hpp"

using namespace btsnet;
using namespace btsnet::metrics;
namespace ref = btsnet::testing::ref;

namespace {

Plane random_map(int r, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0, 1);
  Plane p(r, c);
  for (auto& v : p.values) v = d(rng);
  return p;
}

Plane random_mask(int r, int c, std::mt19937_64& rng, double fg) {
  std::bernoulli_distribution b(fg);
  Plane p(r, c);
  for (auto& v : p.values) v = b(rng) ? 1.0 : 0.0;
  return p;
}

}  // namespace

TEST_CASE("threshold counts match brute force") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    Plane s = random_map(7, 9, rng);
    // values sitting exactly on thresholds
    s.values[0] = 0;
    s.values[1] = 1;
    s.values[2] = 100 / 255.0;
    s.values[3] = 254 / 255.0;
    const Plane g = random_mask(7, 9, rng, 0.3);
    const auto counts = threshold_counts(s, g);
    for (int k = 0; k < 256; ++k) {
      long tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const bool p = s.values[i] > k / 255.0, q = g.values[i] > 0.5;
        tp += p && q;
        fp += p && !q;
        fn += !p && q;
      }
      CHECK(counts.tp[k] == tp);
      CHECK(counts.fp[k] == fp);
      CHECK(counts.fn[k] == fn);
    }
  }
}

TEST_CASE("100 random 8x8 pairs agree with the reference implementations") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> frac(0.05, 0.8);
  for (int t = 0; t < 100; ++t) {
    const Plane s = random_map(8, 8, rng);
    const Plane g = random_mask(8, 8, rng, frac(rng));
    CAPTURE(t);
    CHECK(f_measure_max(s, g) == doctest::Approx(ref::f_max(s, g)).epsilon(1e-12));
    CHECK(e_measure_max(s, g) == doctest::Approx(ref::e_max(s, g)).epsilon(1e-12));
    CHECK(metrics::s_measure(s, g) == doctest::Approx(ref::s_measure(s, g)).epsilon(1e-12));
    double m = 0;
    for (std::size_t i = 0; i < s.size(); ++i) m += std::abs(s.values[i] - g.values[i]) / 64;
    CHECK(mae(s, g) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("anchors") {
  std::mt19937_64 rng(3);
  const Plane g = random_mask(10, 12, rng, 0.4);
  SUBCASE("perfect prediction") {
    CHECK(metrics::s_measure(g, g) == 1.0);
    CHECK(f_measure_max(g, g) == 1.0);
    CHECK(e_measure_max(g, g) == 1.0);
    CHECK(mae(g, g) == 0.0);
  }
  SUBCASE("all-zero prediction on a nonempty mask") {
    const Plane z(10, 12, 0.0);
    CHECK(f_measure_max(z, g) == 0.0);
    CHECK(mae(z, g) == doctest::Approx(std::count(g.values.begin(), g.values.end(), 1.0) / 120.0));
  }
  SUBCASE("empty mask uses the mean-prediction branch") {
    const Plane empty(4, 4, 0.0);
    Plane s(4, 4, 0.25);
    CHECK(metrics::s_measure(s, empty) == doctest::Approx(0.75));
    CHECK(metrics::s_measure(Plane(4, 4, 0.0), empty) == 1.0);
    CHECK(f_measure_max(Plane(4, 4, 0.0), empty) == 1.0);
    CHECK(e_measure(Plane(4, 4, 0.0), empty) == 1.0);
    CHECK(e_measure(Plane(4, 4, 1.0), empty) == 0.0);
  }
  SUBCASE("full mask") {
    const Plane full(4, 4, 1.0);
    CHECK(metrics::s_measure(Plane(4, 4, 0.6), full) == doctest::Approx(0.6));
    CHECK(e_measure(Plane(4, 4, 1.0), full) == 1.0);
  }
  SUBCASE("inverted prediction scores low") {
    Plane inv = g;
    for (auto& v : inv.values) v = 1 - v;
    CHECK(metrics::s_measure(inv, g) < 0.5);
    CHECK(mae(inv, g) == 1.0);
  }
  SUBCASE("f_beta closed form") {
    // P = 0.8, R = 0.5
    CHECK(f_beta(4, 1, 4) == doctest::Approx(1.3 * 0.8 * 0.5 / (0.3 * 0.8 + 0.5)));
    CHECK(f_beta(0, 0, 0) == 1.0);
    CHECK(f_beta(0, 3, 2) == 0.0);
  }
}

TEST_CASE("a perfect prediction scores exactly 1 on any mask") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> frac(0.02, 0.98);
  for (int t = 0; t < 50; ++t) {
    const Plane g = random_mask(5 + t % 7, 4 + t % 5, rng, frac(rng));
    CAPTURE(t);
    CHECK(metrics::s_measure(g, g) == 1.0);
    CHECK(f_measure_max(g, g) == 1.0);
    CHECK(e_measure_max(g, g) == 1.0);
  }
}

TEST_CASE("scores stay in [0, 1]") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const Plane s = random_map(6, 5, rng);
    const Plane g = random_mask(6, 5, rng, 0.5);
    for (double v : {metrics::s_measure(s, g), f_measure_max(s, g), e_measure_max(s, g), mae(s, g)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("F and E are invariant to a positive affine rescale of the map") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Plane s = random_map(8, 8, rng);
    const Plane g = random_mask(8, 8, rng, 0.3);
    Plane r = s;
    for (auto& v : r.values) v = 0.5 * v + 0.25;
    CHECK(f_measure_max(r, g) == doctest::Approx(f_measure_max(s, g)));
    CHECK(e_measure_max(r, g) == doctest::Approx(e_measure_max(s, g)));
  }
}

TEST_CASE("aggregate takes plain means") {
  const auto r = aggregate({{"a", 0.2, 0.4, 0.6, 0.1}, {"b", 0.4, 0.8, 1.0, 0.3}});
  CHECK(r.s_alpha == doctest::Approx(0.3));
  CHECK(r.f_beta_max == doctest::Approx(0.6));
  CHECK(r.e_xi_max == doctest::Approx(0.8));
  CHECK(r.mae == doctest::Approx(0.2));
  CHECK(r.per_image.size() == 2);
}

TEST_CASE("dataset evaluation itemizes missing files and scores the rest") {
  const auto root = std::filesystem::temp_directory_path() / "btsnet_metrics_fixture";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root / "pred");
  std::filesystem::create_directories(root / "gt");
  Image mask{8, 8, 1, std::vector<float>(64, 0.0f)};
  for (int i = 0; i < 24; ++i) mask.values[i] = 1.0f;
  write_image8(root / "gt" / "a.png", mask);
  write_image8(root / "pred" / "a.png", mask);
  write_image8(root / "gt" / "b.png", mask);
  write_image8(root / "pred" / "c.png", mask);
  // half-size prediction gets resized
  Image small{4, 4, 1, std::vector<float>(16, 0.0f)};
  for (int i = 0; i < 6; ++i) small.values[i] = 1.0f;
  write_image8(root / "gt" / "d.png", mask);
  write_image8(root / "pred" / "d.png", small);

  const auto report = evaluate_dataset(root / "pred", root / "gt");
  REQUIRE(report.per_image.size() == 2);
  CHECK(report.per_image[0].stem == "a");
  CHECK(report.per_image[0].mae == 0.0);
  CHECK(report.per_image[1].stem == "d");
  REQUIRE(report.errors.size() == 2);
  CHECK(report.errors[0] == "missing prediction for 'b'");
  CHECK(report.errors[1] == "missing ground truth for 'c'");
  CHECK_FALSE(report.ok());
  CHECK(report_json(report).find("missing prediction for 'b'") != std::string::npos);
  std::filesystem::remove_all(root);
}

TEST_CASE("report table layout") {
  MetricsReport r;
  r.s_alpha = 0.9;
  r.f_beta_max = 0.85;
  r.e_xi_max = 0.95;
  r.mae = 0.04;
  const auto t = report_table({{"R↔D", r}, {"None", r}});
  CHECK(t.find("S_alpha") != std::string::npos);
  CHECK(t.find("R↔D") != std::string::npos);
  CHECK(t.find("0.900") != std::string::npos);
  CHECK(t.find("0.040") != std::string::npos);
}
