#include <doctest.h>

#include <random>

#include "btsnet/bts.hpp"
#include "btsnet/errors.hpp"
#include "btsnet/gradcheck.hpp"

using namespace btsnet;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.span()) v = dist(rng);
  return t;
}

std::vector<BtsConfig> all_configs() {
  std::vector<BtsConfig> out;
  for (auto d : {Direction::kNone, Direction::kRgbToDepth, Direction::kDepthToRgb,
                 Direction::kBidirectional})
    for (auto o : {AttentionOrder::kSaOnly, AttentionOrder::kCaThenSa, AttentionOrder::kSaThenCa})
      for (bool res : {false, true}) out.push_back({d, res, o});
  return out;
}

}  // namespace

TEST_CASE("all 24 configurations keep both branch shapes") {
  const auto configs = all_configs();
  REQUIRE(configs.size() == 24);
  Initializer init(1);
  for (const auto& cfg : configs) {
    CAPTURE(to_string(cfg.direction));
    CAPTURE(to_string(cfg.attention_order));
    CAPTURE(cfg.residual);
    BtsBlock<double> block(5, cfg, init);
    for (auto s : {Shape{1, 5, 4, 4}, Shape{2, 5, 7, 3}}) {
      const auto out = block.forward(Var<double>(random_tensor(s, 1)),
                                     Var<double>(random_tensor(s, 2)));
      CHECK(out.rgb.shape() == s);
      CHECK(out.depth.shape() == s);
      CHECK(out.rgb.value().all_finite());
      CHECK(out.depth.value().all_finite());
    }
  }
}

TEST_CASE("mismatched branches are rejected") {
  Initializer init(2);
  BtsBlock<double> block(3, {}, init);
  CHECK_THROWS_AS(block.forward(Var<double>(random_tensor({1, 3, 4, 4}, 1)),
                                Var<double>(random_tensor({1, 3, 4, 5}, 2))),
                  ConfigError);
}

TEST_CASE("cross transfer against hand-computed values") {
  const Tensor<double> sa_r(Shape{1, 1, 1, 2}, {0.2, 0.9});
  const Tensor<double> sa_d(Shape{1, 1, 1, 2}, {0.5, 0.1});
  const Tensor<double> bf_r(Shape{1, 2, 1, 2}, {1, 2, 3, 4});
  const Tensor<double> bf_d(Shape{1, 2, 1, 2}, {-1, 5, 2, -3});
  auto run = [&](Direction d) {
    return cross_transfer(d, Var<double>(sa_r), Var<double>(sa_d), Var<double>(bf_r),
                          Var<double>(bf_d));
  };
  // received into rgb: sa_d + sa_d * sa_r = {0.6, 0.19}
  // received into depth: sa_r + sa_r * sa_d = {0.3, 0.99}
  const std::vector<double> own_r = {0.2, 1.8, 0.6, 3.6};
  const std::vector<double> own_d = {-0.5, 0.5, 1.0, -0.3};
  const std::vector<double> recv_r = {0.6, 0.38, 1.8, 0.76};
  const std::vector<double> recv_d = {-0.3, 4.95, 0.6, -2.97};
  struct Expect {
    Direction d;
    const std::vector<double>& rgb;
    const std::vector<double>& depth;
  };
  for (const Expect& e : {Expect{Direction::kNone, own_r, own_d},
                          Expect{Direction::kRgbToDepth, own_r, recv_d},
                          Expect{Direction::kDepthToRgb, recv_r, own_d},
                          Expect{Direction::kBidirectional, recv_r, recv_d}}) {
    CAPTURE(to_string(e.d));
    const auto out = run(e.d);
    for (int i = 0; i < 4; ++i) {
      CHECK(out.rgb.value()[i] == doctest::Approx(e.rgb[i]).epsilon(1e-12));
      CHECK(out.depth.value()[i] == doctest::Approx(e.depth[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("a branch that receives nothing ignores the partner") {
  Initializer init(3);
  const Shape s{1, 4, 5, 5};
  const auto r = random_tensor(s, 1), d = random_tensor(s, 2), d2 = random_tensor(s, 3);
  const auto r2 = random_tensor(s, 4);
  for (const auto& cfg : all_configs()) {
    CAPTURE(to_string(cfg.direction));
    CAPTURE(to_string(cfg.attention_order));
    BtsBlock<double> block(4, cfg, init);
    const auto base = block.forward(Var<double>(r), Var<double>(d));
    const auto new_depth = block.forward(Var<double>(r), Var<double>(d2));
    const auto new_rgb = block.forward(Var<double>(r2), Var<double>(d));
    const double rgb_shift = max_abs_diff(base.rgb.value(), new_depth.rgb.value());
    const double depth_shift = max_abs_diff(base.depth.value(), new_rgb.depth.value());
    const bool into_rgb =
        cfg.direction == Direction::kDepthToRgb || cfg.direction == Direction::kBidirectional;
    const bool into_depth =
        cfg.direction == Direction::kRgbToDepth || cfg.direction == Direction::kBidirectional;
    if (into_rgb) CHECK(rgb_shift > 1e-6); else CHECK(rgb_shift == 0.0);
    if (into_depth) CHECK(depth_shift > 1e-6); else CHECK(depth_shift == 0.0);
  }
}

TEST_CASE("sa_only registers no channel selection") {
  Initializer init(4);
  BtsBlock<float> sa(8, {Direction::kBidirectional, false, AttentionOrder::kSaOnly}, init);
  BtsBlock<float> ca(8, {Direction::kBidirectional, false, AttentionOrder::kSaThenCa}, init);
  CHECK(sa.cs_rgb() == nullptr);
  // two 3x3 attention convs with bias
  CHECK(sa.parameter_count() == 2 * (8 * 9 + 1));
  // plus two biased 1x1 C->C convs
  CHECK(ca.parameter_count() == 2 * (8 * 9 + 1) + 2 * (8 * 8 + 8));
}

TEST_CASE("residual adds the block input") {
  Initializer a(5), b(5);
  BtsBlock<double> plain(3, {Direction::kBidirectional, false, AttentionOrder::kSaThenCa}, a);
  BtsBlock<double> res(3, {Direction::kBidirectional, true, AttentionOrder::kSaThenCa}, b);
  const auto r = random_tensor({1, 3, 4, 4}, 1), d = random_tensor({1, 3, 4, 4}, 2);
  const auto p = plain.forward(Var<double>(r), Var<double>(d));
  const auto q = res.forward(Var<double>(r), Var<double>(d));
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(q.rgb.value()[i] == doctest::Approx(p.rgb.value()[i] + r[i]).epsilon(1e-12));
    CHECK(q.depth.value()[i] == doctest::Approx(p.depth.value()[i] + d[i]).epsilon(1e-12));
  }
}

TEST_CASE("bts gradients match central differences in every configuration") {
  const auto r = grad_check<double>("bts", GradCheckOptions{});
  CAPTURE(r.worst);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-4);
}
