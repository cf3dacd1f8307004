#include <doctest.h>

#include <random>

#include "btsnet/audit.hpp"
#include "btsnet/encoder.hpp"
#include "btsnet/errors.hpp"

using namespace btsnet;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

std::size_t bconv_count(std::size_t in, std::size_t out, std::size_t k) {
  return in * out * k * k + 2 * out;
}

}  // namespace

TEST_CASE("backbone layouts") {
  const auto full = BackboneConfig::full();
  CHECK(full.output_strides() == std::array<int, 5>{2, 4, 8, 16, 16});
  CHECK(full.level_channels() == std::array<int, 6>{64, 256, 512, 1024, 2048, 2048});
  const auto tiny = BackboneConfig::tiny();
  CHECK(tiny.output_strides() == std::array<int, 5>{1, 2, 4, 8, 8});
  CHECK(tiny.level_channels() == std::array<int, 6>{4, 8, 8, 16, 16, 16});

  auto bad = tiny;
  bad.stage_strides[4] = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny;
  bad.stem_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("depth stem replicates a normalized map") {
  Tensor<double> d = random_tensor<double>({2, 1, 3, 4}, 1, 0, 1);
  const auto y = depth_stem(Var<double>(d));
  REQUIRE(y.shape() == Shape{2, 3, 3, 4});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 4; ++k) CHECK(y.value().at(n, c, r, k) == d.at(n, 0, r, k));
  d[5] = 1.01;
  CHECK_THROWS_AS(depth_stem(Var<double>(d)), PreconditionError);
  CHECK_THROWS_AS(depth_stem(Var<double>(Tensor<double>(Shape{1, 2, 3, 3}))), PreconditionError);
}

TEST_CASE("tiny encoder pyramid shapes and finiteness") {
  Initializer init(1);
  Encoder<double> enc(BackboneConfig::tiny(), {}, init);
  CHECK(enc.bts_count() == 5);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto rgb = random_tensor<double>({2, 3, 32, 32}, seed, -2, 2);
    const auto depth = random_tensor<double>({2, 1, 32, 32}, seed + 10, 0, 1);
    const auto out = enc.forward(Var<double>(rgb), depth_stem(Var<double>(depth)));
    const Shape expect[6] = {{2, 4, 32, 32}, {2, 8, 16, 16}, {2, 8, 8, 8},
                             {2, 16, 4, 4},  {2, 16, 4, 4},  {2, 16, 4, 4}};
    for (int i = 0; i < 6; ++i) {
      CAPTURE(i);
      CHECK(out.rgb.levels[i].shape() == expect[i]);
      CHECK(out.depth.levels[i].shape() == expect[i]);
      CHECK(out.rgb.levels[i].value().all_finite());
      CHECK(out.depth.levels[i].value().all_finite());
    }
  }
  CHECK_THROWS_AS(enc.forward(Var<double>(Tensor<double>(Shape{1, 3, 32, 32})),
                              Var<double>(Tensor<double>(Shape{1, 3, 16, 16}))),
                  ConfigError);
}

TEST_CASE("full encoder pyramid shapes at 352") {
  Initializer init(2);
  Encoder<float> enc(BackboneConfig::full(), {}, init);
  enc.set_training(false);
  NoGradGuard guard;
  const auto rgb = random_tensor<float>({1, 3, 352, 352}, 1, -2, 2);
  const auto depth = random_tensor<float>({1, 1, 352, 352}, 2, 0, 1);
  const auto out = enc.forward(Var<float>(rgb), depth_stem(Var<float>(depth)));
  const Shape expect[6] = {{1, 64, 176, 176}, {1, 256, 88, 88},  {1, 512, 44, 44},
                           {1, 1024, 22, 22}, {1, 2048, 22, 22}, {1, 2048, 22, 22}};
  for (int i = 0; i < 6; ++i) {
    CAPTURE(i);
    CHECK(out.rgb.levels[i].shape() == expect[i]);
    CHECK(out.depth.levels[i].shape() == expect[i]);
    CHECK(out.rgb.levels[i].value().all_finite());
    CHECK(out.depth.levels[i].value().all_finite());
  }
}

TEST_CASE("full encoder parameter counts") {
  const ParameterAudit a = audit_parameters(Scale::kFull);
  // Torchvision's ResNet-50 has 25,557,032 scalars of which the classifier
  // takes 2048 * 1000 + 1000, so one trunk is 23,508,032.
  const std::size_t trunk = 25'557'032 - 2'049'000;
  const std::size_t aspp = bconv_count(2048, 256, 1)          // rate 1
                           + 3 * bconv_count(2048, 256, 3)    // rates 6, 12, 18
                           + bconv_count(2048, 256, 1)        // image pooling
                           + bconv_count(5 * 256, 2048, 1);   // projection
  CHECK(a.encoder_without_bts == 2 * trunk + 2 * aspp);
  CHECK(a.encoder_without_bts == 82'680'960);

  // Per block: two biased 3x3 C->1 convs and two biased 1x1 C->C convs.
  std::size_t delta = 0;
  for (std::size_t c : {64, 256, 512, 1024, 2048}) delta += 2 * (9 * c + 1) + 2 * (c * c + c);
  CHECK(a.bts_delta == delta);
  CHECK(a.bts_delta == 11'227'402);
  CHECK(a.encoder_with_bts == a.encoder_without_bts + a.bts_delta);
  CHECK(a.encoder_with_bts == 93'908'362);
}

TEST_CASE("sa_only encoder drops exactly the channel-selection convs") {
  const auto with_ca = audit_parameters(Scale::kTiny);
  const auto sa_only =
      audit_parameters(Scale::kTiny, {Direction::kBidirectional, false, AttentionOrder::kSaOnly});
  std::size_t cs = 0;
  for (std::size_t c : {4, 8, 8, 16, 16}) cs += 2 * (c * c + c);
  CHECK(with_ca.bts_delta - sa_only.bts_delta == cs);
  CHECK(with_ca.encoder_without_bts == sa_only.encoder_without_bts);
}
