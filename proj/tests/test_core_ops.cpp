#include <doctest.h>

#include <cmath>
#include <random>

#include "btsnet/errors.hpp"
#include "btsnet/gradcheck.hpp"
#include "btsnet/layers.hpp"

using namespace btsnet;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.span()) v = dist(rng);
  return t;
}

// Direct 7-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const double* bias,
                          int stride, int pad, int dil) {
  const int kh = w.h(), kw = w.w();
  const int oh = (x.h() + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
  const int ow = (x.w() + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
  Tensor<double> y(Shape{x.n(), w.n(), oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double acc = bias ? bias[o] : 0.0;
          for (int i = 0; i < x.c(); ++i)
            for (int a = 0; a < kh; ++a)
              for (int b = 0; b < kw; ++b) {
                const int rr = r * stride - pad + a * dil, cc = c * stride - pad + b * dil;
                if (rr < 0 || cc < 0 || rr >= x.h() || cc >= x.w()) continue;
                acc += x.at(n, i, rr, cc) * w.at(o, i, a, b);
              }
          y.at(n, o, r, c) = acc;
        }
  return y;
}

double op_grad_error(const std::function<Var<double>()>& f,
                     std::vector<NamedParameter<double>> leaves) {
  GradCheckOptions opt;
  opt.samples_per_leaf = 40;
  return check_gradients<double>(f, std::move(leaves), opt).max_rel_error;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t(Shape{2, 3, 4, 5}, 1.5f);
  CHECK(t.size() == 120);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  t.at(1, 2, 3, 4) = -2;
  CHECK(t.min() == -2);
  CHECK(t.max() == 1.5f);
  const Tensor<float> s = t.slice_batch(1);
  CHECK(s.shape() == Shape{1, 3, 4, 5});
  CHECK(s.at(0, 2, 3, 4) == -2);
  const Tensor<float> parts[2] = {s, s};
  const Tensor<float> stacked = stack_batch<float>(parts);
  CHECK(stacked.shape() == Shape{2, 3, 4, 5});
  CHECK(Tensor<float>().shape() == Shape{0, 0, 0, 0});
  t[0] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("no-grad guard suppresses recording") {
  Var<double> x(random_tensor({1, 1, 2, 2}, 1), true);
  {
    NoGradGuard guard;
    CHECK_FALSE(ops::relu(x).requires_grad());
  }
  CHECK(ops::relu(x).requires_grad());
}

TEST_CASE("conv2d matches the direct loop oracle") {
  struct Case {
    Shape x;
    int out, k, stride, pad, dil;
  };
  const Case cases[] = {{{2, 3, 7, 6}, 4, 3, 1, 1, 1},
                        {{1, 2, 9, 9}, 3, 3, 2, 1, 1},
                        {{1, 4, 8, 7}, 2, 3, 1, 2, 2},
                        {{2, 5, 5, 5}, 6, 1, 1, 0, 1},
                        {{1, 3, 11, 11}, 2, 7, 2, 3, 1}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto x = random_tensor(c.x, seed++);
    const auto w = random_tensor({c.out, c.x.c, c.k, c.k}, seed++);
    const auto b = random_tensor({1, c.out, 1, 1}, seed++);
    const auto y = ops::conv2d(Var<double>(x), Var<double>(w), Var<double>(b),
                               {c.stride, c.pad, c.dil});
    CHECK(max_abs_diff(y.value(), naive_conv(x, w, b.data(), c.stride, c.pad, c.dil)) < 1e-12);
  }
}

TEST_CASE("conv layer parameter count is closed form") {
  Initializer init(1);
  Conv2d<double> conv(2, 4, 3, init, {1, 1, 1}, true);
  CHECK(conv.parameter_count() == 2 * 4 * 9 + 4);
  Var<double> x(random_tensor({1, 3, 4, 4}, 1));
  CHECK_THROWS_AS(conv.forward(x), ConfigError);
}

TEST_CASE("bconv shapes, zero input and hand-set oracle") {
  Initializer init(2);
  SUBCASE("shape contract") {
    BConv<float> layer(64, 256, 3, init);
    const auto y = layer.forward(Var<float>(Tensor<float>(Shape{2, 64, 22, 22}, 0.3f)));
    CHECK(y.shape() == Shape{2, 256, 22, 22});
    CHECK(y.value().min() >= 0.0f);
  }
  SUBCASE("all-zero input gives all-zero output") {
    BConv<double> layer(3, 5, 3, init);
    const auto y = layer.forward(Var<double>(Tensor<double>(Shape{2, 3, 6, 6})));
    CHECK(y.value().max() == 0.0);
    CHECK(y.value().min() == 0.0);
  }
  SUBCASE("1x1 weights against conv + batch-stat BN + ReLU by hand") {
    BConv<double> layer(2, 1, 1, init);
    layer.conv().weight().mutable_value() = Tensor<double>(Shape{1, 2, 1, 1}, {0.5, -1.25});
    layer.bn().gamma().mutable_value()[0] = 1.5;
    layer.bn().beta().mutable_value()[0] = 0.2;
    const auto x = random_tensor({1, 2, 4, 4}, 7);
    const auto y = layer.forward(Var<double>(x));
    std::vector<double> z(16);
    double mean = 0;
    for (int i = 0; i < 16; ++i) {
      z[i] = 0.5 * x[i] - 1.25 * x[16 + i];
      mean += z[i] / 16;
    }
    double var = 0;
    for (double v : z) var += (v - mean) * (v - mean) / 16;
    for (int i = 0; i < 16; ++i) {
      const double expect = std::max(0.0, 1.5 * (z[i] - mean) / std::sqrt(var + 1e-5) + 0.2);
      CHECK(y.value()[i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("batch norm running statistics use momentum 0.1 and unbiased variance") {
  BatchNorm2d<double> bn(1);
  const Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 6});
  bn.forward(Var<double>(x));
  // mean 3, unbiased var (4 + 1 + 0 + 9) / 3
  CHECK(bn.running_mean()[0] == doctest::Approx(0.3));
  CHECK(bn.running_var()[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  bn.set_training(false);
  const auto y = bn.forward(Var<double>(x));
  CHECK(y.value()[0] == doctest::Approx((1 - 0.3) / std::sqrt(bn.running_var()[0] + 1e-5)));
}

TEST_CASE("spatial attention") {
  Initializer init(4);
  SpatialAttention<double> sa(4, init);
  SUBCASE("zero weights give 0.5") {
    sa.conv().weight().mutable_value().fill(0);
    const auto y = sa.forward(Var<double>(random_tensor({1, 4, 5, 5}, 1)));
    CHECK(y.shape() == Shape{1, 1, 5, 5});
    CHECK(y.value().min() == 0.5);
    CHECK(y.value().max() == 0.5);
  }
  SUBCASE("strictly inside (0, 1)") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto y = sa.forward(Var<double>(random_tensor({2, 4, 6, 7}, seed, -3, 3)));
      CHECK(y.value().min() > 0.0);
      CHECK(y.value().max() < 1.0);
    }
  }
  SUBCASE("hand-set weights against sigmoid(conv)") {
    const auto w = random_tensor({1, 4, 3, 3}, 9);
    sa.conv().weight().mutable_value() = w;
    sa.conv().bias().mutable_value()[0] = 0.3;
    const auto x = random_tensor({1, 4, 5, 5}, 2);
    const double b = 0.3;
    const auto z = naive_conv(x, w, &b, 1, 1, 1);
    const auto y = sa.forward(Var<double>(x));
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(y.value()[i] == doctest::Approx(1 / (1 + std::exp(-z[i]))).epsilon(1e-9));
    }
  }
}

TEST_CASE("channel select weights form a distribution") {
  Initializer init(5);
  ChannelSelect<double> cs(6, init);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_tensor({3, 6, 4, 5}, seed, -5, 5);
    const auto sel = cs.forward(Var<double>(x));
    CHECK(sel.features.shape() == x.shape());
    CHECK(sel.weights.shape() == Shape{3, 6, 1, 1});
    for (int n = 0; n < 3; ++n) {
      double sum = 0;
      for (int c = 0; c < 6; ++c) {
        CHECK(sel.weights.value().at(n, c, 0, 0) >= 0.0);
        sum += sel.weights.value().at(n, c, 0, 0);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilinear upsampling") {
  SUBCASE("2x2 to 4x4 against the hand-computed half-pixel oracle") {
    const Tensor<double> x(Shape{1, 1, 2, 2}, {0, 1, 1, 0});
    const auto y = ops::upsample_bilinear(Var<double>(x), 4, 4);
    const std::vector<double> expect = {0,    0.25, 0.75,  1,    0.25, 0.375, 0.625, 0.75,
                                        0.75, 0.625, 0.375, 0.25, 1,    0.75,  0.25,  0};
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y.value()[i] == expect[i]);
  }
  SUBCASE("identity at equal size") {
    const auto x = random_tensor({2, 3, 5, 4}, 3);
    CHECK(max_abs_diff(ops::upsample_bilinear(Var<double>(x), 5, 4).value(), x) == 0.0);
  }
  SUBCASE("exact on constants") {
    const Tensor<double> x(Shape{1, 2, 3, 5}, 0.37);
    const auto y = ops::upsample_bilinear(Var<double>(x), 11, 17);
    CHECK(y.value().min() == doctest::Approx(0.37).epsilon(1e-15));
    CHECK(y.value().max() == doctest::Approx(0.37).epsilon(1e-15));
  }
  SUBCASE("smaller target rejected") {
    CHECK_THROWS_AS(ops::upsample_bilinear(Var<double>(random_tensor({1, 1, 4, 4}, 1)), 2, 4),
                    PreconditionError);
  }
}

TEST_CASE("aspp preserves extents and rejects oversized dilation") {
  Initializer init(6);
  Aspp<double> aspp(4, 6, 3, {1, 2, 3}, init);
  for (auto s : {Shape{1, 4, 3, 3}, Shape{2, 4, 5, 7}, Shape{1, 4, 8, 4}}) {
    const auto y = aspp.forward(Var<double>(random_tensor(s, s.h * 10 + s.w)));
    CHECK(y.shape() == Shape{s.n, 6, s.h, s.w});
    CHECK(y.value().all_finite());
  }
  CHECK_THROWS_AS(aspp.forward(Var<double>(random_tensor({1, 4, 2, 2}, 1))), PreconditionError);
}

TEST_CASE("prediction head") {
  Initializer init(7);
  SUBCASE("shape contract and (0, 1) range") {
    PredictionHead<float> head(32, 16, init);
    Tensor<float> x(Shape{1, 32, 22, 22});
    std::mt19937 rng(1);
    std::normal_distribution<float> d;
    for (auto& v : x.span()) v = d(rng);
    const auto y = head.forward(Var<float>(x), 44, 44);
    CHECK(y.shape() == Shape{1, 1, 44, 44});
    CHECK(y.value().min() > 0.0f);
    CHECK(y.value().max() < 1.0f);
  }
  SUBCASE("zero final conv gives 0.5") {
    PredictionHead<double> head(4, 4, init);
    head.final_conv().weight().mutable_value().fill(0);
    const auto y = head.forward(Var<double>(random_tensor({1, 4, 3, 3}, 1)), 6, 6);
    CHECK(y.value().min() == 0.5);
    CHECK(y.value().max() == 0.5);
  }
  SUBCASE("full-scale parameter count") {
    Initializer zeros(0, true);
    PredictionHead<float> head(512, 256, zeros);
    // two 3x3 BConvs (weights + BN affine) and a biased 1x1 conv
    CHECK(head.parameter_count() == 512 * 256 * 9 + 256 * 256 * 9 + 2 * 2 * 256 + 256 + 1);
  }
}

TEST_CASE("every op keeps finite inputs finite") {
  Initializer init(8);
  BConv<double> bconv(3, 4, 3, init);
  SpatialAttention<double> sa(4, init);
  ChannelSelect<double> cs(4, init);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Var<double> x(random_tensor({2, 3, 6, 6}, seed, -1e3, 1e3));
    const auto y = bconv.forward(x);
    CHECK(y.value().all_finite());
    CHECK(sa.forward(y).value().all_finite());
    CHECK(cs.forward(y).features.value().all_finite());
    CHECK(ops::softmax_channels(y).value().all_finite());
  }
}

TEST_CASE("relu lets NaN through") {
  const Tensor<double> x(Shape{1, 1, 1, 3}, {-1.0, std::nan(""), 2.0});
  const auto y = ops::relu(Var<double>(x)).value();
  CHECK(y[0] == 0.0);
  CHECK(std::isnan(y[1]));
  CHECK(y[2] == 2.0);
}

TEST_CASE("op gradients match central differences") {
  const Shape s{1, 4, 6, 6};
  auto leaf = [](const char* name, Tensor<double> t) {
    return NamedParameter<double>{name, Var<double>(std::move(t), true)};
  };
  auto x = leaf("x", random_tensor(s, 1));
  auto y = leaf("y", random_tensor(s, 2));
  const auto w = random_tensor(s, 3);
  auto read = [&](const Var<double>& v) {
    Tensor<double> r = random_tensor(v.shape(), 99);
    return ops::inner(v, r);
  };
  SUBCASE("relu") {
    CHECK(op_grad_error([&] { return ops::inner(ops::relu(x.var), w); }, {x}) < 1e-4);
  }
  SUBCASE("sigmoid") {
    CHECK(op_grad_error([&] { return ops::inner(ops::sigmoid(x.var), w); }, {x}) < 1e-4);
  }
  SUBCASE("broadcast add and mul") {
    auto g = leaf("g", random_tensor({1, 1, 6, 6}, 4));
    auto c = leaf("c", random_tensor({1, 4, 1, 1}, 5));
    CHECK(op_grad_error([&] { return read(ops::mul(ops::add(x.var, c.var), g.var)); },
                        {x, g, c}) < 1e-4);
  }
  SUBCASE("concat and global pooling") {
    CHECK(op_grad_error(
              [&] {
                const Var<double> parts[2] = {x.var, y.var};
                return read(ops::global_avg_pool(ops::concat_channels<double>(parts)));
              },
              {x, y}) < 1e-4);
  }
  SUBCASE("softmax over channels") {
    CHECK(op_grad_error([&] { return read(ops::softmax_channels(x.var)); }, {x}) < 1e-4);
  }
  SUBCASE("upsample") {
    CHECK(op_grad_error([&] { return read(ops::upsample_bilinear(x.var, 13, 9)); }, {x}) < 1e-4);
  }
  SUBCASE("max pool") {
    CHECK(op_grad_error([&] { return read(ops::max_pool2d(x.var, 3, 2, 1)); }, {x}) < 1e-4);
  }
  SUBCASE("conv with stride and dilation") {
    auto k = leaf("w", random_tensor({3, 4, 3, 3}, 6));
    auto b = leaf("b", random_tensor({1, 3, 1, 1}, 7));
    CHECK(op_grad_error([&] { return read(ops::conv2d(x.var, k.var, b.var, {2, 2, 2})); },
                        {x, k, b}) < 1e-4);
  }
  SUBCASE("batch norm in training mode") {
    auto gamma = leaf("gamma", random_tensor({1, 4, 1, 1}, 8, 0.5, 1.5));
    auto beta = leaf("beta", random_tensor({1, 4, 1, 1}, 9));
    Tensor<double> rm(Shape{1, 4, 1, 1}), rv(Shape{1, 4, 1, 1}, 1.0);
    CHECK(op_grad_error(
              [&] { return read(ops::batch_norm(x.var, gamma.var, beta.var, rm, rv, true, 0.1, 1e-5)); },
              {x, gamma, beta}) < 1e-4);
  }
  SUBCASE("binary cross-entropy") {
    auto p = leaf("p", random_tensor(s, 10, 0.05, 0.95));
    Tensor<double> g(s);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = i % 3 == 0 ? 1.0 : 0.0;
    CHECK(op_grad_error([&] { return ops::bce_mean(p.var, g, 1e-7); }, {p}) < 1e-4);
  }
}

TEST_CASE("layer gradients match central differences") {
  for (const char* name : {"bconv", "spatial_attention", "channel_select", "aspp", "head"}) {
    CAPTURE(name);
    CHECK(grad_check<double>(name, GradCheckOptions{}).max_rel_error < 1e-4);
  }
}
