#include "btsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "btsnet/errors.hpp"
#include "btsnet/loss.hpp"
#include "btsnet/network.hpp"

namespace btsnet {

template <typename T>
GradCheckResult check_gradients(const std::function<Var<T>()>& objective,
                                std::vector<NamedParameter<T>> leaves,
                                const GradCheckOptions& options) {
  for (auto& leaf : leaves) leaf.var.zero_grad();
  {
    const Var<T> value = objective();
    value.backward();
  }
  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  auto evaluate = [&]() {
    NoGradGuard guard;
    return static_cast<double>(objective().value()[0]);
  };
  for (auto& leaf : leaves) {
    const Tensor<T> analytic = leaf.var.grad();
    Tensor<T>& value = leaf.var.mutable_value();
    const std::size_t n = value.size();
    std::vector<std::size_t> picks(n);
    for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(std::min<std::size_t>(n, static_cast<std::size_t>(options.samples_per_leaf)));
    std::sort(picks.begin(), picks.end());
    for (std::size_t idx : picks) {
      const T saved = value[idx];
      value[idx] = static_cast<T>(saved + options.eps);
      const double plus = evaluate();
      value[idx] = static_cast<T>(saved - options.eps);
      const double minus = evaluate();
      value[idx] = saved;
      const double numeric = (plus - minus) / (2 * options.eps);
      const double a = static_cast<double>(analytic[idx]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (err > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = err;
        result.worst = leaf.name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return result;
}

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> kComponents = {
      "bconv", "spatial_attention", "channel_select", "aspp", "head",
      "bts",   "loss",              "decoder",        "network"};
  return kComponents;
}

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> random_mask(Shape s, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  Tensor<T> t(s);
  for (auto& v : t.span()) v = coin(rng) ? T(1) : T(0);
  return t;
}

template <typename T>
std::vector<NamedParameter<T>> with_inputs(const Module<T>& m,
                                           std::vector<NamedParameter<T>> inputs) {
  auto leaves = m.named_parameters();
  leaves.insert(leaves.end(), inputs.begin(), inputs.end());
  return leaves;
}

// Random linear readout so every output element contributes.
template <typename T>
struct Readout {
  std::vector<Tensor<T>> weights;
  std::mt19937_64* rng;

  Var<T> operator()(std::size_t slot, const Var<T>& y) {
    if (weights.size() <= slot) weights.resize(slot + 1);
    if (weights[slot].shape() != y.shape()) weights[slot] = random_tensor<T>(y.shape(), *rng);
    return ops::inner(y, weights[slot]);
  }
};

template <typename T>
void merge(GradCheckResult& into, const GradCheckResult& r, const std::string& tag) {
  into.checked += r.checked;
  if (r.max_rel_error >= into.max_rel_error) {
    into.max_rel_error = r.max_rel_error;
    into.worst = tag + ":" + r.worst;
  }
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const std::string& component, const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  Initializer init(options.seed);
  Readout<T> readout{{}, &rng};
  GradCheckResult result;
  result.component = component;

  auto input = [&](const char* name, Shape s, double lo = -1, double hi = 1) {
    return NamedParameter<T>{name, Var<T>(random_tensor<T>(s, rng, lo, hi), true)};
  };
  auto run = [&](const std::function<Var<T>()>& f, std::vector<NamedParameter<T>> leaves) {
    GradCheckResult r = check_gradients<T>(f, std::move(leaves), options);
    r.component = component;
    return r;
  };

  if (component == "bconv") {
    BConv<T> m(3, 4, 3, init);
    auto x = input("x", {2, 3, 6, 6});
    result = run([&] { return readout(0, m.forward(x.var)); }, with_inputs(m, {x}));
  } else if (component == "spatial_attention") {
    SpatialAttention<T> m(4, init);
    auto x = input("x", {1, 4, 6, 6});
    result = run([&] { return readout(0, m.forward(x.var)); }, with_inputs(m, {x}));
  } else if (component == "channel_select") {
    ChannelSelect<T> m(4, init);
    auto x = input("x", {1, 4, 6, 6});
    result = run([&] { return readout(0, m.forward(x.var).features); }, with_inputs(m, {x}));
  } else if (component == "aspp") {
    Aspp<T> m(4, 4, 4, {1, 2}, init);
    auto x = input("x", {2, 4, 5, 5});
    result = run([&] { return readout(0, m.forward(x.var)); }, with_inputs(m, {x}));
  } else if (component == "head") {
    PredictionHead<T> m(4, 4, init);
    auto x = input("x", {2, 4, 4, 4});
    result = run([&] { return readout(0, m.forward(x.var, 8, 8)); }, with_inputs(m, {x}));
  } else if (component == "bts") {
    for (auto dir : {Direction::kNone, Direction::kRgbToDepth, Direction::kDepthToRgb,
                     Direction::kBidirectional}) {
      for (bool residual : {false, true}) {
        for (auto order : {AttentionOrder::kSaOnly, AttentionOrder::kCaThenSa,
                           AttentionOrder::kSaThenCa}) {
          BtsBlock<T> m(4, BtsConfig{dir, residual, order}, init);
          auto r = input("bf_r", {2, 4, 5, 5});
          auto d = input("bf_d", {2, 4, 5, 5});
          Readout<T> local{{}, &rng};
          auto f = [&] {
            const BranchPair<T> out = m.forward(r.var, d.var);
            return ops::add(local(0, out.rgb), local(1, out.depth));
          };
          const std::string tag = to_string(dir) + (residual ? "+res" : "") + "/" +
                                  to_string(order);
          merge<T>(result, run(f, with_inputs(m, {r, d})), tag);
        }
      }
    }
  } else if (component == "loss") {
    const Shape s{2, 1, 6, 6};
    auto c = input("s_c", s, 0.05, 0.95);
    auto r = input("s_r", s, 0.05, 0.95);
    auto d = input("s_d", s, 0.05, 0.95);
    const Tensor<T> g = random_mask<T>(s, rng);
    auto f = [&] { return total_loss<T>(DecoderOutput<T>{c.var, r.var, d.var}, g, LossWeights{}); };
    result = run(f, {c, r, d});
  } else if (component == "decoder") {
    const BackboneConfig b = BackboneConfig::tiny();
    DecoderConfig dc;
    dc.k = 8;
    Decoder<T> m(b.level_channels(), dc, init);
    const auto channels = b.level_channels();
    const auto strides = b.output_strides();
    const int size = 16;
    PyramidPair<T> pyramids;
    std::vector<NamedParameter<T>> inputs;
    for (int i = 0; i < 6; ++i) {
      const int stride = strides[std::min(i, 4)];
      const Shape s{2, channels[i], size / stride, size / stride};
      auto r = input("f_r", s);
      auto d = input("f_d", s);
      r.name += std::to_string(i);
      d.name += std::to_string(i);
      pyramids.rgb.levels[i] = r.var;
      pyramids.depth.levels[i] = d.var;
      inputs.push_back(r);
      inputs.push_back(d);
    }
    auto f = [&] {
      const DecoderOutput<T> out = m.forward(pyramids, size, size);
      return ops::add(ops::add(readout(0, out.s_c), readout(1, out.s_r)), readout(2, out.s_d));
    };
    result = run(f, with_inputs(m, inputs));
  } else if (component == "network") {
    BtsNet<T> m(NetworkConfig::tiny(), init);
    auto rgb = input("rgb", {2, 3, 16, 16});
    auto depth = input("depth", {2, 1, 16, 16}, 0.05, 0.95);
    const Tensor<T> g = random_mask<T>({2, 1, 16, 16}, rng);
    auto f = [&] {
      return total_loss<T>(m.forward(rgb.var, depth.var).saliency, g, LossWeights{});
    };
    result = run(f, with_inputs(m, {rgb, depth}));
  } else {
    std::string known;
    for (const auto& c : gradcheck_components()) known += (known.empty() ? "" : ", ") + c;
    throw ConfigError("unknown gradcheck component '" + component + "' (expected " + known + ")");
  }
  result.component = component;
  return result;
}

template GradCheckResult check_gradients(const std::function<Var<float>()>&,
                                         std::vector<NamedParameter<float>>,
                                         const GradCheckOptions&);
template GradCheckResult check_gradients(const std::function<Var<double>()>&,
                                         std::vector<NamedParameter<double>>,
                                         const GradCheckOptions&);
template GradCheckResult grad_check<float>(const std::string&, const GradCheckOptions&);
template GradCheckResult grad_check<double>(const std::string&, const GradCheckOptions&);

}  // namespace btsnet
