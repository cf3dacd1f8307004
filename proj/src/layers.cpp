#include "btsnet/layers.hpp"

#include <cmath>

#include "btsnet/errors.hpp"

namespace btsnet {

template <typename T>
Tensor<T> Initializer::fan_in_normal(Shape shape, int fan_in) {
  Tensor<T> out(shape);
  if (zeros_) return out;
  const double sigma = std::sqrt(2.0 / std::max(fan_in, 1));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v;
    do {
      v = dist(engine_);
    } while (std::abs(v) > 2.0);
    out[i] = static_cast<T>(v * sigma);
  }
  return out;
}

template <typename T>
Var<T> Module<T>::register_parameter(std::string name, Tensor<T> init) {
  Var<T> v(std::move(init), true);
  params_.push_back({std::move(name), v});
  return v;
}

template <typename T>
Var<T> Module<T>::register_buffer(std::string name, Tensor<T> init) {
  Var<T> v(std::move(init), false);
  buffers_.push_back({std::move(name), v});
  return v;
}

template <typename T>
void Module<T>::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

template <typename T>
void Module<T>::collect(const std::string& prefix, bool buffers,
                        std::vector<NamedParameter<T>>& out) const {
  for (const auto& p : buffers ? buffers_ : params_) {
    out.push_back({prefix + p.name, p.var});
  }
  for (const auto& [name, child] : children_) {
    child->collect(prefix + name + ".", buffers, out);
  }
}

template <typename T>
std::vector<NamedParameter<T>> Module<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out;
  collect("", false, out);
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> Module<T>::named_buffers() const {
  std::vector<NamedParameter<T>> out;
  collect("", true, out);
  return out;
}

template <typename T>
std::size_t Module<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : named_parameters()) total += p.var.value().size();
  return total;
}

template <typename T>
void Module<T>::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& p : named_parameters()) p.var.zero_grad();
}

// ---------------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel,
                  Initializer& init, ops::Conv2dOptions options, bool bias)
    : in_channels_(in_channels), out_channels_(out_channels), options_(options) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1) {
    throw ConfigError("conv: channel counts and kernel must be positive");
  }
  const int fan_in = in_channels * kernel * kernel;
  weight_ = this->register_parameter(
      "weight", init.fan_in_normal<T>(Shape{out_channels, in_channels, kernel, kernel}, fan_in));
  if (bias) {
    bias_ = this->register_parameter("bias", Tensor<T>(Shape{1, out_channels, 1, 1}));
  }
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) const {
  if (x.shape().c != in_channels_) {
    throw ConfigError("conv built for " + std::to_string(in_channels_) +
                      " input channels received " + x.shape().str());
  }
  return ops::conv2d(x, weight_, bias_, options_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma_ = this->register_parameter("gamma", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
  beta_ = this->register_parameter("beta", Tensor<T>(Shape{1, channels, 1, 1}));
  running_mean_ = this->register_buffer("running_mean", Tensor<T>(Shape{1, channels, 1, 1}));
  running_var_ = this->register_buffer("running_var", Tensor<T>(Shape{1, channels, 1, 1}, T(1)));
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x) {
  return ops::batch_norm(x, gamma_, beta_, running_mean_.mutable_value(),
                         running_var_.mutable_value(), this->training(), momentum_, eps_);
}

template <typename T>
BConv<T>::BConv(int in_channels, int out_channels, int kernel, Initializer& init,
                int stride, int dilation)
    : conv_(in_channels, out_channels, kernel, init,
            ops::Conv2dOptions{stride, dilation * (kernel - 1) / 2, dilation}, false),
      bn_(out_channels) {
  if (kernel % 2 == 0) throw ConfigError("BConv kernel must be odd");
  this->register_module("conv", conv_);
  this->register_module("bn", bn_);
}

template <typename T>
Var<T> BConv<T>::forward(const Var<T>& x) {
  return ops::relu(bn_.forward(conv_.forward(x)));
}

template <typename T>
SpatialAttention<T>::SpatialAttention(int channels, Initializer& init)
    : conv_(channels, 1, 3, init, ops::Conv2dOptions{1, 1, 1}, true) {
  this->register_module("conv", conv_);
}

template <typename T>
Var<T> SpatialAttention<T>::forward(const Var<T>& x) const {
  return ops::sigmoid(conv_.forward(x));
}

template <typename T>
ChannelSelect<T>::ChannelSelect(int channels, Initializer& init)
    : conv_(channels, channels, 1, init, {}, true) {
  this->register_module("conv", conv_);
}

template <typename T>
ChannelSelection<T> ChannelSelect<T>::forward(const Var<T>& x) const {
  Var<T> weights = ops::softmax_channels(conv_.forward(ops::global_avg_pool(x)));
  return {weights, ops::mul(x, weights)};
}

template <typename T>
Aspp<T>::Aspp(int in_channels, int out_channels, int branch_width,
              const std::vector<int>& rates, Initializer& init)
    : rates_(rates),
      pool_branch_(in_channels, branch_width, 1, init),
      project_(branch_width * (static_cast<int>(rates.size()) + 1), out_channels, 1, init) {
  if (rates.empty()) throw ConfigError("ASPP needs at least one rate");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const int rate = rates[i];
    if (rate < 1) throw ConfigError("ASPP rates must be positive");
    const int kernel = rate == 1 ? 1 : 3;
    branches_.push_back(std::make_unique<BConv<T>>(in_channels, branch_width, kernel, init, 1, rate));
    this->register_module("branch" + std::to_string(i), *branches_.back());
  }
  this->register_module("pool", pool_branch_);
  this->register_module("project", project_);
}

template <typename T>
Var<T> Aspp<T>::forward(const Var<T>& x) {
  const Shape s = x.shape();
  for (int rate : rates_) {
    if (rate > s.h || rate > s.w) {
      throw PreconditionError("ASPP dilation " + std::to_string(rate) +
                              " exceeds the " + std::to_string(s.h) + "x" +
                              std::to_string(s.w) + " input; use smaller rates or a larger input");
    }
  }
  std::vector<Var<T>> parts;
  parts.reserve(branches_.size() + 1);
  for (auto& b : branches_) parts.push_back(b->forward(x));
  parts.push_back(ops::upsample_bilinear(pool_branch_.forward(ops::global_avg_pool(x)), s.h, s.w));
  return project_.forward(ops::concat_channels<T>(parts));
}

template <typename T>
PredictionHead<T>::PredictionHead(int in_channels, int mid_channels, Initializer& init)
    : first_(in_channels, mid_channels, 3, init),
      second_(mid_channels, mid_channels, 3, init),
      final_(mid_channels, 1, 1, init, {}, true) {
  this->register_module("bconv1", first_);
  this->register_module("bconv2", second_);
  this->register_module("out", final_);
}

template <typename T>
Var<T> PredictionHead<T>::forward(const Var<T>& x, int out_h, int out_w) {
  Var<T> logits = final_.forward(second_.forward(first_.forward(x)));
  return ops::upsample_bilinear(ops::sigmoid(logits), out_h, out_w);
}

template Tensor<float> Initializer::fan_in_normal<float>(Shape, int);
template Tensor<double> Initializer::fan_in_normal<double>(Shape, int);

#define BTSNET_INSTANTIATE_LAYERS(T)      \
  template class Module<T>;               \
  template class Conv2d<T>;               \
  template class BatchNorm2d<T>;          \
  template class BConv<T>;                \
  template class SpatialAttention<T>;     \
  template class ChannelSelect<T>;        \
  template class Aspp<T>;                 \
  template class PredictionHead<T>;

BTSNET_INSTANTIATE_LAYERS(float)
BTSNET_INSTANTIATE_LAYERS(double)

}  // namespace btsnet
