#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "btsnet/autograd.hpp"
#include "btsnet/ops.hpp"

namespace btsnet {

/// Seeded source for parameter initialization. With `zeros` set, weights are
/// left at zero; used by parameter audits that only need shapes.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed, bool zeros = false)
      : engine_(seed), zeros_(zeros) {}

  /// Truncated normal (±2σ) with σ = sqrt(2 / fan_in).
  template <typename T>
  Tensor<T> fan_in_normal(Shape shape, int fan_in);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool zeros_;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

/// Base for every layer. Parameters and buffers are registered under stable
/// names; `named_parameters()` walks children depth-first to produce the
/// dotted hierarchical names used by checkpoints.
template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<NamedParameter<T>> named_parameters() const;
  /// Non-trainable state (BN running statistics).
  std::vector<NamedParameter<T>> named_buffers() const;
  std::size_t parameter_count() const;

  void set_training(bool training);
  bool training() const { return training_; }

  void zero_grad();

 protected:
  Var<T> register_parameter(std::string name, Tensor<T> init);
  Var<T> register_buffer(std::string name, Tensor<T> init);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool buffers,
               std::vector<NamedParameter<T>>& out) const;

  std::vector<NamedParameter<T>> params_;
  std::vector<NamedParameter<T>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

template <typename T>
std::size_t count_parameters(const Module<T>& m) {
  return m.parameter_count();
}

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, Initializer& init,
         ops::Conv2dOptions options = {}, bool bias = true);

  Var<T> forward(const Var<T>& x) const;

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

 private:
  int in_channels_;
  int out_channels_;
  ops::Conv2dOptions options_;
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  Var<T> forward(const Var<T>& x);

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_.mutable_value(); }
  Tensor<T>& running_var() { return running_var_.mutable_value(); }

 private:
  double momentum_;
  double eps_;
  Var<T> gamma_;
  Var<T> beta_;
  Var<T> running_mean_;
  Var<T> running_var_;
};

/// Convolution (same padding, no bias) → batch norm → ReLU.
template <typename T>
class BConv : public Module<T> {
 public:
  BConv(int in_channels, int out_channels, int kernel, Initializer& init,
        int stride = 1, int dilation = 1);

  Var<T> forward(const Var<T>& x);

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }
  int out_channels() const { return conv_.out_channels(); }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

/// sigmoid(conv3x3(x) → 1 channel, with bias). Output (N, 1, H, W).
template <typename T>
class SpatialAttention : public Module<T> {
 public:
  SpatialAttention(int channels, Initializer& init);

  Var<T> forward(const Var<T>& x) const;
  Conv2d<T>& conv() { return conv_; }

 private:
  Conv2d<T> conv_;
};

template <typename T>
struct ChannelSelection {
  Var<T> weights;   // (N, C, 1, 1), softmax over C
  Var<T> features;  // weights * input, same shape as input
};

/// Softmax(conv1x1(GAP(x))) channel weights applied back onto x.
template <typename T>
class ChannelSelect : public Module<T> {
 public:
  ChannelSelect(int channels, Initializer& init);

  ChannelSelection<T> forward(const Var<T>& x) const;
  Conv2d<T>& conv() { return conv_; }

 private:
  Conv2d<T> conv_;
};

/// Atrous spatial pyramid pooling. Rate 1 is a 1x1 branch, other rates are
/// dilated 3x3 branches, plus an image-pooling branch; the concatenation is
/// projected by a 1x1 BConv.
template <typename T>
class Aspp : public Module<T> {
 public:
  Aspp(int in_channels, int out_channels, int branch_width,
       const std::vector<int>& rates, Initializer& init);

  /// Throws PreconditionError when a dilation exceeds the input extent.
  Var<T> forward(const Var<T>& x);

  const std::vector<int>& rates() const { return rates_; }

 private:
  std::vector<int> rates_;
  std::vector<std::unique_ptr<BConv<T>>> branches_;
  BConv<T> pool_branch_;
  BConv<T> project_;
};

/// BConv3x3 → BConv3x3 → conv1x1 (1 channel, bias) → sigmoid → bilinear up.
template <typename T>
class PredictionHead : public Module<T> {
 public:
  PredictionHead(int in_channels, int mid_channels, Initializer& init);

  Var<T> forward(const Var<T>& x, int out_h, int out_w);

  Conv2d<T>& final_conv() { return final_; }
  BConv<T>& first() { return first_; }
  BConv<T>& second() { return second_; }

 private:
  BConv<T> first_;
  BConv<T> second_;
  Conv2d<T> final_;
};

template <typename T>
Var<T> gap(const Var<T>& x) {
  return ops::global_avg_pool(x);
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int target_h, int target_w) {
  return ops::upsample_bilinear(x, target_h, target_w);
}

}  // namespace btsnet
