#include "btsnet/encoder.hpp"

#include "btsnet/errors.hpp"

namespace btsnet {

std::string to_string(Scale s) { return s == Scale::kFull ? "full" : "tiny"; }

Scale parse_scale(const std::string& s) {
  if (s == "full") return Scale::kFull;
  if (s == "tiny") return Scale::kTiny;
  throw ConfigError("unknown scale '" + s + "' (expected full or tiny)");
}

BackboneConfig BackboneConfig::full() {
  BackboneConfig c;
  c.stage_channels = {64, 256, 512, 1024, 2048};
  c.stage_strides = {2, 2, 2, 2, 1};
  c.blocks = {3, 4, 6, 3};
  c.stem_kernel = 7;
  c.input_h = c.input_w = 352;
  c.scale = Scale::kFull;
  c.aspp_rates = {1, 6, 12, 18};
  c.aspp_branch_width = 256;
  return c;
}

BackboneConfig BackboneConfig::tiny() {
  BackboneConfig c;
  c.stage_channels = {4, 8, 8, 16, 16};
  c.stage_strides = {1, 2, 2, 2, 1};
  c.blocks = {1, 1, 1, 1};
  c.stem_kernel = 3;
  c.input_h = c.input_w = 32;
  c.scale = Scale::kTiny;
  c.aspp_rates = {1, 2};
  c.aspp_branch_width = 8;
  return c;
}

void BackboneConfig::validate() const {
  for (int ch : stage_channels) {
    if (ch < 1) throw ConfigError("backbone stage channels must be positive");
  }
  for (int s : stage_strides) {
    if (s != 1 && s != 2) throw ConfigError("backbone stage strides must be 1 or 2");
  }
  if (stage_strides[4] != 1) {
    throw ConfigError("the last backbone hierarchy must have stride 1");
  }
  for (int b : blocks) {
    if (b < 1) throw ConfigError("each backbone hierarchy needs at least one block");
  }
  if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ConfigError("stem kernel must be odd");
  if (input_h < 1 || input_w < 1) throw ConfigError("input extents must be positive");
  if (aspp_rates.empty() || aspp_branch_width < 1) {
    throw ConfigError("ASPP needs rates and a positive branch width");
  }
}

std::array<int, 5> BackboneConfig::output_strides() const {
  std::array<int, 5> out{};
  int acc = 1;
  for (int i = 0; i < 5; ++i) {
    acc *= stage_strides[i];
    out[i] = acc;
  }
  return out;
}

std::array<int, 6> BackboneConfig::level_channels() const {
  return {stage_channels[0], stage_channels[1], stage_channels[2],
          stage_channels[3], stage_channels[4], stage_channels[4]};
}

template <typename T>
Var<T> depth_stem(const Var<T>& depth) {
  const Shape& s = depth.shape();
  if (s.c != 1) throw PreconditionError("depth_stem expects one channel, got " + s.str());
  for (std::size_t i = 0; i < depth.value().size(); ++i) {
    const T v = depth.value()[i];
    if (!(v >= T(0) && v <= T(1))) {
      throw PreconditionError("depth values must be normalized to [0, 1]");
    }
  }
  const Var<T> parts[3] = {depth, depth, depth};
  return ops::concat_channels<T>(parts);
}

template <typename T>
Bottleneck<T>::Bottleneck(int in_channels, int out_channels, int stride, Initializer& init)
    : reduce_(in_channels, std::max(1, out_channels / 4), 1, init),
      spatial_(std::max(1, out_channels / 4), std::max(1, out_channels / 4), 3, init, stride),
      expand_(std::max(1, out_channels / 4), out_channels, 1, init, {}, false),
      expand_bn_(out_channels) {
  this->register_module("conv1", reduce_);
  this->register_module("conv2", spatial_);
  this->register_module("conv3", expand_);
  this->register_module("bn3", expand_bn_);
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = std::make_unique<Conv2d<T>>(in_channels, out_channels, 1, init,
                                            ops::Conv2dOptions{stride, 0, 1}, false);
    shortcut_bn_ = std::make_unique<BatchNorm2d<T>>(out_channels);
    this->register_module("downsample.conv", *shortcut_);
    this->register_module("downsample.bn", *shortcut_bn_);
  }
}

template <typename T>
Var<T> Bottleneck<T>::forward(const Var<T>& x) {
  Var<T> y = expand_bn_.forward(expand_.forward(spatial_.forward(reduce_.forward(x))));
  Var<T> skip = shortcut_ ? shortcut_bn_->forward(shortcut_->forward(x)) : x;
  return ops::relu(ops::add(y, skip));
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg, Initializer& init)
    : cfg_(cfg), stem_(3, cfg.stage_channels[0], cfg.stem_kernel, init, cfg.stage_strides[0]) {
  this->register_module("stem", stem_);
  int in = cfg.stage_channels[0];
  for (int s = 0; s < 4; ++s) {
    const int out = cfg.stage_channels[s + 1];
    // Hierarchy 1 downsamples with the max-pool, the others in their first block.
    const int first_stride = s == 0 ? 1 : cfg.stage_strides[s + 1];
    for (int b = 0; b < cfg.blocks[s]; ++b) {
      stages_[s].push_back(std::make_unique<Bottleneck<T>>(b == 0 ? in : out, out,
                                                           b == 0 ? first_stride : 1, init));
      this->register_module("layer" + std::to_string(s + 1) + "." + std::to_string(b),
                            *stages_[s].back());
    }
    in = out;
  }
}

template <typename T>
Var<T> Backbone<T>::forward_stage(int stage, const Var<T>& x) {
  if (stage == 0) return stem_.forward(x);
  Var<T> y = x;
  if (stage == 1 && cfg_.stage_strides[1] == 2) y = ops::max_pool2d(y, 3, 2, 1);
  for (auto& block : stages_.at(stage - 1)) y = block->forward(y);
  return y;
}

template <typename T>
Encoder<T>::Encoder(const BackboneConfig& backbone, const BtsConfig& bts, Initializer& init,
                    bool with_bts)
    : backbone_cfg_((backbone.validate(), backbone)),
      rgb_(backbone, init),
      depth_(backbone, init),
      aspp_rgb_(backbone.stage_channels[4], backbone.stage_channels[4],
                backbone.aspp_branch_width, backbone.aspp_rates, init),
      aspp_depth_(backbone.stage_channels[4], backbone.stage_channels[4],
                  backbone.aspp_branch_width, backbone.aspp_rates, init) {
  this->register_module("rgb", rgb_);
  this->register_module("depth", depth_);
  if (with_bts) {
    for (int i = 0; i < 5; ++i) {
      bts_.push_back(std::make_unique<BtsBlock<T>>(backbone.stage_channels[i], bts, init));
      this->register_module("bts" + std::to_string(i), *bts_.back());
    }
  }
  this->register_module("aspp_r", aspp_rgb_);
  this->register_module("aspp_d", aspp_depth_);
}

template <typename T>
PyramidPair<T> Encoder<T>::forward(const Var<T>& rgb, const Var<T>& depth) {
  if (rgb.shape() != depth.shape() || rgb.shape().c != 3) {
    throw ConfigError("encoder expects equal (N,3,H,W) inputs, got rgb " + rgb.shape().str() +
                      " depth " + depth.shape().str());
  }
  PyramidPair<T> out;
  Var<T> r = rgb;
  Var<T> d = depth;
  for (int i = 0; i < 5; ++i) {
    Var<T> bf_r = rgb_.forward_stage(i, r);
    Var<T> bf_d = depth_.forward_stage(i, d);
    if (bts_.empty()) {
      r = bf_r;
      d = bf_d;
    } else {
      BranchPair<T> f = bts_[i]->forward(bf_r, bf_d);
      r = f.rgb;
      d = f.depth;
    }
    out.rgb.levels[i] = r;
    out.depth.levels[i] = d;
  }
  out.rgb.levels[5] = aspp_rgb_.forward(r);
  out.depth.levels[5] = aspp_depth_.forward(d);
  return out;
}

template Var<float> depth_stem(const Var<float>&);
template Var<double> depth_stem(const Var<double>&);
template class Bottleneck<float>;
template class Bottleneck<double>;
template class Backbone<float>;
template class Backbone<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace btsnet
