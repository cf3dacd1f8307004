#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "btsnet/bts.hpp"
#include "btsnet/layers.hpp"

namespace btsnet {

enum class Scale { kFull, kTiny };

std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// Backbone layout. Hierarchy 0 is the stem convolution block; hierarchy 1
/// starts with a 3x3 max-pool when its stride is 2. Hierarchies 1..4 are
/// stacks of bottleneck residual blocks.
struct BackboneConfig {
  std::array<int, 5> stage_channels{};
  std::array<int, 5> stage_strides{};
  std::array<int, 4> blocks{};  // residual blocks in hierarchies 1..4
  int stem_kernel = 7;
  int input_h = 352;
  int input_w = 352;
  Scale scale = Scale::kFull;
  std::vector<int> aspp_rates;
  int aspp_branch_width = 256;

  /// ResNet-50 widths and depths, 352x352 input, last stride 1.
  static BackboneConfig full();
  /// Channels (4, 8, 8, 16, 16), one block per hierarchy, 32x32 input.
  static BackboneConfig tiny();

  void validate() const;
  /// Cumulative stride of each hierarchy relative to the input.
  std::array<int, 5> output_strides() const;
  /// Channel count of each pyramid level (5 hierarchies + ASPP).
  std::array<int, 6> level_channels() const;

  bool operator==(const BackboneConfig&) const = default;
};

/// Six enhanced features f^0..f^5 of one modality.
template <typename T>
struct FeaturePyramid {
  std::array<Var<T>, 6> levels;
};

template <typename T>
struct PyramidPair {
  FeaturePyramid<T> rgb;
  FeaturePyramid<T> depth;
};

/// Replicates a (N, 1, H, W) depth map with values in [0, 1] to 3 channels.
template <typename T>
Var<T> depth_stem(const Var<T>& depth);

template <typename T>
class Bottleneck : public Module<T> {
 public:
  Bottleneck(int in_channels, int out_channels, int stride, Initializer& init);
  Var<T> forward(const Var<T>& x);

 private:
  BConv<T> reduce_;
  BConv<T> spatial_;
  Conv2d<T> expand_;
  BatchNorm2d<T> expand_bn_;
  std::unique_ptr<Conv2d<T>> shortcut_;
  std::unique_ptr<BatchNorm2d<T>> shortcut_bn_;
};

/// One residual branch: five hierarchies.
template <typename T>
class Backbone : public Module<T> {
 public:
  Backbone(const BackboneConfig& cfg, Initializer& init);
  Var<T> forward_stage(int stage, const Var<T>& x);

 private:
  BackboneConfig cfg_;
  BConv<T> stem_;
  std::array<std::vector<std::unique_ptr<Bottleneck<T>>>, 4> stages_;
};

/// Two backbones with a BTS block after every hierarchy and an ASPP head per
/// branch. Built with `with_bts = false`, hierarchy outputs pass through
/// unchanged (the parameter audit's "without BTS" encoder).
template <typename T>
class Encoder : public Module<T> {
 public:
  Encoder(const BackboneConfig& backbone, const BtsConfig& bts, Initializer& init,
          bool with_bts = true);

  /// rgb: (N, 3, H, W); depth: (N, 3, H, W) after `depth_stem`.
  PyramidPair<T> forward(const Var<T>& rgb, const Var<T>& depth);

  const BackboneConfig& backbone_config() const { return backbone_cfg_; }
  std::size_t bts_count() const { return bts_.size(); }
  BtsBlock<T>& bts(int i) { return *bts_.at(i); }

 private:
  BackboneConfig backbone_cfg_;
  Backbone<T> rgb_;
  Backbone<T> depth_;
  std::vector<std::unique_ptr<BtsBlock<T>>> bts_;
  Aspp<T> aspp_rgb_;
  Aspp<T> aspp_depth_;
};

}  // namespace btsnet
