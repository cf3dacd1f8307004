#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>

#include "btsnet/encoder.hpp"

namespace btsnet {

enum class DecoderKind { kGroup, kUnet };
enum class Modality { kRgb, kDepth };

std::string to_string(DecoderKind k);
DecoderKind parse_decoder_kind(const std::string& s);

struct DecoderConfig {
  DecoderKind kind = DecoderKind::kGroup;
  int k = 256;  // unified channel width

  bool operator==(const DecoderConfig&) const = default;
};

template <typename T>
struct GroupedFeatures {
  Var<T> rgb_high, rgb_low, depth_high, depth_low;
};

/// S_c (fused), S_r and S_d (per-branch), all at input resolution.
template <typename T>
struct DecoderOutput {
  Var<T> s_c, s_r, s_d;
};

/// Sums same-level unified features: high = u3 + u4 + u5 (equal grids),
/// low = u0 + Up(u1) + Up(u2) on u0's grid.
template <typename T>
std::pair<Var<T>, Var<T>> group_levels(const std::array<Var<T>, 6>& unified);

/// Top-down U-net over per-level RGB/depth concatenations (2k channels each).
/// Stage widths are 2k for levels 4..1 and k for level 0, followed by a
/// prediction head on k channels.
template <typename T>
class UnetDecoder : public Module<T> {
 public:
  UnetDecoder(int k, Initializer& init);

  Var<T> forward(const std::array<Var<T>, 6>& unified_rgb,
                 const std::array<Var<T>, 6>& unified_depth, int out_h, int out_w);

 private:
  struct Stage {
    std::unique_ptr<BConv<T>> first, second;
  };
  std::array<Stage, 5> stages_;  // stages_[i] merges level i
  PredictionHead<T> head_;
};

/// Channel unification, grouping, cross-modal fusion and three prediction
/// heads. With kind == kUnet the fused path is replaced by `UnetDecoder`
/// while S_r and S_d keep their own heads.
template <typename T>
class Decoder : public Module<T> {
 public:
  Decoder(const std::array<int, 6>& level_channels, const DecoderConfig& cfg,
          Initializer& init);

  /// 3x3 BConv of each level to k channels.
  std::array<Var<T>, 6> unify(const FeaturePyramid<T>& pyramid, Modality m);

  /// f_c^h, f_c^l then the fused head. Output at (out_h, out_w).
  Var<T> fuse(const GroupedFeatures<T>& g, int out_h, int out_w);

  Var<T> branch_predict(Modality m, const Var<T>& high, const Var<T>& low, int out_h,
                        int out_w);

  DecoderOutput<T> forward(const PyramidPair<T>& pyramids, int out_h, int out_w);

  const DecoderConfig& config() const { return cfg_; }

  std::size_t unify_parameter_count() const;
  /// Fusion BConvs plus the fused head (group kind only).
  std::size_t gd_c_parameter_count() const;
  std::size_t gd_r_parameter_count() const { return head_r_.parameter_count(); }
  std::size_t gd_d_parameter_count() const { return head_d_.parameter_count(); }
  /// Zero unless kind == kUnet.
  std::size_t unet_parameter_count() const;

  PredictionHead<T>& head(Modality m) { return m == Modality::kRgb ? head_r_ : head_d_; }
  PredictionHead<T>* fused_head() { return head_c_.get(); }
  BConv<T>* fuse_high() { return fuse_high_.get(); }
  BConv<T>* fuse_low() { return fuse_low_.get(); }
  BConv<T>& unify_conv(Modality m, int level) {
    return m == Modality::kRgb ? *unify_rgb_.at(level) : *unify_depth_.at(level);
  }

 private:
  DecoderConfig cfg_;
  std::array<std::unique_ptr<BConv<T>>, 6> unify_rgb_;
  std::array<std::unique_ptr<BConv<T>>, 6> unify_depth_;
  std::unique_ptr<BConv<T>> fuse_high_;
  std::unique_ptr<BConv<T>> fuse_low_;
  std::unique_ptr<PredictionHead<T>> head_c_;
  PredictionHead<T> head_r_;
  PredictionHead<T> head_d_;
  std::unique_ptr<UnetDecoder<T>> unet_;
};

}  // namespace btsnet
