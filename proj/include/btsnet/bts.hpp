#pragma once

#include <memory>
#include <string>

#include "btsnet/layers.hpp"

namespace btsnet {

/// Which cross-modal spatial-attention transfers are active.
enum class Direction {
  kNone,           // each branch uses only its own attention map
  kRgbToDepth,     // RGB attention transferred into the depth branch
  kDepthToRgb,     // depth attention transferred into the RGB branch
  kBidirectional,  // both
};

enum class AttentionOrder { kSaOnly, kCaThenSa, kSaThenCa };

/// Switchboard for the interaction-direction and attention-order ablations.
struct BtsConfig {
  Direction direction = Direction::kBidirectional;
  bool residual = false;
  AttentionOrder attention_order = AttentionOrder::kSaThenCa;

  bool operator==(const BtsConfig&) const = default;
};

std::string to_string(Direction d);
std::string to_string(AttentionOrder o);
Direction parse_direction(const std::string& s);
AttentionOrder parse_attention_order(const std::string& s);

template <typename T>
struct BranchPair {
  Var<T> rgb;
  Var<T> depth;
};

/// Cross-modal transfer given precomputed attention maps. For a receiving
/// branch m with partner p: cf_m = (SA_p + SA_p * SA_m) * bf_m; a branch that
/// receives nothing keeps its own attention: cf_m = SA_m * bf_m.
template <typename T>
BranchPair<T> cross_transfer(Direction direction, const Var<T>& sa_rgb,
                             const Var<T>& sa_depth, const Var<T>& bf_rgb,
                             const Var<T>& bf_depth);

template <typename T>
class BtsBlock : public Module<T> {
 public:
  BtsBlock(int channels, BtsConfig config, Initializer& init);

  /// Spatial attention on both branches followed by `cross_transfer`.
  BranchPair<T> transfer(const Var<T>& bf_rgb, const Var<T>& bf_depth) const;

  /// Full block in the configured attention order, with optional residual.
  /// Output shapes equal the input shapes.
  BranchPair<T> forward(const Var<T>& bf_rgb, const Var<T>& bf_depth) const;

  const BtsConfig& config() const { return config_; }
  SpatialAttention<T>& sa_rgb() { return sa_rgb_; }
  SpatialAttention<T>& sa_depth() { return sa_depth_; }
  /// Null under SA_ONLY.
  ChannelSelect<T>* cs_rgb() { return cs_rgb_.get(); }
  ChannelSelect<T>* cs_depth() { return cs_depth_.get(); }

 private:
  BtsConfig config_;
  SpatialAttention<T> sa_rgb_;
  SpatialAttention<T> sa_depth_;
  std::unique_ptr<ChannelSelect<T>> cs_rgb_;
  std::unique_ptr<ChannelSelect<T>> cs_depth_;
};

}  // namespace btsnet
