#include "btsnet/bts.hpp"

#include "btsnet/errors.hpp"

namespace btsnet {

std::string to_string(Direction d) {
  switch (d) {
    case Direction::kNone: return "none";
    case Direction::kRgbToDepth: return "r_to_d";
    case Direction::kDepthToRgb: return "d_to_r";
    case Direction::kBidirectional: return "bidirectional";
  }
  return "?";
}

std::string to_string(AttentionOrder o) {
  switch (o) {
    case AttentionOrder::kSaOnly: return "sa_only";
    case AttentionOrder::kCaThenSa: return "ca_then_sa";
    case AttentionOrder::kSaThenCa: return "sa_then_ca";
  }
  return "?";
}

Direction parse_direction(const std::string& s) {
  if (s == "none") return Direction::kNone;
  if (s == "r_to_d") return Direction::kRgbToDepth;
  if (s == "d_to_r") return Direction::kDepthToRgb;
  if (s == "bidirectional") return Direction::kBidirectional;
  throw ConfigError("unknown BTS direction '" + s +
                    "' (expected none, r_to_d, d_to_r, bidirectional)");
}

AttentionOrder parse_attention_order(const std::string& s) {
  if (s == "sa_only") return AttentionOrder::kSaOnly;
  if (s == "ca_then_sa") return AttentionOrder::kCaThenSa;
  if (s == "sa_then_ca") return AttentionOrder::kSaThenCa;
  throw ConfigError("unknown attention order '" + s +
                    "' (expected sa_only, ca_then_sa, sa_then_ca)");
}

template <typename T>
BranchPair<T> cross_transfer(Direction direction, const Var<T>& sa_rgb,
                             const Var<T>& sa_depth, const Var<T>& bf_rgb,
                             const Var<T>& bf_depth) {
  if (bf_rgb.shape() != bf_depth.shape()) {
    throw ConfigError("BTS branches differ in shape: rgb " + bf_rgb.shape().str() +
                      ", depth " + bf_depth.shape().str());
  }
  const bool into_depth = direction == Direction::kRgbToDepth ||
                          direction == Direction::kBidirectional;
  const bool into_rgb = direction == Direction::kDepthToRgb ||
                        direction == Direction::kBidirectional;
  // SA_p + SA_p * SA_m: partner attention, with the joint term keeping some
  // of the receiving modality's own cue.
  auto received = [](const Var<T>& partner, const Var<T>& own) {
    return ops::add(partner, ops::mul(partner, own));
  };
  BranchPair<T> out;
  out.depth = ops::mul(into_depth ? received(sa_rgb, sa_depth) : sa_depth, bf_depth);
  out.rgb = ops::mul(into_rgb ? received(sa_depth, sa_rgb) : sa_rgb, bf_rgb);
  return out;
}

template <typename T>
BtsBlock<T>::BtsBlock(int channels, BtsConfig config, Initializer& init)
    : config_(config), sa_rgb_(channels, init), sa_depth_(channels, init) {
  this->register_module("sa_r", sa_rgb_);
  this->register_module("sa_d", sa_depth_);
  if (config.attention_order != AttentionOrder::kSaOnly) {
    cs_rgb_ = std::make_unique<ChannelSelect<T>>(channels, init);
    cs_depth_ = std::make_unique<ChannelSelect<T>>(channels, init);
    this->register_module("ca_r", *cs_rgb_);
    this->register_module("ca_d", *cs_depth_);
  }
}

template <typename T>
BranchPair<T> BtsBlock<T>::transfer(const Var<T>& bf_rgb, const Var<T>& bf_depth) const {
  if (bf_rgb.shape() != bf_depth.shape()) {
    throw ConfigError("BTS branches differ in shape: rgb " + bf_rgb.shape().str() +
                      ", depth " + bf_depth.shape().str());
  }
  return cross_transfer(config_.direction, sa_rgb_.forward(bf_rgb),
                        sa_depth_.forward(bf_depth), bf_rgb, bf_depth);
}

template <typename T>
BranchPair<T> BtsBlock<T>::forward(const Var<T>& bf_rgb, const Var<T>& bf_depth) const {
  BranchPair<T> out;
  switch (config_.attention_order) {
    case AttentionOrder::kSaOnly:
      out = transfer(bf_rgb, bf_depth);
      break;
    case AttentionOrder::kSaThenCa: {
      const BranchPair<T> cf = transfer(bf_rgb, bf_depth);
      out.rgb = cs_rgb_->forward(cf.rgb).features;
      out.depth = cs_depth_->forward(cf.depth).features;
      break;
    }
    case AttentionOrder::kCaThenSa: {
      if (bf_rgb.shape() != bf_depth.shape()) {
        throw ConfigError("BTS branches differ in shape: rgb " + bf_rgb.shape().str() +
                          ", depth " + bf_depth.shape().str());
      }
      out = transfer(cs_rgb_->forward(bf_rgb).features, cs_depth_->forward(bf_depth).features);
      break;
    }
  }
  if (config_.residual) {
    out.rgb = ops::add(out.rgb, bf_rgb);
    out.depth = ops::add(out.depth, bf_depth);
  }
  return out;
}

template BranchPair<float> cross_transfer(Direction, const Var<float>&, const Var<float>&,
                                          const Var<float>&, const Var<float>&);
template BranchPair<double> cross_transfer(Direction, const Var<double>&, const Var<double>&,
                                           const Var<double>&, const Var<double>&);
template class BtsBlock<float>;
template class BtsBlock<double>;

}  // namespace btsnet
