#include "btsnet/decoder.hpp"

#include "btsnet/errors.hpp"

namespace btsnet {

std::string to_string(DecoderKind k) { return k == DecoderKind::kGroup ? "group" : "unet"; }

DecoderKind parse_decoder_kind(const std::string& s) {
  if (s == "group") return DecoderKind::kGroup;
  if (s == "unet") return DecoderKind::kUnet;
  throw ConfigError("unknown decoder '" + s + "' (expected group or unet)");
}

namespace {

template <typename T>
Var<T> upsample_to(const Var<T>& x, const Var<T>& like) {
  return ops::upsample_bilinear(x, like.shape().h, like.shape().w);
}

template <typename T>
Var<T> concat2(const Var<T>& a, const Var<T>& b) {
  const Var<T> parts[2] = {a, b};
  return ops::concat_channels<T>(parts);
}

}  // namespace

template <typename T>
std::pair<Var<T>, Var<T>> group_levels(const std::array<Var<T>, 6>& unified) {
  const Shape& hs = unified[3].shape();
  for (int i = 4; i < 6; ++i) {
    if (unified[i].shape() != hs) {
      throw ConfigError("high-level features must share a grid: level 3 is " + hs.str() +
                        ", level " + std::to_string(i) + " is " + unified[i].shape().str());
    }
  }
  for (int i = 1; i < 3; ++i) {
    const Shape& s = unified[i].shape();
    if (s.h > unified[0].shape().h || s.w > unified[0].shape().w) {
      throw ConfigError("low-level feature " + std::to_string(i) +
                        " is finer than level 0");
    }
  }
  Var<T> high = ops::add(ops::add(unified[3], unified[4]), unified[5]);
  Var<T> low = ops::add(ops::add(unified[0], upsample_to(unified[1], unified[0])),
                        upsample_to(unified[2], unified[0]));
  return {high, low};
}

template <typename T>
UnetDecoder<T>::UnetDecoder(int k, Initializer& init) : head_(k, k, init) {
  const int level = 2 * k;
  int carried = level;  // channels of the running top-down feature
  for (int i = 4; i >= 0; --i) {
    const int width = i == 0 ? k : 2 * k;
    stages_[i].first = std::make_unique<BConv<T>>(carried + level, width, 3, init);
    stages_[i].second = std::make_unique<BConv<T>>(width, width, 3, init);
    this->register_module("stage" + std::to_string(i) + ".bconv1", *stages_[i].first);
    this->register_module("stage" + std::to_string(i) + ".bconv2", *stages_[i].second);
    carried = width;
  }
  this->register_module("head", head_);
}

template <typename T>
Var<T> UnetDecoder<T>::forward(const std::array<Var<T>, 6>& unified_rgb,
                               const std::array<Var<T>, 6>& unified_depth, int out_h,
                               int out_w) {
  std::array<Var<T>, 6> levels;
  for (int i = 0; i < 6; ++i) levels[i] = concat2(unified_rgb[i], unified_depth[i]);
  Var<T> x = levels[5];
  for (int i = 4; i >= 0; --i) {
    x = concat2(upsample_to(x, levels[i]), levels[i]);
    x = stages_[i].second->forward(stages_[i].first->forward(x));
  }
  return head_.forward(x, out_h, out_w);
}

template <typename T>
Decoder<T>::Decoder(const std::array<int, 6>& level_channels, const DecoderConfig& cfg,
                    Initializer& init)
    : cfg_(cfg), head_r_(2 * cfg.k, cfg.k, init), head_d_(2 * cfg.k, cfg.k, init) {
  if (cfg.k < 1) throw ConfigError("decoder width k must be positive");
  for (int i = 0; i < 6; ++i) {
    unify_rgb_[i] = std::make_unique<BConv<T>>(level_channels[i], cfg.k, 3, init);
    unify_depth_[i] = std::make_unique<BConv<T>>(level_channels[i], cfg.k, 3, init);
    this->register_module("unify_r" + std::to_string(i), *unify_rgb_[i]);
    this->register_module("unify_d" + std::to_string(i), *unify_depth_[i]);
  }
  if (cfg.kind == DecoderKind::kGroup) {
    fuse_high_ = std::make_unique<BConv<T>>(2 * cfg.k, cfg.k, 3, init);
    fuse_low_ = std::make_unique<BConv<T>>(2 * cfg.k, cfg.k, 3, init);
    head_c_ = std::make_unique<PredictionHead<T>>(2 * cfg.k, cfg.k, init);
    this->register_module("fuse_h", *fuse_high_);
    this->register_module("fuse_l", *fuse_low_);
    this->register_module("head_c", *head_c_);
  } else {
    unet_ = std::make_unique<UnetDecoder<T>>(cfg.k, init);
    this->register_module("unet", *unet_);
  }
  this->register_module("head_r", head_r_);
  this->register_module("head_d", head_d_);
}

template <typename T>
std::array<Var<T>, 6> Decoder<T>::unify(const FeaturePyramid<T>& pyramid, Modality m) {
  auto& convs = m == Modality::kRgb ? unify_rgb_ : unify_depth_;
  std::array<Var<T>, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = convs[i]->forward(pyramid.levels[i]);
  return out;
}

template <typename T>
Var<T> Decoder<T>::fuse(const GroupedFeatures<T>& g, int out_h, int out_w) {
  if (!fuse_high_) throw ConfigError("fused group path is not built for the U-net decoder");
  // [product, sum] concatenation order.
  Var<T> fc_high = fuse_high_->forward(
      concat2(ops::mul(g.rgb_high, g.depth_high), ops::add(g.rgb_high, g.depth_high)));
  Var<T> fc_low = fuse_low_->forward(
      concat2(ops::mul(g.rgb_low, g.depth_low), ops::add(g.rgb_low, g.depth_low)));
  return head_c_->forward(concat2(upsample_to(fc_high, fc_low), fc_low), out_h, out_w);
}

template <typename T>
Var<T> Decoder<T>::branch_predict(Modality m, const Var<T>& high, const Var<T>& low,
                                  int out_h, int out_w) {
  return head(m).forward(concat2(upsample_to(high, low), low), out_h, out_w);
}

template <typename T>
DecoderOutput<T> Decoder<T>::forward(const PyramidPair<T>& pyramids, int out_h, int out_w) {
  const auto ur = unify(pyramids.rgb, Modality::kRgb);
  const auto ud = unify(pyramids.depth, Modality::kDepth);
  const auto [rh, rl] = group_levels(ur);
  const auto [dh, dl] = group_levels(ud);
  DecoderOutput<T> out;
  out.s_r = branch_predict(Modality::kRgb, rh, rl, out_h, out_w);
  out.s_d = branch_predict(Modality::kDepth, dh, dl, out_h, out_w);
  if (cfg_.kind == DecoderKind::kGroup) {
    out.s_c = fuse(GroupedFeatures<T>{rh, rl, dh, dl}, out_h, out_w);
  } else {
    out.s_c = unet_->forward(ur, ud, out_h, out_w);
  }
  return out;
}

template <typename T>
std::size_t Decoder<T>::unify_parameter_count() const {
  std::size_t total = 0;
  for (const auto& c : unify_rgb_) total += c->parameter_count();
  for (const auto& c : unify_depth_) total += c->parameter_count();
  return total;
}

template <typename T>
std::size_t Decoder<T>::gd_c_parameter_count() const {
  if (!fuse_high_) return 0;
  return fuse_high_->parameter_count() + fuse_low_->parameter_count() +
         head_c_->parameter_count();
}

template <typename T>
std::size_t Decoder<T>::unet_parameter_count() const {
  return unet_ ? unet_->parameter_count() : 0;
}

template std::pair<Var<float>, Var<float>> group_levels(const std::array<Var<float>, 6>&);
template std::pair<Var<double>, Var<double>> group_levels(const std::array<Var<double>, 6>&);
template class UnetDecoder<float>;
template class UnetDecoder<double>;
template class Decoder<float>;
template class Decoder<double>;

}  // namespace btsnet
