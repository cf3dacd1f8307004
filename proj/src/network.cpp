#include "btsnet/network.hpp"

#include "btsnet/errors.hpp"

namespace btsnet {

NetworkConfig NetworkConfig::full() {
  NetworkConfig c;
  c.backbone = BackboneConfig::full();
  c.decoder.k = 256;
  return c;
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.backbone = BackboneConfig::tiny();
  c.decoder.k = 16;
  return c;
}

template <typename T>
BtsNet<T>::BtsNet(const NetworkConfig& cfg, Initializer& init)
    : cfg_(cfg),
      encoder_(cfg.backbone, cfg.bts, init, cfg.with_bts),
      decoder_(cfg.backbone.level_channels(), cfg.decoder, init) {
  this->register_module("encoder", encoder_);
  this->register_module("decoder", decoder_);
}

template <typename T>
NetworkOutput<T> BtsNet<T>::forward(const Var<T>& rgb, const Var<T>& depth) {
  const Shape& s = rgb.shape();
  if (depth.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw ConfigError("depth " + depth.shape().str() + " does not match rgb " + s.str());
  }
  NetworkOutput<T> out;
  out.pyramids = encoder_.forward(rgb, depth_stem(depth));
  out.saliency = decoder_.forward(out.pyramids, s.h, s.w);
  return out;
}

template class BtsNet<float>;
template class BtsNet<double>;

}  // namespace btsnet
