#pragma once

#include "btsnet/decoder.hpp"

namespace btsnet {

struct NetworkConfig {
  BackboneConfig backbone;
  BtsConfig bts;
  DecoderConfig decoder;
  bool with_bts = true;

  static NetworkConfig full();
  static NetworkConfig tiny();
  static NetworkConfig for_scale(Scale s) { return s == Scale::kFull ? full() : tiny(); }

  bool operator==(const NetworkConfig&) const = default;
};

template <typename T>
struct NetworkOutput {
  DecoderOutput<T> saliency;
  PyramidPair<T> pyramids;
};

/// Dual-branch encoder with BTS blocks feeding the group (or U-net) decoder.
template <typename T>
class BtsNet : public Module<T> {
 public:
  BtsNet(const NetworkConfig& cfg, Initializer& init);

  /// rgb: (N, 3, H, W) standardized; depth: (N, 1, H, W) in [0, 1].
  NetworkOutput<T> forward(const Var<T>& rgb, const Var<T>& depth);

  const NetworkConfig& config() const { return cfg_; }
  Encoder<T>& encoder() { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }

 private:
  NetworkConfig cfg_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

}  // namespace btsnet
