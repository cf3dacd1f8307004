#pragma once

#include "btsnet/decoder.hpp"

namespace btsnet {

/// Per-map weights of the three-way supervision.
struct LossWeights {
  double lambda_c = 1.0;
  double lambda_r = 0.5;
  double lambda_d = 0.5;

  bool operator==(const LossWeights&) const = default;
};

/// Probabilities are clamped to [kBceEpsilon, 1 - kBceEpsilon] before the log.
inline constexpr double kBceEpsilon = 1e-7;

/// Pixel-mean binary cross-entropy. `g` must be binary and match `s`.
template <typename T>
Var<T> bce(const Var<T>& s, const Tensor<T>& g);

/// λ_c·bce(S_c) + λ_r·bce(S_r) + λ_d·bce(S_d).
template <typename T>
Var<T> total_loss(const DecoderOutput<T>& out, const Tensor<T>& g, const LossWeights& w);

}  // namespace btsnet
