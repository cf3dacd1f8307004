#include "btsnet/loss.hpp"

#include "btsnet/errors.hpp"

namespace btsnet {

template <typename T>
Var<T> bce(const Var<T>& s, const Tensor<T>& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] != T(0) && g[i] != T(1)) {
      throw PreconditionError("ground truth must be binary");
    }
  }
  return ops::bce_mean(s, g, kBceEpsilon);
}

template <typename T>
Var<T> total_loss(const DecoderOutput<T>& out, const Tensor<T>& g, const LossWeights& w) {
  if (w.lambda_c < 0 || w.lambda_r < 0 || w.lambda_d < 0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  Var<T> total = ops::scale(bce(out.s_c, g), w.lambda_c);
  total = ops::add(total, ops::scale(bce(out.s_r, g), w.lambda_r));
  return ops::add(total, ops::scale(bce(out.s_d, g), w.lambda_d));
}

template Var<float> bce(const Var<float>&, const Tensor<float>&);
template Var<double> bce(const Var<double>&, const Tensor<double>&);
template Var<float> total_loss(const DecoderOutput<float>&, const Tensor<float>&,
                               const LossWeights&);
template Var<double> total_loss(const DecoderOutput<double>&, const Tensor<double>&,
                                const LossWeights&);

}  // namespace btsnet
