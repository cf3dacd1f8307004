#include "btsnet/optimizer.hpp"

#include <cmath>

namespace btsnet {

template <typename T>
Adam<T>::Adam(std::vector<NamedParameter<T>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& var = params_[i].var;
    if (!var.has_grad()) continue;
    const Tensor<T>& g = var.node()->grad;
    Tensor<T>& w = var.mutable_value();
    Tensor<T>& m = m_[i];
    Tensor<T>& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = beta1_ * m[k] + (1 - beta1_) * gk;
      const double vk = beta2_ * v[k] + (1 - beta2_) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

double scheduled_lr(double lr, int epoch, int drop_epoch, double factor) {
  return epoch < drop_epoch ? lr : lr / factor;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace btsnet
