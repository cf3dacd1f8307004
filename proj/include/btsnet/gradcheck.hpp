#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "btsnet/layers.hpp"

namespace btsnet {

struct GradCheckResult {
  std::string component;
  double max_rel_error = 0;
  std::string worst;  // "<leaf>[index]"
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-6;
  /// Coordinates sampled per parameter or input tensor.
  int samples_per_leaf = 12;
  /// |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 3;
};

/// Compares the gradient of `objective` w.r.t. `leaves` against central
/// differences at sampled coordinates. `objective` must rebuild its result
/// from the leaves' current values.
template <typename T>
GradCheckResult check_gradients(const std::function<Var<T>()>& objective,
                                std::vector<NamedParameter<T>> leaves,
                                const GradCheckOptions& options);

/// Components accepted by `grad_check`.
const std::vector<std::string>& gradcheck_components();

/// Builds the named TINY-size component with random inputs and checks it.
/// "bts" covers every direction, residual and attention-order combination.
template <typename T>
GradCheckResult grad_check(const std::string& component, const GradCheckOptions& options);

}  // namespace btsnet
