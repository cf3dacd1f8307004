#include "btsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "btsnet/errors.hpp"

namespace btsnet {

namespace {

std::string join_lines(const std::vector<std::string>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << '\n';
    out << items[i];
  }
  return out.str();
}

}  // namespace

ItemizedError::ItemizedError(std::vector<std::string> items)
    : std::runtime_error(join_lines(items)), items_(std::move(items)) {}

std::string Shape::str() const {
  std::ostringstream out;
  out << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  if (!shape.valid()) {
    throw PreconditionError("tensor extents must all be >= 1, got " +
                            shape.str());
  }
  data_.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  if (!shape.valid() || data_.size() != shape.numel()) {
    throw PreconditionError("tensor data size does not match shape " +
                            shape.str());
  }
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
T Tensor<T>::min() const {
  return *std::min_element(data_.begin(), data_.end());
}

template <typename T>
T Tensor<T>::max() const {
  return *std::max_element(data_.begin(), data_.end());
}

template <typename T>
Tensor<T> Tensor<T>::slice_batch(int n) const {
  if (n < 0 || n >= shape_.n) {
    throw PreconditionError("batch index out of range");
  }
  Shape s = shape_;
  s.n = 1;
  const std::size_t per = s.numel();
  return Tensor<T>(s, std::vector<T>(data_.begin() + n * per,
                                     data_.begin() + (n + 1) * per));
}

template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw PreconditionError("cannot stack an empty batch");
  Shape s = items.front().shape();
  std::vector<T> values;
  values.reserve(s.numel() * items.size());
  for (const auto& t : items) {
    if (t.shape() != s || s.n != 1) {
      throw PreconditionError("stack_batch expects equal (1,C,H,W) shapes");
    }
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  s.n = static_cast<int>(items.size());
  return Tensor<T>(s, std::move(values));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw PreconditionError("max_abs_diff shape mismatch " + a.shape().str() +
                            " vs " + b.shape().str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return worst;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> stack_batch(std::span<const Tensor<float>>);
template Tensor<double> stack_batch(std::span<const Tensor<double>>);
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace btsnet
