#include "softmark/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "softmark/error.hpp"

namespace softmark {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size())
    throw InvalidArgument("tensor shape " + shape_str(shape_) + " does not match " +
                          std::to_string(data_.size()) + " values");
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t stride = data_.size() / shape_.at(0);
  return {data_.data() + i * stride, stride};
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t stride = data_.size() / shape_.at(0);
  return {data_.data() + i * stride, stride};
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size())
    throw InvalidArgument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) throw InvalidArgument("slice_rows out of range");
  Shape s = t.shape();
  s[0] = end - begin;
  const std::size_t stride = t.dim(0) ? t.size() / t.dim(0) : 0;
  std::vector<double> v(t.storage().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                        t.storage().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(s), std::move(v));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Shape s = t.shape();
  s[0] = idx.size();
  Tensor out(s);
  const std::size_t stride = t.size() / t.dim(0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= t.dim(0)) throw InvalidArgument("gather_rows index out of range");
    std::copy_n(t.data() + idx[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw InvalidArgument("concat_rows shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape s = a.shape();
  s[0] += b.dim(0);
  std::vector<double> v;
  v.reserve(a.size() + b.size());
  v.insert(v.end(), a.storage().begin(), a.storage().end());
  v.insert(v.end(), b.storage().begin(), b.storage().end());
  return Tensor(std::move(s), std::move(v));
}

}  // namespace softmark
