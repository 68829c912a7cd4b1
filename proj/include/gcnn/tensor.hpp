#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gcnn/error.hpp"

namespace gcnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& dims);

/// Dense row-major tensor of doubles; the last dimension varies fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, double fill = 0.0) : dims_(std::move(dims)), values_(shape_volume(dims_), fill) {}
  Tensor(Shape dims, std::vector<double> values) : dims_(std::move(dims)), values_(std::move(values)) {
    if (values_.size() != shape_volume(dims_))
      throw ShapeError("tensor " + shape_string(dims_) + " given " + std::to_string(values_.size()) + " values");
  }

  const Shape& dims() const { return dims_; }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Same values, new extents of equal volume.
  Tensor reshaped(Shape dims) const& { return Tensor(std::move(dims), values_); }
  Tensor reshaped(Shape dims) && { return Tensor(std::move(dims), std::move(values_)); }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape dims_;
  std::vector<double> values_;
};

/// Stack equally-shaped samples along a new leading batch dimension.
Tensor stack_batch(std::span<const Tensor* const> samples);

/// Copy sample b (leading dimension) out of a batch.
Tensor batch_item(const Tensor& batch, std::size_t b);

}  // namespace gcnn
