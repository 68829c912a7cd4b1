#include "gcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gcnn {

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? " x " : "") << dims[i];
  os << ']';
  return os.str();
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor* const> samples) {
  if (samples.empty()) throw ShapeError("cannot stack an empty batch");
  const Shape& item = samples.front()->dims();
  Shape dims{samples.size()};
  dims.insert(dims.end(), item.begin(), item.end());
  Tensor out(dims);
  const std::size_t stride = shape_volume(item);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b]->dims() != item)
      throw ShapeError("batch item " + std::to_string(b) + " has shape " + shape_string(samples[b]->dims()) +
                       ", expected " + shape_string(item));
    std::copy(samples[b]->data(), samples[b]->data() + stride, out.data() + b * stride);
  }
  return out;
}

Tensor batch_item(const Tensor& batch, std::size_t b) {
  if (batch.rank() < 1 || b >= batch.dim(0)) throw IndexError("batch item out of range");
  Shape item(batch.dims().begin() + 1, batch.dims().end());
  const std::size_t stride = shape_volume(item);
  std::vector<double> values(batch.data() + b * stride, batch.data() + (b + 1) * stride);
  return Tensor(std::move(item), std::move(values));
}

}  // namespace gcnn
