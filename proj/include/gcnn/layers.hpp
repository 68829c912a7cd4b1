#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gcnn/icosphere.hpp"
#include "gcnn/kernels.hpp"
#include "gcnn/sampler.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn {

using kernels::Mode;

enum class LayerType { MeshConv, MeshPool, BatchNorm, ReLU, FullyConnected, Softmax, ImageConv, ImagePool };

std::string layer_type_name(LayerType type);

enum class ParamRole { Weights, Bias, Scale, Shift, RunningMean, RunningVar };

/// View of one parameter array owned by a layer. Running statistics have no
/// gradient (grad is empty) and are never touched by the optimizer.
struct ParamView {
  ParamRole role;
  std::span<double> value;
  std::span<double> grad;
  bool trainable() const { return !grad.empty(); }
};

/// One table row of a network. Layers cache what their backward pass needs
/// during forward; a layer instance therefore serves one batch at a time.
class Layer {
 public:
  Layer(LayerType type, std::string name) : type_(type), name_(std::move(name)) {}
  virtual ~Layer() = default;

  LayerType type() const { return type_; }
  const std::string& name() const { return name_; }

  /// Per-sample output extents for per-sample input extents.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  /// Accumulates parameter gradients; returns the input gradient when asked.
  virtual Tensor backward(const Tensor& grad_out, bool need_input_grad) = 0;
  virtual std::vector<ParamView> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  /// Patch or kernel description for the shape table ("1x25 / 1", "11x11 / 4").
  virtual std::string geometry() const { return {}; }

  bool frozen = false;

 private:
  LayerType type_;
  std::string name_;
};

class MeshConvLayer final : public Layer {
 public:
  MeshConvLayer(std::string name, std::shared_ptr<const SamplerIndexMap> map, std::size_t in_channels,
                std::size_t filters);
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MeshConvLayer>(*this); }
  std::string geometry() const override;

  const SamplerIndexMap& index_map() const { return *map_; }
  std::shared_ptr<const SamplerIndexMap> shared_index_map() const { return map_; }
  Tensor weights, bias, grad_weights, grad_bias;

 private:
  std::shared_ptr<const SamplerIndexMap> map_;
  Tensor input_;
};

class MeshPoolLayer final : public Layer {
 public:
  MeshPoolLayer(std::string name, std::shared_ptr<const IcosphereHierarchy> hierarchy, int coarse_level);
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MeshPoolLayer>(*this); }
  std::string geometry() const override { return "1x6 or 1x7 / 1"; }
  int coarse_level() const { return coarse_level_; }

 private:
  std::shared_ptr<const IcosphereHierarchy> hierarchy_;
  int coarse_level_;
  std::size_t fine_nodes_ = 0;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::size_t features);
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormLayer>(*this); }

  kernels::BatchNormState state;
  std::vector<double> grad_scale, grad_shift;

 private:
  kernels::BatchNormCache cache_;
  Tensor input_;
  bool used_batch_stats_ = false;
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(std::string name) : Layer(LayerType::ReLU, std::move(name)) {}
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }

 private:
  Tensor input_;
};

class FullyConnectedLayer final : public Layer {
 public:
  FullyConnectedLayer(std::string name, std::size_t inputs, std::size_t outputs);
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<FullyConnectedLayer>(*this); }

  Tensor weights, bias, grad_weights, grad_bias;

 private:
  Tensor input_;
  Shape input_dims_;
};

/// Terminal row; forward maps logits to class probabilities. Training uses
/// softmax_cross_entropy on the logits of the row below instead.
class SoftmaxLayer final : public Layer {
 public:
  explicit SoftmaxLayer(std::string name) : Layer(LayerType::Softmax, std::move(name)) {}
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor forward(const Tensor& input, Mode) override { return kernels::softmax(input); }
  Tensor backward(const Tensor&, bool) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<SoftmaxLayer>(*this); }
};

class ImageConvLayer final : public Layer {
 public:
  ImageConvLayer(std::string name, std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t in_channels,
                 std::size_t filters);
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ImageConvLayer>(*this); }
  std::string geometry() const override;

  std::size_t kernel, stride, pad;
  Tensor weights, bias, grad_weights, grad_bias;

 private:
  Tensor input_;
};

class ImagePoolLayer final : public Layer {
 public:
  ImagePoolLayer(std::string name, std::size_t kernel, std::size_t stride)
      : Layer(LayerType::ImagePool, std::move(name)), kernel(kernel), stride(stride) {}
  Shape output_shape(const Shape& input) const override;
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ImagePoolLayer>(*this); }
  std::string geometry() const override;

  std::size_t kernel, stride;

 private:
  Shape input_dims_;
};

}  // namespace gcnn
