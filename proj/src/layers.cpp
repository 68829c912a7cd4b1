#include "gcnn/layers.hpp"

#include <sstream>

namespace gcnn {

namespace {

std::span<double> span_of(Tensor& t) { return t.values(); }
std::span<double> span_of(std::vector<double>& v) { return v; }

void require_item_shape(const Tensor& input, const Shape& expected_rank_hint, const std::string& who) {
  if (input.rank() != expected_rank_hint.size() + 1)
    throw ShapeError(who + ": unexpected input " + shape_string(input.dims()));
}

}  // namespace

std::string layer_type_name(LayerType type) {
  switch (type) {
    case LayerType::MeshConv: return "mesh_conv";
    case LayerType::MeshPool: return "mesh_mean_pool";
    case LayerType::BatchNorm: return "batch_norm";
    case LayerType::ReLU: return "relu";
    case LayerType::FullyConnected: return "fully_connected";
    case LayerType::Softmax: return "softmax";
    case LayerType::ImageConv: return "image_conv2d";
    case LayerType::ImagePool: return "image_mean_pool2d";
  }
  return "unknown";
}

// ---- mesh convolution -------------------------------------------------------

MeshConvLayer::MeshConvLayer(std::string name, std::shared_ptr<const SamplerIndexMap> map, std::size_t in_channels,
                             std::size_t filters)
    : Layer(LayerType::MeshConv, std::move(name)),
      weights({map->points, in_channels, filters}),
      bias({filters}),
      grad_weights({map->points, in_channels, filters}),
      grad_bias({filters}),
      map_(std::move(map)) {}

Shape MeshConvLayer::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[0] != map_->nodes || input[1] != weights.dim(1))
    throw ShapeError(name() + ": expects " + std::to_string(map_->nodes) + " x " + std::to_string(weights.dim(1)) +
                     ", got " + shape_string(input));
  return {map_->nodes, weights.dim(2)};
}

Tensor MeshConvLayer::forward(const Tensor& input, Mode) {
  input_ = input;
  return kernels::mesh_conv_forward(input, *map_, weights, bias);
}

Tensor MeshConvLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  auto g = kernels::mesh_conv_backward(input_, *map_, weights, grad_out, need_input_grad);
  for (std::size_t i = 0; i < grad_weights.size(); ++i) grad_weights[i] += g.weights[i];
  for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.bias[i];
  return need_input_grad ? std::move(g.input) : Tensor();
}

std::vector<ParamView> MeshConvLayer::params() {
  return {{ParamRole::Weights, span_of(weights), span_of(grad_weights)},
          {ParamRole::Bias, span_of(bias), span_of(grad_bias)}};
}

std::string MeshConvLayer::geometry() const { return "1x" + std::to_string(map_->points) + " / 1"; }

// ---- mesh pooling -----------------------------------------------------------

MeshPoolLayer::MeshPoolLayer(std::string name, std::shared_ptr<const IcosphereHierarchy> hierarchy, int coarse_level)
    : Layer(LayerType::MeshPool, std::move(name)), hierarchy_(std::move(hierarchy)), coarse_level_(coarse_level) {
  hierarchy_->pooling_groups(coarse_level_);  // validates the level pair
  fine_nodes_ = hierarchy_->level(coarse_level_ + 1).node_count();
}

Shape MeshPoolLayer::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[0] != fine_nodes_)
    throw ShapeError(name() + ": expects " + std::to_string(fine_nodes_) + " nodes, got " + shape_string(input));
  return {hierarchy_->level(coarse_level_).node_count(), input[1]};
}

Tensor MeshPoolLayer::forward(const Tensor& input, Mode) {
  return kernels::mesh_mean_pool_forward(input, hierarchy_->pooling_groups(coarse_level_));
}

Tensor MeshPoolLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  return kernels::mesh_mean_pool_backward(grad_out, hierarchy_->pooling_groups(coarse_level_), fine_nodes_);
}

// ---- batch normalization ----------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, std::size_t features)
    : Layer(LayerType::BatchNorm, std::move(name)),
      state(kernels::BatchNormState::identity(features)),
      grad_scale(features, 0.0),
      grad_shift(features, 0.0) {}

Tensor BatchNormLayer::forward(const Tensor& input, Mode mode) {
  // Frozen rows keep their running statistics: they always normalize with them.
  used_batch_stats_ = (mode == Mode::Train && !frozen);
  if (used_batch_stats_) return kernels::batch_norm_forward(input, state, Mode::Train, &cache_);
  input_ = input;
  return kernels::batch_norm_forward(input, state, Mode::Eval);
}

Tensor BatchNormLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  auto g = used_batch_stats_ ? kernels::batch_norm_backward(grad_out, state, cache_)
                             : kernels::batch_norm_backward_eval(grad_out, input_, state);
  for (std::size_t c = 0; c < state.features(); ++c) {
    grad_scale[c] += g.scale[c];
    grad_shift[c] += g.shift[c];
  }
  return need_input_grad ? std::move(g.input) : Tensor();
}

std::vector<ParamView> BatchNormLayer::params() {
  return {{ParamRole::Scale, span_of(state.scale), span_of(grad_scale)},
          {ParamRole::Shift, span_of(state.shift), span_of(grad_shift)},
          {ParamRole::RunningMean, span_of(state.running_mean), {}},
          {ParamRole::RunningVar, span_of(state.running_var), {}}};
}

// ---- relu -------------------------------------------------------------------

Tensor ReluLayer::forward(const Tensor& input, Mode) {
  input_ = input;
  return kernels::relu_forward(input);
}

Tensor ReluLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  return kernels::relu_backward(input_, grad_out);
}

// ---- fully connected --------------------------------------------------------

FullyConnectedLayer::FullyConnectedLayer(std::string name, std::size_t inputs, std::size_t outputs)
    : Layer(LayerType::FullyConnected, std::move(name)),
      weights({inputs, outputs}),
      bias({outputs}),
      grad_weights({inputs, outputs}),
      grad_bias({outputs}) {}

Shape FullyConnectedLayer::output_shape(const Shape& input) const {
  if (shape_volume(input) != weights.dim(0))
    throw ShapeError(name() + ": expects " + std::to_string(weights.dim(0)) + " inputs, got " + shape_string(input));
  return {weights.dim(1)};
}

Tensor FullyConnectedLayer::forward(const Tensor& input, Mode) {
  input_dims_ = input.dims();
  const std::size_t batch = input.dim(0);
  input_ = input.reshaped({batch, input.size() / batch});
  return kernels::fully_connected_forward(input_, weights, bias);
}

Tensor FullyConnectedLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  auto g = kernels::fully_connected_backward(input_, weights, grad_out, need_input_grad);
  for (std::size_t i = 0; i < grad_weights.size(); ++i) grad_weights[i] += g.weights[i];
  for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.bias[i];
  return need_input_grad ? std::move(g.input).reshaped(input_dims_) : Tensor();
}

std::vector<ParamView> FullyConnectedLayer::params() {
  return {{ParamRole::Weights, span_of(weights), span_of(grad_weights)},
          {ParamRole::Bias, span_of(bias), span_of(grad_bias)}};
}

Tensor SoftmaxLayer::backward(const Tensor&, bool) {
  throw ConfigError("softmax row is evaluated through softmax_cross_entropy during training");
}

// ---- image layers -----------------------------------------------------------

ImageConvLayer::ImageConvLayer(std::string name, std::size_t kernel, std::size_t stride, std::size_t pad,
                               std::size_t in_channels, std::size_t filters)
    : Layer(LayerType::ImageConv, std::move(name)),
      kernel(kernel),
      stride(stride),
      pad(pad),
      weights({kernel, kernel, in_channels, filters}),
      bias({filters}),
      grad_weights({kernel, kernel, in_channels, filters}),
      grad_bias({filters}) {}

Shape ImageConvLayer::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != weights.dim(2))
    throw ShapeError(name() + ": expects H x W x " + std::to_string(weights.dim(2)) + ", got " + shape_string(input));
  return {kernels::conv_output_extent(input[0], kernel, stride, pad),
          kernels::conv_output_extent(input[1], kernel, stride, pad), weights.dim(3)};
}

Tensor ImageConvLayer::forward(const Tensor& input, Mode) {
  require_item_shape(input, {0, 0, 0}, name());
  input_ = input;
  return kernels::image_conv2d_forward(input, weights, bias, stride, pad);
}

Tensor ImageConvLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  auto g = kernels::image_conv2d_backward(input_, weights, grad_out, stride, pad, need_input_grad);
  for (std::size_t i = 0; i < grad_weights.size(); ++i) grad_weights[i] += g.weights[i];
  for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.bias[i];
  return need_input_grad ? std::move(g.input) : Tensor();
}

std::vector<ParamView> ImageConvLayer::params() {
  return {{ParamRole::Weights, span_of(weights), span_of(grad_weights)},
          {ParamRole::Bias, span_of(bias), span_of(grad_bias)}};
}

std::string ImageConvLayer::geometry() const {
  std::ostringstream os;
  os << kernel << "x" << kernel << " / " << stride << ", pad " << pad;
  return os.str();
}

Shape ImagePoolLayer::output_shape(const Shape& input) const {
  if (input.size() != 3) throw ShapeError(name() + ": expects H x W x C, got " + shape_string(input));
  return {kernels::conv_output_extent(input[0], kernel, stride, 0),
          kernels::conv_output_extent(input[1], kernel, stride, 0), input[2]};
}

Tensor ImagePoolLayer::forward(const Tensor& input, Mode) {
  input_dims_ = input.dims();
  return kernels::image_mean_pool2d_forward(input, kernel, stride);
}

Tensor ImagePoolLayer::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  return kernels::image_mean_pool2d_backward(grad_out, input_dims_, kernel, stride);
}

std::string ImagePoolLayer::geometry() const {
  return std::to_string(kernel) + "x" + std::to_string(kernel) + " / " + std::to_string(stride);
}

}  // namespace gcnn
