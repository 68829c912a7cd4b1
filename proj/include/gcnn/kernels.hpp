#pragma once

#include <span>
#include <vector>

#include "gcnn/icosphere.hpp"
#include "gcnn/sampler.hpp"
#include "gcnn/tensor.hpp"

// Layer kernels with explicit forward and backward passes. All kernels are
// pure: they read their inputs and return freshly allocated outputs. Every
// reduction runs in ascending sample/node order so results are bit-stable.
namespace gcnn::kernels {

// ---- mesh convolution -------------------------------------------------------
// input  B x N x Cin, weights P x Cin x Cout, bias Cout -> B x N x Cout
//   out[b][n][f] = sum_{p,c} input[b][idx(n,p)][c] * w[p][c][f] + bias[f]

Tensor mesh_conv_forward(const Tensor& input, const SamplerIndexMap& map, const Tensor& weights,
                         const Tensor& bias);

struct MeshConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
MeshConvGrads mesh_conv_backward(const Tensor& input, const SamplerIndexMap& map, const Tensor& weights,
                                 const Tensor& grad_out, bool need_input_grad = true);

// ---- mesh mean pooling ------------------------------------------------------
// input B x Nfine x C -> B x Ncoarse x C; out[i] = mean over group(i).

Tensor mesh_mean_pool_forward(const Tensor& input, const PoolingGroups& groups);
Tensor mesh_mean_pool_backward(const Tensor& grad_out, const PoolingGroups& groups, std::size_t fine_nodes);

// ---- batch normalization ----------------------------------------------------
// Normalizes each feature (last dimension) over every other position.

struct BatchNormState {
  std::vector<double> scale;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.9;

  static BatchNormState identity(std::size_t features);
  std::size_t features() const { return scale.size(); }
};

struct BatchNormCache {
  Tensor normalized;  // x_hat
  std::vector<double> inv_std;
};

enum class Mode { Train, Eval };

/// Train mode needs B >= 2 and updates running statistics in place:
/// running = momentum * running + (1 - momentum) * batch (unbiased variance).
Tensor batch_norm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor input;
  std::vector<double> scale;
  std::vector<double> shift;
};
BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormState& state, const BatchNormCache& cache);
/// Backward through eval-mode normalization (fixed statistics).
BatchNormGrads batch_norm_backward_eval(const Tensor& grad_out, const Tensor& input, const BatchNormState& state);

// ---- elementwise ------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// ---- fully connected --------------------------------------------------------
// input B x D (any trailing extents are flattened), weights D x H, bias H.

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                    bool need_input_grad = true);

// ---- loss -------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;   // mean over the batch
  Tensor grad_logits;  // (softmax - onehot) / B
};
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax(const Tensor& logits);

// ---- optimizer --------------------------------------------------------------

/// params -= learning_rate * grads. Throws NumericError on a non-finite gradient
/// before touching any parameter.
void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate);

// ---- 2D image layers (projection baseline) ----------------------------------
// input B x H x W x Cin, weights KH x KW x Cin x Cout.

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

Tensor image_conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                            std::size_t pad);
struct ImageConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
ImageConvGrads image_conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                     std::size_t stride, std::size_t pad, bool need_input_grad = true);

Tensor image_mean_pool2d_forward(const Tensor& input, std::size_t kernel, std::size_t stride);
Tensor image_mean_pool2d_backward(const Tensor& grad_out, const Shape& input_dims, std::size_t kernel,
                                  std::size_t stride);

}  // namespace gcnn::kernels
