#include "gcnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace gcnn::kernels {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

// Rows of the gathered patch matrix handled per GEMM call; bounds scratch
// memory at the 40962-node level.
constexpr std::size_t kRowBlock = 2048;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite input");
}

}  // namespace

// ---- mesh convolution -------------------------------------------------------

Tensor mesh_conv_forward(const Tensor& input, const SamplerIndexMap& map, const Tensor& weights,
                         const Tensor& bias) {
  require(input.rank() == 3, "mesh_conv: input must be B x N x C, got " + shape_string(input.dims()));
  const std::size_t batch = input.dim(0), nodes = input.dim(1), cin = input.dim(2);
  require(nodes == map.nodes, "mesh_conv: input has " + std::to_string(nodes) + " nodes, index map level " +
                                  std::to_string(map.level) + " has " + std::to_string(map.nodes));
  require(weights.rank() == 3 && weights.dim(0) == map.points && weights.dim(1) == cin,
          "mesh_conv: weights " + shape_string(weights.dims()) + " do not match P=" + std::to_string(map.points) +
              ", Cin=" + std::to_string(cin));
  const std::size_t cout = weights.dim(2);
  require(bias.size() == cout, "mesh_conv: bias size mismatch");
  require_finite(input, "mesh_conv");

  const std::size_t width = map.points * cin;
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));
  const ConstRowVectorMap b(bias.data(), static_cast<Eigen::Index>(cout));

  Tensor out({batch, nodes, cout});
  RowMatrix patch;
  for (std::size_t s = 0; s < batch; ++s) {
    const double* x = input.data() + s * nodes * cin;
    for (std::size_t n0 = 0; n0 < nodes; n0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, nodes - n0);
      patch.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = patch.data() + r * width;
        for (std::size_t p = 0; p < map.points; ++p) {
          const double* src = x + static_cast<std::size_t>(map.at(n0 + r, p)) * cin;
          std::copy(src, src + cin, dst + p * cin);
        }
      }
      MatrixMap o(out.data() + (s * nodes + n0) * cout, static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cout));
      o.noalias() = patch * w;
      o.rowwise() += b;
    }
  }
  return out;
}

MeshConvGrads mesh_conv_backward(const Tensor& input, const SamplerIndexMap& map, const Tensor& weights,
                                 const Tensor& grad_out, bool need_input_grad) {
  const std::size_t batch = input.dim(0), nodes = input.dim(1), cin = input.dim(2);
  const std::size_t cout = weights.dim(2);
  require(grad_out.dims() == Shape({batch, nodes, cout}), "mesh_conv backward: gradient shape " +
                                                              shape_string(grad_out.dims()) + " mismatch");
  const std::size_t width = map.points * cin;

  MeshConvGrads g{Tensor(need_input_grad ? input.dims() : Shape{0}), Tensor(weights.dims()), Tensor({cout})};
  MatrixMap gw(g.weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));

  RowMatrix patch, grad_patch;
  for (std::size_t s = 0; s < batch; ++s) {
    const double* x = input.data() + s * nodes * cin;
    for (std::size_t n0 = 0; n0 < nodes; n0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, nodes - n0);
      patch.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width));
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = patch.data() + r * width;
        for (std::size_t p = 0; p < map.points; ++p) {
          const double* src = x + static_cast<std::size_t>(map.at(n0 + r, p)) * cin;
          std::copy(src, src + cin, dst + p * cin);
        }
      }
      const ConstMatrixMap go(grad_out.data() + (s * nodes + n0) * cout, static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(cout));
      gw.noalias() += patch.transpose() * go;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 0; f < cout; ++f) g.bias[f] += go(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));

      if (!need_input_grad) continue;
      grad_patch.noalias() = go * w.transpose();
      double* gx = g.input.data() + s * nodes * cin;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* src = grad_patch.data() + r * width;
        for (std::size_t p = 0; p < map.points; ++p) {
          double* dst = gx + static_cast<std::size_t>(map.at(n0 + r, p)) * cin;
          for (std::size_t c = 0; c < cin; ++c) dst[c] += src[p * cin + c];
        }
      }
    }
  }
  return g;
}

// ---- mesh mean pooling ------------------------------------------------------

Tensor mesh_mean_pool_forward(const Tensor& input, const PoolingGroups& groups) {
  require(input.rank() == 3, "mesh_mean_pool: input must be B x N x C");
  const std::size_t batch = input.dim(0), fine = input.dim(1), ch = input.dim(2);
  const std::size_t coarse = groups.size();
  // Groups of a level pair reference every fine node; the largest member
  // index is the last midpoint, so this is an exact level check.
  std::size_t max_member = 0;
  for (const auto& g : groups)
    for (NodeIndex j : g) max_member = std::max(max_member, static_cast<std::size_t>(j));
  require(max_member + 1 == fine, "mesh_mean_pool: groups cover " + std::to_string(max_member + 1) +
                                      " fine nodes, input has " + std::to_string(fine));

  Tensor out({batch, coarse, ch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* x = input.data() + s * fine * ch;
    double* y = out.data() + s * coarse * ch;
    for (std::size_t i = 0; i < coarse; ++i) {
      const double inv = 1.0 / static_cast<double>(groups[i].size());
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (NodeIndex j : groups[i]) acc += x[static_cast<std::size_t>(j) * ch + c];
        y[i * ch + c] = acc * inv;
      }
    }
  }
  return out;
}

Tensor mesh_mean_pool_backward(const Tensor& grad_out, const PoolingGroups& groups, std::size_t fine_nodes) {
  require(grad_out.rank() == 3 && grad_out.dim(1) == groups.size(), "mesh_mean_pool backward: shape mismatch");
  const std::size_t batch = grad_out.dim(0), coarse = groups.size(), ch = grad_out.dim(2);
  Tensor gin({batch, fine_nodes, ch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* gy = grad_out.data() + s * coarse * ch;
    double* gx = gin.data() + s * fine_nodes * ch;
    for (std::size_t i = 0; i < coarse; ++i) {
      const double inv = 1.0 / static_cast<double>(groups[i].size());
      for (NodeIndex j : groups[i]) {
        require(static_cast<std::size_t>(j) < fine_nodes, "mesh_mean_pool backward: group member out of range");
        for (std::size_t c = 0; c < ch; ++c) gx[static_cast<std::size_t>(j) * ch + c] += gy[i * ch + c] * inv;
      }
    }
  }
  return gin;
}

// ---- batch normalization ----------------------------------------------------

BatchNormState BatchNormState::identity(std::size_t features) {
  BatchNormState s;
  s.scale.assign(features, 1.0);
  s.shift.assign(features, 0.0);
  s.running_mean.assign(features, 0.0);
  s.running_var.assign(features, 1.0);
  return s;
}

Tensor batch_norm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache* cache) {
  require(input.rank() >= 2, "batch_norm: input needs a batch and a feature dimension");
  const std::size_t ch = input.dims().back();
  require(ch == state.features(), "batch_norm: " + std::to_string(ch) + " features, state has " +
                                      std::to_string(state.features()));
  const std::size_t rows = input.size() / ch;
  Tensor out(input.dims());

  if (mode == Mode::Eval) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double inv = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r * ch + c;
        out[i] = state.scale[c] * (input[i] - state.running_mean[c]) * inv + state.shift[c];
      }
    }
    return out;
  }

  if (input.dim(0) < 2) throw ConfigError("batch_norm: training mode needs a batch of at least 2");
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) mean[c] += input[r * ch + c];
  for (double& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const double d = input[r * ch + c] - mean[c];
      var[c] += d * d;
    }
  for (double& v : var) v /= static_cast<double>(rows);

  BatchNormCache local;
  BatchNormCache& cc = cache ? *cache : local;
  cc.normalized = Tensor(input.dims());
  cc.inv_std.resize(ch);
  for (std::size_t c = 0; c < ch; ++c) cc.inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      const double xhat = (input[i] - mean[c]) * cc.inv_std[c];
      cc.normalized[i] = xhat;
      out[i] = state.scale[c] * xhat + state.shift[c];
    }

  const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
  for (std::size_t c = 0; c < ch; ++c) {
    state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean[c];
    state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c] * unbias;
  }
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormState& state, const BatchNormCache& cache) {
  require(grad_out.dims() == cache.normalized.dims(), "batch_norm backward: shape mismatch");
  const std::size_t ch = state.features();
  const std::size_t rows = grad_out.size() / ch;
  BatchNormGrads g{Tensor(grad_out.dims()), std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      g.shift[c] += grad_out[i];
      g.scale[c] += grad_out[i] * cache.normalized[i];
    }
  // dx = scale * inv_std / m * (m * dy - sum(dy) - x_hat * sum(dy * x_hat))
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      g.input[i] = state.scale[c] * cache.inv_std[c] / m *
                   (m * grad_out[i] - g.shift[c] - cache.normalized[i] * g.scale[c]);
    }
  return g;
}

BatchNormGrads batch_norm_backward_eval(const Tensor& grad_out, const Tensor& input, const BatchNormState& state) {
  require(grad_out.dims() == input.dims(), "batch_norm backward: shape mismatch");
  const std::size_t ch = state.features();
  const std::size_t rows = grad_out.size() / ch;
  BatchNormGrads g{Tensor(grad_out.dims()), std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0)};
  for (std::size_t c = 0; c < ch; ++c) {
    const double inv = 1.0 / std::sqrt(state.running_var[c] + state.epsilon);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = r * ch + c;
      g.shift[c] += grad_out[i];
      g.scale[c] += grad_out[i] * (input[i] - state.running_mean[c]) * inv;
      g.input[i] = grad_out[i] * state.scale[c] * inv;
    }
  }
  return g;
}

// ---- elementwise ------------------------------------------------------------

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require(input.dims() == grad_out.dims(), "relu backward: shape mismatch");
  Tensor g(input.dims());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

// ---- fully connected --------------------------------------------------------

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require(input.rank() >= 1 && weights.rank() == 2, "fully_connected: bad ranks");
  const std::size_t batch = input.dim(0);
  const std::size_t in = input.size() / std::max<std::size_t>(batch, 1);
  require(weights.dim(0) == in, "fully_connected: input width " + std::to_string(in) + " vs weights " +
                                    shape_string(weights.dims()));
  const std::size_t out_w = weights.dim(1);
  require(bias.size() == out_w, "fully_connected: bias size mismatch");
  Tensor out({batch, out_w});
  const ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in));
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out_w));
  MatrixMap y(out.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_w));
  y.noalias() = x * w;
  y.rowwise() += ConstRowVectorMap(bias.data(), static_cast<Eigen::Index>(out_w));
  return out;
}

DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                    bool need_input_grad) {
  const std::size_t batch = input.dim(0);
  const std::size_t in = weights.dim(0), out_w = weights.dim(1);
  require(grad_out.dims() == Shape({batch, out_w}), "fully_connected backward: shape mismatch");
  DenseGrads g{Tensor(need_input_grad ? input.dims() : Shape{0}), Tensor(weights.dims()), Tensor({out_w})};
  const ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in));
  const ConstMatrixMap w(weights.data(), static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out_w));
  const ConstMatrixMap gy(grad_out.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_w));
  MatrixMap(g.weights.data(), static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out_w)).noalias() =
      x.transpose() * gy;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < out_w; ++h) g.bias[h] += grad_out[b * out_w + h];
  if (need_input_grad)
    MatrixMap(g.input.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in)).noalias() =
        gy * w.transpose();
  return g;
}

// ---- loss -------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, "softmax: logits must be B x K");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.dims());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (p[b * k + j] = std::exp(z[j] - zmax));
    for (std::size_t j = 0; j < k; ++j) p[b * k + j] /= sum;
  }
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), "softmax_cross_entropy: label count mismatch");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  LossResult r{0.0, softmax(logits)};
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    const double* z = logits.data() + b * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    r.loss += std::log(sum) + zmax - z[y];
    r.grad_logits[b * k + static_cast<std::size_t>(y)] -= 1.0;
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  r.loss *= inv_b;
  for (double& g : r.grad_logits.values()) g *= inv_b;
  return r;
}

// ---- optimizer --------------------------------------------------------------

void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate) {
  if (params.size() != grads.size())
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                     " gradients");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

// ---- 2D image layers --------------------------------------------------------

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ConfigError("stride must be positive");
  if (in + 2 * pad < kernel)
    throw ConfigError("extent " + std::to_string(in) + " (pad " + std::to_string(pad) + ") smaller than kernel " +
                      std::to_string(kernel));
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

// im2col rows are output pixels (row-major), columns follow the weight layout
// KH x KW x Cin; taps falling in the zero padding stay 0.
void im2col(const double* x, std::size_t h, std::size_t w, std::size_t cin, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, RowMatrix& cols) {
  const std::size_t width = kh * kw * cin;
  cols.setZero(static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(width));
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * width;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = x + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          std::copy(src, src + cin, row + (ky * kw + kx) * cin);
        }
      }
    }
}

}  // namespace

Tensor image_conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
                            std::size_t pad) {
  require(input.rank() == 4, "image_conv2d: input must be B x H x W x C, got " + shape_string(input.dims()));
  require(weights.rank() == 4 && weights.dim(2) == input.dim(3),
          "image_conv2d: weights " + shape_string(weights.dims()) + " vs input " + shape_string(input.dims()));
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  require(bias.size() == cout, "image_conv2d: bias size mismatch");
  require_finite(input, "image_conv2d");
  const std::size_t ho = conv_output_extent(h, kh, stride, pad), wo = conv_output_extent(w, kw, stride, pad);
  const std::size_t width = kh * kw * cin;
  const ConstMatrixMap wm(weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));
  const ConstRowVectorMap b(bias.data(), static_cast<Eigen::Index>(cout));

  Tensor out({batch, ho, wo, cout});
  RowMatrix cols;
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(input.data() + s * h * w * cin, h, w, cin, kh, kw, stride, pad, ho, wo, cols);
    MatrixMap o(out.data() + s * ho * wo * cout, static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(cout));
    o.noalias() = cols * wm;
    o.rowwise() += b;
  }
  return out;
}

ImageConvGrads image_conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                                     std::size_t stride, std::size_t pad, bool need_input_grad) {
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  const std::size_t ho = conv_output_extent(h, kh, stride, pad), wo = conv_output_extent(w, kw, stride, pad);
  require(grad_out.dims() == Shape({batch, ho, wo, cout}), "image_conv2d backward: gradient shape mismatch");
  const std::size_t width = kh * kw * cin;

  ImageConvGrads g{Tensor(need_input_grad ? input.dims() : Shape{0}), Tensor(weights.dims()), Tensor({cout})};
  MatrixMap gw(g.weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));
  const ConstMatrixMap wm(weights.data(), static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(cout));

  RowMatrix cols, grad_cols;
  for (std::size_t s = 0; s < batch; ++s) {
    im2col(input.data() + s * h * w * cin, h, w, cin, kh, kw, stride, pad, ho, wo, cols);
    const ConstMatrixMap go(grad_out.data() + s * ho * wo * cout, static_cast<Eigen::Index>(ho * wo),
                            static_cast<Eigen::Index>(cout));
    gw.noalias() += cols.transpose() * go;
    for (std::size_t r = 0; r < ho * wo; ++r)
      for (std::size_t f = 0; f < cout; ++f) g.bias[f] += go(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
    if (!need_input_grad) continue;

    grad_cols.noalias() = go * wm.transpose();
    double* gx = g.input.data() + s * h * w * cin;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* row = grad_cols.data() + (oy * wo + ox) * width;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            double* dst = gx + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
            const double* src = row + (ky * kw + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      }
  }
  return g;
}

Tensor image_mean_pool2d_forward(const Tensor& input, std::size_t kernel, std::size_t stride) {
  require(input.rank() == 4, "image_mean_pool2d: input must be B x H x W x C");
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), ch = input.dim(3);
  const std::size_t ho = conv_output_extent(h, kernel, stride, 0), wo = conv_output_extent(w, kernel, stride, 0);
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  Tensor out({batch, ho, wo, ch});
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* dst = out.data() + ((s * ho + oy) * wo + ox) * ch;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const double* src = input.data() + ((s * h + oy * stride + ky) * w + ox * stride + kx) * ch;
            for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
          }
        for (std::size_t c = 0; c < ch; ++c) dst[c] *= inv;
      }
  return out;
}

Tensor image_mean_pool2d_backward(const Tensor& grad_out, const Shape& input_dims, std::size_t kernel,
                                  std::size_t stride) {
  require(input_dims.size() == 4, "image_mean_pool2d backward: input must be B x H x W x C");
  const std::size_t batch = input_dims[0], h = input_dims[1], w = input_dims[2], ch = input_dims[3];
  const std::size_t ho = conv_output_extent(h, kernel, stride, 0), wo = conv_output_extent(w, kernel, stride, 0);
  require(grad_out.dims() == Shape({batch, ho, wo, ch}), "image_mean_pool2d backward: gradient shape mismatch");
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  Tensor gin(input_dims);
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* src = grad_out.data() + ((s * ho + oy) * wo + ox) * ch;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            double* dst = gin.data() + ((s * h + oy * stride + ky) * w + ox * stride + kx) * ch;
            for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c] * inv;
          }
      }
  return gin;
}

}  // namespace gcnn::kernels
