#pragma once

// Dense kernels used by every layer. Forward functions are pure; backward
// functions take the forward inputs (or a cache) plus the upstream gradient,
// accumulate into parameter-gradient outputs and return the input gradient.
// Summation order is fixed and sequential, so results are reproducible bit
// for bit on one machine.

#include <cstddef>
#include <vector>

#include "spaconet/labels.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet::ops {

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// Accumulates dL/da into *da and dL/db into *db (either may be null).
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db);
Tensor transpose(const Tensor& a);

/// x[n x k] * w[k x m] + bias[m]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& dbias);

// ---- normalization ---------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct LayerNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5,
                  LayerNormCache* cache = nullptr);
Tensor layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dgamma,
                           Tensor& dbeta);

// ---- pooling ---------------------------------------------------------------

/// Per-channel max over k x k windows with stride s on an H x W x C grid.
/// `argmax`, when given, receives the flat input index chosen for each output.
Tensor max_pool2d(const Tensor& x, std::size_t k, std::size_t s, std::vector<std::size_t>* argmax = nullptr);
Tensor max_pool2d_backward(const Tensor& dy, const Shape& input_shape, const std::vector<std::size_t>& argmax);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, const Shape& input_shape);
Tensor global_max_pool(const Tensor& x, std::vector<std::size_t>* argmax = nullptr);

// ---- convolution -----------------------------------------------------------

/// Cross-correlation of x[H x W x Cin] with w[k x k x Cin x Cout], zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad);
Tensor conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, std::size_t stride, std::size_t pad,
                       Tensor& dw, Tensor& dbias);

// ---- resampling ------------------------------------------------------------

// Both resizes map destination centers to source coordinates with
// src = (dst + 0.5) * in / out - 0.5, clamped to the border.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor bilinear_resize_backward(const Tensor& dy, const Shape& input_shape);
LabelMap nearest_resize_labels(const LabelMap& labels, std::size_t out_h, std::size_t out_w);

// ---- elementwise -----------------------------------------------------------

enum class Mode { train, eval };

/// Inverted dropout. `mask` receives the per-element multiplier (0 or 1/(1-rate)).
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask = nullptr);

enum class Activation { relu, gelu, sigmoid };

double gelu(double x);
double sigmoid(double x);
Tensor activate(const Tensor& x, Activation kind);
/// Gradient through the activation given its forward input.
Tensor activate_backward(const Tensor& x, const Tensor& dy, Activation kind);

Tensor elementwise_max(const Tensor& a, const Tensor& b);
/// Routes dy to the strictly larger input, splitting exact ties evenly.
void elementwise_max_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor& da, Tensor& db);

}  // namespace spaconet::ops
