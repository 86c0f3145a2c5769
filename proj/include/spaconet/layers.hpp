#pragma once

// Stateful building blocks. Each layer owns its Parameters and caches what its
// backward pass needs from the most recent forward call, so a forward/backward
// pair must not be interleaved with another forward on the same layer.

#include <cstddef>
#include <string>
#include <vector>

#include "spaconet/ops.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

/// Kaiming-style fan-in initialization: N(0, 2 / fan_in).
Tensor kaiming_normal(Shape shape, std::size_t fan_in, Rng& rng);

void collect(std::vector<NamedParameter>& out, const std::string& prefix, const std::string& name, Parameter& p);

class Linear {
 public:
  Linear() = default;
  /// Without a bias the layer has a single parameter and ignores `bias`.
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }
  bool has_bias() const { return has_bias_; }

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Parameter weight;  // in x out
  Parameter bias;    // out, fixed at zero when has_bias() is false

 private:
  bool has_bias_ = true;
  Tensor input_;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t kernel, std::size_t in, std::size_t out, std::size_t stride, std::size_t pad, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  std::size_t stride() const { return stride_; }
  std::size_t out_channels() const { return weight.value.dim(3); }

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Parameter weight;  // k x k x in x out
  Parameter bias;

 private:
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
  Tensor input_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t channels, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Parameter gamma;
  Parameter beta;

 private:
  double eps_ = 1e-5;
  ops::LayerNormCache cache_;
};

}  // namespace spaconet
