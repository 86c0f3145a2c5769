#include "spaconet/layers.hpp"

#include <cmath>

namespace spaconet {

Tensor kaiming_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

void collect(std::vector<NamedParameter>& out, const std::string& prefix, const std::string& name, Parameter& p) {
  out.push_back({prefix + name, &p});
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(kaiming_normal({in, out}, in, rng)), bias(Tensor({out})), has_bias_(with_bias) {}

Tensor Linear::forward(const Tensor& x) {
  input_ = x;
  return ops::linear(x, weight.value, bias.value);
}

Tensor Linear::backward(const Tensor& dy) {
  Tensor dx = ops::linear_backward(input_, weight.value, dy, weight.grad, bias.grad);
  if (!has_bias_) bias.zero_grad();
  return dx;
}

void Linear::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  collect(out, prefix, "weight", weight);
  if (has_bias_) collect(out, prefix, "bias", bias);
}

Conv2d::Conv2d(std::size_t kernel, std::size_t in, std::size_t out, std::size_t stride, std::size_t pad, Rng& rng)
    : weight(kaiming_normal({kernel, kernel, in, out}, kernel * kernel * in, rng)),
      bias(Tensor({out})),
      stride_(stride),
      pad_(pad) {}

Tensor Conv2d::forward(const Tensor& x) {
  input_ = x;
  return ops::conv2d(x, weight.value, bias.value, stride_, pad_);
}

Tensor Conv2d::backward(const Tensor& dy) {
  return ops::conv2d_backward(input_, weight.value, dy, stride_, pad_, weight.grad, bias.grad);
}

void Conv2d::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  collect(out, prefix, "weight", weight);
  collect(out, prefix, "bias", bias);
}

LayerNorm::LayerNorm(std::size_t channels, double eps)
    : gamma(Tensor({channels}, 1.0)), beta(Tensor({channels})), eps_(eps) {}

Tensor LayerNorm::forward(const Tensor& x) { return ops::layer_norm(x, gamma.value, beta.value, eps_, &cache_); }

Tensor LayerNorm::backward(const Tensor& dy) {
  return ops::layer_norm_backward(dy, gamma.value, cache_, gamma.grad, beta.grad);
}

void LayerNorm::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  collect(out, prefix, "gamma", gamma);
  collect(out, prefix, "beta", beta);
}

}  // namespace spaconet
