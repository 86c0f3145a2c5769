#include "spaconet/recognition.hpp"

#include <cmath>

namespace spaconet {

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::argument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

ClassifierHead::ClassifierHead(std::size_t channels, std::size_t classes, double dropout_rate, Rng& rng)
    : fc(channels, classes, rng) {
  set_dropout_rate(dropout_rate);
}

void ClassifierHead::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::config, "dropout rate must lie in [0, 1)");
  dropout_rate_ = rate;
}

Tensor ClassifierHead::forward(const Tensor& feature, ops::Mode mode, Rng& rng) {
  const Tensor dropped = ops::dropout(feature, dropout_rate_, mode, rng, &mask_);
  return fc.forward(dropped.reshaped({1, feature.size()})).reshaped({fc.out_features()});
}

Tensor ClassifierHead::backward(const Tensor& dlogits) {
  Tensor d = fc.backward(dlogits.reshaped({1, dlogits.size()}));
  d = d.reshaped({d.size()});
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask_[i];
  return d;
}

void ClassifierHead::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  fc.parameters(out, prefix + "fc.");
}

Classification classify(const Tensor& feature, ClassifierHead& head) {
  Rng unused(0);
  Classification c;
  c.logits = head.forward(feature, ops::Mode::eval, unused);
  c.predicted = argmax(c.logits.values());
  return c;
}

LossValue cross_entropy(const Tensor& logits, SceneLabel y) {
  if (y >= logits.size()) {
    fail(ErrorKind::argument, "cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(logits.size()) + ")");
  }
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += std::exp(logits[i] - mx);
  const double log_z = mx + std::log(total);

  LossValue out;
  out.loss = log_z - logits[y];
  out.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - log_z);
  out.grad[y] -= 1.0;
  return out;
}

double top1_accuracy(std::span<const SceneLabel> predictions, std::span<const SceneLabel> labels) {
  if (predictions.empty()) fail(ErrorKind::argument, "top1_accuracy: empty prediction list");
  if (predictions.size() != labels.size()) {
    fail(ErrorKind::argument, "top1_accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                                  std::to_string(labels.size()) + " labels");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace spaconet
