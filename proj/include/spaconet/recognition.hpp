#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spaconet/layers.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

using SceneLabel = std::size_t;

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

/// Dropout followed by an affine map c -> |T|.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(std::size_t channels, std::size_t classes, double dropout_rate, Rng& rng);

  /// `feature` has shape [c]; returns logits of shape [|T|].
  Tensor forward(const Tensor& feature, ops::Mode mode, Rng& rng);
  Tensor backward(const Tensor& dlogits);

  std::size_t classes() const { return fc.out_features(); }
  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Linear fc;

 private:
  double dropout_rate_ = 0.0;
  Tensor mask_;
};

struct Classification {
  Tensor logits;
  SceneLabel predicted = 0;
};

/// Eval-mode prediction: argmax of the logits, which equals argmax of their softmax.
Classification classify(const Tensor& feature, ClassifierHead& head);

struct LossValue {
  double loss = 0.0;
  Tensor grad;  // dloss/dlogits = softmax(logits) - onehot(y)
};

/// -log softmax(logits)[y], evaluated through a max-shifted log-sum-exp.
LossValue cross_entropy(const Tensor& logits, SceneLabel y);

/// Fraction of positions where predictions[i] == labels[i].
double top1_accuracy(std::span<const SceneLabel> predictions, std::span<const SceneLabel> labels);

}  // namespace spaconet
