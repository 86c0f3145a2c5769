#pragma once

#include <cstddef>
#include <vector>

#include "spaconet/feature_extractors.hpp"
#include "spaconet/labels.hpp"
#include "spaconet/semantic_filtering.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

/// l x c stack of per-object node features in class-id order. Objects that
/// occupy no cell have an exactly-zero row and `presence[o] == false`.
struct SemanticSequence {
  Tensor data;
  std::vector<bool> presence;
  std::vector<std::size_t> counts;

  std::size_t objects() const { return data.dim(0); }
  std::size_t channels() const { return data.dim(1); }
};

/// Mean of the feature vectors under the mask; the zero vector when the mask is empty.
Tensor masked_average(const FeatureGrid& features, const BinaryMask& mask);

/// Row o is the masked average of `features` over cells labelled o.
SemanticSequence aggregate(const FeatureGrid& features, const LabelMap& labels, std::size_t objects);

/// Gradient of aggregate() w.r.t. the feature grid (the operation is linear in it).
Tensor aggregate_backward(const Tensor& dsequence, const LabelMap& labels, const std::vector<std::size_t>& counts,
                          const Shape& feature_shape);

struct AggregatedPair {
  SemanticSequence rgb;
  SemanticSequence spa;
  LabelMap labels;  // the single label map both sequences were pooled with
};

/// Filter scores with a k x k ACF, take the argmax label map, shrink it to the
/// feature grid by nearest-neighbour resize, and pool both feature grids with it.
AggregatedPair aggregate_pair(const FeatureGrid& image_features, const FeatureGrid& spatial_features,
                              const ScoreTensor& scores, std::size_t k = 2);

/// The label-map half of aggregate_pair, for callers that pool features later.
LabelMap feature_label_map(const ScoreTensor& scores, std::size_t k, std::size_t height, std::size_t width);

}  // namespace spaconet
