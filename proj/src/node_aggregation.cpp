#include "spaconet/node_aggregation.hpp"

#include "spaconet/ops.hpp"

namespace spaconet {

Tensor masked_average(const FeatureGrid& features, const BinaryMask& mask) {
  if (mask.height != features.height() || mask.width != features.width()) {
    fail(ErrorKind::dimension, "masked_average: mask " + std::to_string(mask.height) + "x" +
                                   std::to_string(mask.width) + " does not match features " +
                                   shape_string(features.data.shape()));
  }
  const std::size_t c = features.channels();
  Tensor sum({c});
  std::size_t count = 0;
  for (std::size_t cell = 0; cell < mask.cells.size(); ++cell) {
    if (!mask.cells[cell]) continue;
    ++count;
    for (std::size_t ch = 0; ch < c; ++ch) sum[ch] += features.data[cell * c + ch];
  }
  if (count > 0)
    for (std::size_t ch = 0; ch < c; ++ch) sum[ch] /= static_cast<double>(count);
  return sum;
}

SemanticSequence aggregate(const FeatureGrid& features, const LabelMap& labels, std::size_t objects) {
  if (labels.height != features.height() || labels.width != features.width()) {
    fail(ErrorKind::dimension, "aggregate: label map " + std::to_string(labels.height) + "x" +
                                   std::to_string(labels.width) + " does not match features " +
                                   shape_string(features.data.shape()));
  }
  const std::size_t c = features.channels();
  SemanticSequence seq{Tensor({objects, c}), std::vector<bool>(objects, false), std::vector<std::size_t>(objects, 0)};
  for (std::size_t cell = 0; cell < labels.cells.size(); ++cell) {
    const std::size_t o = labels.cells[cell];
    if (o >= objects) {
      fail(ErrorKind::data, "aggregate: label " + std::to_string(o) + " at cell " + std::to_string(cell) +
                                " is not below l = " + std::to_string(objects));
    }
    ++seq.counts[o];
    double* row = seq.data.data() + o * c;
    const double* f = features.data.data() + cell * c;
    for (std::size_t ch = 0; ch < c; ++ch) row[ch] += f[ch];
  }
  for (std::size_t o = 0; o < objects; ++o) {
    if (seq.counts[o] == 0) continue;
    seq.presence[o] = true;
    for (std::size_t ch = 0; ch < c; ++ch) seq.data.at(o, ch) /= static_cast<double>(seq.counts[o]);
  }
  return seq;
}

Tensor aggregate_backward(const Tensor& dsequence, const LabelMap& labels, const std::vector<std::size_t>& counts,
                          const Shape& feature_shape) {
  const std::size_t c = feature_shape[2];
  Tensor df(feature_shape);
  for (std::size_t cell = 0; cell < labels.cells.size(); ++cell) {
    const std::size_t o = labels.cells[cell];
    const double inv = 1.0 / static_cast<double>(counts[o]);
    for (std::size_t ch = 0; ch < c; ++ch) df[cell * c + ch] = dsequence.at(o, ch) * inv;
  }
  return df;
}

LabelMap feature_label_map(const ScoreTensor& scores, std::size_t k, std::size_t height, std::size_t width) {
  return ops::nearest_resize_labels(argmax_labels(acf(scores, k)), height, width);
}

AggregatedPair aggregate_pair(const FeatureGrid& image_features, const FeatureGrid& spatial_features,
                              const ScoreTensor& scores, std::size_t k) {
  if (image_features.data.shape() != spatial_features.data.shape()) {
    fail(ErrorKind::dimension, "aggregate_pair: image features " + shape_string(image_features.data.shape()) +
                                   " and aligned spatial features " + shape_string(spatial_features.data.shape()) +
                                   " differ");
  }
  AggregatedPair out;
  out.labels = feature_label_map(scores, k, image_features.height(), image_features.width());
  out.rgb = aggregate(image_features, out.labels, scores.classes());
  out.spa = aggregate(spatial_features, out.labels, scores.classes());
  return out;
}

}  // namespace spaconet
