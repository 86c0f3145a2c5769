#include "spaconet/semantic_filtering.hpp"

#include <numeric>

#include "spaconet/ops.hpp"

namespace spaconet {

ScoreTensor::ScoreTensor(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 3) fail(ErrorKind::dimension, "score tensor must be H x W x l, got " + shape_string(data_.shape()));
  if (data_.dim(2) == 0) fail(ErrorKind::dimension, "score tensor needs at least one class");
}

std::size_t BinaryMask::population() const { return std::accumulate(cells.begin(), cells.end(), std::size_t{0}); }

ScoreTensor acf(const ScoreTensor& scores, std::size_t k) {
  if (k == 0) fail(ErrorKind::argument, "acf: window size must be positive");
  if (scores.height() % k != 0 || scores.width() % k != 0) {
    fail(ErrorKind::dimension, "acf: score tensor " + shape_string(scores.data().shape()) +
                                   " is not divisible by window " + std::to_string(k) +
                                   "; crop height and width to a multiple of the window first");
  }
  if (k == 1) return scores;
  return ScoreTensor(ops::max_pool2d(scores.data(), k, k));
}

LabelMap argmax_labels(const ScoreTensor& scores) {
  const std::size_t h = scores.height(), w = scores.width(), l = scores.classes();
  LabelMap labels(h, w, l);
  const double* s = scores.data().data();
  for (std::size_t cell = 0; cell < h * w; ++cell) {
    const double* v = s + cell * l;
    std::size_t best = 0;
    for (std::size_t o = 1; o < l; ++o)
      if (v[o] > v[best]) best = o;
    labels.cells[cell] = static_cast<std::uint16_t>(best);
  }
  return labels;
}

BinaryMask binary_map(const LabelMap& labels, std::size_t object) {
  if (object >= labels.num_classes) {
    fail(ErrorKind::argument, "binary_map: object " + std::to_string(object) + " outside [0, " +
                                  std::to_string(labels.num_classes) + ")");
  }
  BinaryMask mask{labels.height, labels.width, object, std::vector<std::uint8_t>(labels.cells.size())};
  for (std::size_t i = 0; i < labels.cells.size(); ++i) mask.cells[i] = labels.cells[i] == object ? 1 : 0;
  return mask;
}

}  // namespace spaconet
