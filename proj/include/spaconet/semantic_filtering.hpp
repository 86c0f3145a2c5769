#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spaconet/labels.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

/// H x W x l grid of per-pixel semantic confidences. Scores are raw network
/// outputs; they need not sum to one across classes.
class ScoreTensor {
 public:
  ScoreTensor() = default;
  explicit ScoreTensor(Tensor data);

  const Tensor& data() const noexcept { return data_; }
  std::size_t height() const { return data_.dim(0); }
  std::size_t width() const { return data_.dim(1); }
  std::size_t classes() const { return data_.dim(2); }

 private:
  Tensor data_;
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t object = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t at(std::size_t i, std::size_t j) const { return cells[i * width + j]; }
  std::size_t population() const;
};

/// Adaptive confidence filter: non-overlapping k x k per-channel max pooling.
/// Height and width must be divisible by k; callers crop beforehand.
ScoreTensor acf(const ScoreTensor& scores, std::size_t k = 2);

/// Per-cell argmax over classes, lowest class index wins ties.
LabelMap argmax_labels(const ScoreTensor& scores);

/// Indicator of cells whose label equals `object`.
BinaryMask binary_map(const LabelMap& labels, std::size_t object);

}  // namespace spaconet
