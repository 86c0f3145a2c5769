#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spaconet/error.hpp"

namespace spaconet {

/// Integer grid of per-cell semantic class ids in [0, num_classes).
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<std::uint16_t> cells;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::size_t classes, std::uint16_t fill = 0)
      : height(h), width(w), num_classes(classes), cells(h * w, fill) {}

  std::uint16_t& at(std::size_t i, std::size_t j) { return cells[i * width + j]; }
  std::uint16_t at(std::size_t i, std::size_t j) const { return cells[i * width + j]; }

  /// Throws ErrorKind::data if any cell is outside [0, num_classes).
  void validate() const;

  bool operator==(const LabelMap&) const = default;
};

}  // namespace spaconet
