#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spaconet/labels.hpp"
#include "spaconet/recognition.hpp"
#include "spaconet/semantic_filtering.hpp"
#include "spaconet/tensor.hpp"
#include "spaconet/training.hpp"

namespace spaconet {

using Color = std::array<double, 3>;

/// Placement and appearance of one object category inside one scene class.
struct ObjectRule {
  double probability = 0.0;
  std::size_t min_tiles = 1;
  std::size_t max_tiles = 1;
  std::vector<std::size_t> region;  // permitted tile indices, row-major over the tile grid
  Color color{0.5, 0.5, 0.5};
};

/// Generator parameters. Scenes are laid out on a grid of square tiles; object 0
/// is the background and fills every tile no other object claims.
struct SceneSpec {
  std::size_t classes = 4;
  std::size_t objects = 8;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t tile = 16;
  std::size_t divisor = 32;    // H and W must be multiples (ACF kernel x backbone factor)
  double noise = 0.2;          // probability a pixel's scores favour a wrong class
  double spread = 0.1;         // per-pixel colour standard deviation
  std::uint64_t seed = 2024;
  std::vector<std::vector<ObjectRule>> rules;  // [class][object]

  std::size_t tile_rows() const { return height / tile; }
  std::size_t tile_cols() const { return width / tile; }

  /// Throws ErrorKind::config naming the violated invariant.
  void validate() const;
};

/// The default desk-scale corpus: 4 classes, 8 objects, 64 x 64.
///  - classes 0 and 1 contain the same two objects with identical occurrence
///    and layout statistics; only the objects' colours are swapped;
///  - classes 2 and 3 contain different object categories that look the same.
SceneSpec confounded_spec(std::uint64_t seed = 2024);

/// Pair of classes that share objects and layout and differ only in
/// object-conditioned appearance.
inline constexpr std::array<SceneLabel, 2> kConfoundedPair{0, 1};

struct SampleRecord {
  Tensor image;  // H x W x 3
  ScoreTensor scores;
  LabelMap truth;
  SceneLabel label = 0;
};

SampleRecord render_sample(const SceneSpec& spec, SceneLabel label, Rng& rng);

struct GeneratedDataset {
  SceneSpec spec;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

/// Sample i of the training split has class i mod |T| (test likewise), so class
/// counts differ by at most one. Every sample draws from its own stream split
/// off the spec seed.
GeneratedDataset generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_test);

Dataset to_dataset(const std::vector<SampleRecord>& records, const SceneSpec& spec);

}  // namespace spaconet
