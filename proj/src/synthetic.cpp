#include "spaconet/synthetic.hpp"

#include <algorithm>
#include <numeric>

namespace spaconet {
namespace {

constexpr double kHighProbability = 0.5;

std::vector<std::size_t> tile_rows_region(const SceneSpec& spec, std::size_t first_row, std::size_t last_row) {
  std::vector<std::size_t> region;
  for (std::size_t r = first_row; r <= last_row; ++r)
    for (std::size_t c = 0; c < spec.tile_cols(); ++c) region.push_back(r * spec.tile_cols() + c);
  return region;
}

float to_storage(double v) { return static_cast<float>(v); }

}  // namespace

void SceneSpec::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::config, "scene spec: " + what); };
  if (classes < 2) bad("classes must be at least 2");
  if (objects < 2) bad("objects must be at least 2 (background plus one object)");
  if (tile == 0 || height % tile != 0 || width % tile != 0) bad("height and width must be multiples of tile");
  if (divisor == 0 || height % divisor != 0 || width % divisor != 0) {
    bad("height and width must be divisible by " + std::to_string(divisor) +
        " (ACF kernel times backbone downsample factor)");
  }
  if (!(noise >= 0.0 && noise < 1.0)) bad("noise must lie in [0, 1)");
  if (!(spread >= 0.0)) bad("spread must be non-negative");
  if (rules.size() != classes) bad("rules must have one entry per class");
  const std::size_t tiles = tile_rows() * tile_cols();
  for (std::size_t t = 0; t < classes; ++t) {
    if (rules[t].size() != objects) bad("class " + std::to_string(t) + " must have one rule per object");
    for (std::size_t o = 1; o < objects; ++o) {
      const ObjectRule& r = rules[t][o];
      if (!(r.probability >= 0.0 && r.probability <= 1.0)) bad("occurrence probabilities must lie in [0, 1]");
      if (r.probability > 0.0) {
        if (r.region.empty()) bad("object " + std::to_string(o) + " of class " + std::to_string(t) + " has no region");
        if (r.min_tiles == 0 || r.min_tiles > r.max_tiles) bad("tile counts must satisfy 1 <= min <= max");
      }
      for (auto idx : r.region)
        if (idx >= tiles) bad("region tile index " + std::to_string(idx) + " outside the tile grid");
    }
  }
  bool confounded = false;
  for (std::size_t a = 0; a < classes && !confounded; ++a)
    for (std::size_t b = a + 1; b < classes && !confounded; ++b)
      for (std::size_t o = 1; o < objects && !confounded; ++o)
        confounded = rules[a][o].probability >= kHighProbability && rules[b][o].probability >= kHighProbability;
  if (!confounded) bad("no two classes share a high-probability object; the corpus must contain a confound");
}

SceneSpec confounded_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.rules.assign(spec.classes, std::vector<ObjectRule>(spec.objects));

  const Color background{0.5, 0.5, 0.5};
  const Color red{0.9, 0.2, 0.2}, blue{0.2, 0.2, 0.9};
  const Color yellow{0.9, 0.9, 0.2}, cyan{0.2, 0.9, 0.9};
  const Color green{0.2, 0.8, 0.2};

  const auto lower = tile_rows_region(spec, 2, 3);
  const auto anywhere = tile_rows_region(spec, 0, spec.tile_rows() - 1);
  const auto top = tile_rows_region(spec, 0, 0);

  for (std::size_t t = 0; t < spec.classes; ++t) {
    spec.rules[t][0].color = background;
    spec.rules[t][7] = {0.5, 1, 1, top, green};
  }
  // Confounded pair: same objects, same layout, colours swapped.
  spec.rules[0][1] = {1.0, 2, 3, lower, red};
  spec.rules[0][2] = {1.0, 2, 3, lower, blue};
  spec.rules[1][1] = {1.0, 2, 3, lower, blue};
  spec.rules[1][2] = {1.0, 2, 3, lower, red};
  // Same appearance, different object categories.
  spec.rules[2][3] = {1.0, 2, 3, anywhere, yellow};
  spec.rules[2][4] = {1.0, 2, 3, anywhere, cyan};
  spec.rules[3][5] = {1.0, 2, 3, anywhere, yellow};
  spec.rules[3][6] = {1.0, 2, 3, anywhere, cyan};
  return spec;
}

SampleRecord render_sample(const SceneSpec& spec, SceneLabel label, Rng& rng) {
  if (label >= spec.classes) {
    fail(ErrorKind::argument, "render_sample: class " + std::to_string(label) + " outside [0, " +
                                  std::to_string(spec.classes) + ")");
  }
  const std::size_t h = spec.height, w = spec.width, l = spec.objects;
  const std::size_t tcols = spec.tile_cols(), tiles = spec.tile_rows() * tcols;
  const auto& rules = spec.rules[label];

  // Tile assignment; objects are placed in id order.
  std::vector<std::uint16_t> tile_label(tiles, 0);
  std::vector<bool> taken(tiles, false);
  for (std::size_t o = 1; o < l; ++o) {
    const ObjectRule& r = rules[o];
    if (r.probability <= 0.0 || !rng.bernoulli(r.probability)) continue;
    const std::size_t want = r.min_tiles + rng.index(r.max_tiles - r.min_tiles + 1);
    std::vector<std::size_t> free;
    for (auto idx : r.region)
      if (!taken[idx]) free.push_back(idx);
    for (std::size_t n = 0; n < want && !free.empty(); ++n) {
      const std::size_t pick = rng.index(free.size());
      const std::size_t idx = free[pick];
      free.erase(free.begin() + static_cast<std::ptrdiff_t>(pick));
      taken[idx] = true;
      tile_label[idx] = static_cast<std::uint16_t>(o);
    }
  }

  SampleRecord rec;
  rec.label = label;
  rec.truth = LabelMap(h, w, l);
  rec.image = Tensor({h, w, 3});
  Tensor scores({h, w, l});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::uint16_t o = tile_label[(i / spec.tile) * tcols + j / spec.tile];
      rec.truth.at(i, j) = o;
      const Color& color = rules[o].color;
      for (std::size_t ch = 0; ch < 3; ++ch)
        rec.image.at(i, j, ch) = to_storage(color[ch] + rng.normal(0.0, spec.spread));

      double* s = scores.data() + (i * w + j) * l;
      if (spec.noise > 0.0 && rng.bernoulli(spec.noise)) {
        // Confusion: a random wrong class wins with moderate confidence.
        std::size_t wrong = rng.index(l - 1);
        if (wrong >= o) ++wrong;
        s[wrong] = to_storage(rng.uniform(0.4, 0.8));
        s[o] = to_storage(rng.uniform(0.1, 0.4));
      } else {
        s[o] = to_storage(1.0 - spec.noise * rng.uniform(0.0, 0.5));
      }
    }
  }
  rec.scores = ScoreTensor(std::move(scores));
  return rec;
}

GeneratedDataset generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_test) {
  spec.validate();
  const Rng root(spec.seed);
  GeneratedDataset out;
  out.spec = spec;
  out.train.reserve(n_train);
  out.test.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) {
    Rng rng = root.split(i);
    out.train.push_back(render_sample(spec, i % spec.classes, rng));
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    Rng rng = root.split((std::uint64_t{1} << 32) + i);
    out.test.push_back(render_sample(spec, i % spec.classes, rng));
  }
  return out;
}

Dataset to_dataset(const std::vector<SampleRecord>& records, const SceneSpec& spec) {
  Dataset d;
  d.classes = spec.classes;
  d.objects = spec.objects;
  for (const auto& r : records) {
    d.samples.push_back({r.image, r.scores, std::nullopt, std::nullopt});
    d.labels.push_back(r.label);
  }
  return d;
}

}  // namespace spaconet
