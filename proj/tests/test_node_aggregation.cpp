#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "spaconet/node_aggregation.hpp"
#include "spaconet/ops.hpp"
#include "test_util.hpp"

using namespace spaconet;
using testutil::random_tensor;

namespace {

FeatureGrid example_grid() { return {Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), 1}; }

BinaryMask mask_of(std::size_t h, std::size_t w, std::vector<std::uint8_t> cells) {
  return {h, w, 0, std::move(cells)};
}

LabelMap random_labels(std::size_t h, std::size_t w, std::size_t l, Rng& rng) {
  LabelMap m(h, w, l);
  for (auto& c : m.cells) c = static_cast<std::uint16_t>(rng.index(l));
  return m;
}

}  // namespace

TEST(MaskedAverage, WorkedExample) {
  const Tensor v = masked_average(example_grid(), mask_of(2, 2, {0, 1, 1, 0}));
  EXPECT_EQ(v, Tensor::vector({4, 5}));
}

TEST(MaskedAverage, FullMaskIsGlobalPool) {
  Rng rng(1);
  const FeatureGrid f{random_tensor({3, 4, 5}, rng), 1};
  const Tensor v = masked_average(f, mask_of(3, 4, std::vector<std::uint8_t>(12, 1)));
  EXPECT_LE(max_abs_diff(v, ops::global_avg_pool(f.data)), 1e-15);
}

TEST(MaskedAverage, EmptyMaskIsZero) {
  EXPECT_EQ(masked_average(example_grid(), mask_of(2, 2, {0, 0, 0, 0})), Tensor({2}));
}

TEST(MaskedAverage, ShapeMismatchIsDimensionError) {
  try {
    masked_average(example_grid(), mask_of(1, 4, {1, 1, 1, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Aggregate, SingleLabelGivesGlobalMeanRow) {
  Rng rng(2);
  const FeatureGrid f{random_tensor({3, 3, 4}, rng), 1};
  const SemanticSequence seq = aggregate(f, LabelMap(3, 3, 5, 2), 5);
  const Tensor g = ops::global_avg_pool(f.data);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t c = 0; c < 4; ++c) {
      if (o == 2) EXPECT_NEAR(seq.data.at(o, c), g[c], 1e-15);
      else EXPECT_EQ(seq.data.at(o, c), 0.0);
    }
  EXPECT_EQ(seq.presence, (std::vector<bool>{false, false, true, false, false}));
}

TEST(Aggregate, CheckerboardMatchesOracle) {
  Rng rng(3);
  const FeatureGrid f{random_tensor({4, 4, 3}, rng), 1};
  LabelMap m(4, 4, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) m.at(i, j) = static_cast<std::uint16_t>((i + j) % 2);
  EXPECT_EQ(aggregate(f, m, 2).data, oracle::aggregate(f.data, m, 2));
}

TEST(Aggregate, PermutingCellsTogetherPreservesMeans) {
  Rng rng(4);
  const FeatureGrid f{random_tensor({3, 4, 2}, rng), 1};
  const LabelMap m = random_labels(3, 4, 3, rng);
  // Reverse the cell order of both the grid and the labels.
  FeatureGrid g{Tensor({3, 4, 2}), 1};
  LabelMap r(3, 4, 3);
  for (std::size_t cell = 0; cell < 12; ++cell) {
    r.cells[11 - cell] = m.cells[cell];
    for (std::size_t c = 0; c < 2; ++c) g.data[(11 - cell) * 2 + c] = f.data[cell * 2 + c];
  }
  EXPECT_LE(max_abs_diff(aggregate(f, m, 3).data, aggregate(g, r, 3).data), 1e-12);
}

TEST(Aggregate, LabelOutsideRangeIsDataError) {
  try {
    aggregate(example_grid(), LabelMap(2, 2, 9, 7), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Aggregate, PartitionIdentityAndAbsentRows) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng.index(6), w = 1 + rng.index(6), c = 1 + rng.index(5), l = 1 + rng.index(8);
    const FeatureGrid f{random_tensor({h, w, c}, rng, -10, 10), 1};
    const LabelMap m = random_labels(h, w, l, rng);
    const SemanticSequence seq = aggregate(f, m, l);
    ASSERT_EQ(seq.data, oracle::aggregate(f.data, m, l));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double weighted = 0.0, total = 0.0;
      for (std::size_t o = 0; o < l; ++o) weighted += static_cast<double>(seq.counts[o]) * seq.data.at(o, ch);
      for (std::size_t cell = 0; cell < h * w; ++cell) total += f.data[cell * c + ch];
      EXPECT_LE(std::abs(weighted - total), 1e-9);
    }
    for (std::size_t o = 0; o < l; ++o) {
      EXPECT_EQ(seq.presence[o], seq.counts[o] > 0);
      if (!seq.presence[o])
        for (std::size_t ch = 0; ch < c; ++ch) EXPECT_EQ(seq.data.at(o, ch), 0.0);
    }
  }
}

TEST(AggregatePair, HandComputedTwoObjectCase) {
  // 4x4 scores with l = 2; after 2x2 ACF the label map is [[1,0],[0,1]].
  Tensor s({4, 4, 2});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const bool diag = (i / 2) == (j / 2);
      s.at(i, j, diag ? 1 : 0) = 0.6;
      s.at(i, j, diag ? 0 : 1) = 0.4;
    }
  const FeatureGrid fi{Tensor({2, 2, 1}, {1, 2, 3, 4}), 16};
  const FeatureGrid fs{Tensor({2, 2, 1}, {10, 20, 30, 40}), 16};
  const AggregatedPair pair = aggregate_pair(fi, fs, ScoreTensor(s), 2);
  EXPECT_EQ(pair.labels.cells, (std::vector<std::uint16_t>{1, 0, 0, 1}));
  EXPECT_EQ(pair.rgb.data, Tensor({2, 1}, {2.5, 2.5}));
  EXPECT_EQ(pair.spa.data, Tensor({2, 1}, {25, 25}));

  // Same thing through the composed oracles.
  const LabelMap l = oracle::nearest(oracle::argmax_labels(oracle::acf(s, 2)), 2, 2);
  EXPECT_EQ(pair.labels, l);
  EXPECT_EQ(pair.rgb.data, oracle::aggregate(fi.data, l, 2));
  EXPECT_EQ(pair.spa.data, oracle::aggregate(fs.data, l, 2));
}

TEST(AggregatePair, ConstantImageFeaturesFillPresentRows) {
  Rng rng(6);
  const ScoreTensor s(random_tensor({16, 16, 5}, rng, 0, 1));
  const FeatureGrid fi{Tensor({4, 4, 3}, 1.5), 4}, fs{random_tensor({4, 4, 3}, rng), 4};
  const AggregatedPair pair = aggregate_pair(fi, fs, s, 2);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(pair.rgb.data.at(o, c), pair.rgb.presence[o] ? 1.5 : 0.0);
  // Both sequences come from one label map.
  EXPECT_EQ(pair.rgb.counts, pair.spa.counts);
  EXPECT_EQ(pair.rgb.presence, pair.spa.presence);
}

TEST(AggregatePair, PaperGeometryGivesFourteenByFourteen) {
  const LabelMap l = feature_label_map(ScoreTensor(Tensor({224, 224, 3}, 0.1)), 2, 14, 14);
  EXPECT_EQ(l.height, 14u);
  EXPECT_EQ(l.width, 14u);
}

TEST(AggregatePair, MismatchedGridsRejected) {
  Rng rng(7);
  const ScoreTensor s(random_tensor({8, 8, 2}, rng));
  EXPECT_THROW(aggregate_pair({Tensor({2, 2, 3}), 4}, {Tensor({1, 1, 3}), 8}, s, 2), Error);
}

TEST(AggregateBackward, IsTheAdjoint) {
  Rng rng(8);
  const LabelMap m = random_labels(3, 3, 4, rng);
  const FeatureGrid f{random_tensor({3, 3, 2}, rng), 1};
  const SemanticSequence seq = aggregate(f, m, 4);
  const Tensor dy = random_tensor({4, 2}, rng);
  const Tensor dx = aggregate_backward(dy, m, seq.counts, f.data.shape());
  // <aggregate(x), dy> == <x, aggregate_backward(dy)> for a linear map.
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) lhs += seq.data[i] * dy[i];
  for (std::size_t i = 0; i < dx.size(); ++i) rhs += f.data[i] * dx[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}
