#include <gtest/gtest.h>

#include <algorithm>

#include "oracles/oracles.hpp"
#include "spaconet/semantic_filtering.hpp"
#include "test_util.hpp"

using namespace spaconet;
using testutil::random_tensor;

namespace {

ScoreTensor worked_example() {
  // Channel pairs at (0,0), (0,1), (1,0), (1,1).
  return ScoreTensor(Tensor({2, 2, 2}, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7}));
}

}  // namespace

TEST(Acf, WorkedExample) {
  const ScoreTensor out = acf(worked_example(), 2);
  EXPECT_EQ(out.data().shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(out.data()[0], 0.9);
  EXPECT_EQ(out.data()[1], 0.8);
  EXPECT_EQ(out.data(), oracle::acf(worked_example().data(), 2));
}

TEST(Acf, ArgmaxContinuesWorkedExample) {
  const LabelMap labels = argmax_labels(acf(worked_example(), 2));
  EXPECT_EQ(labels.at(0, 0), 0);
}

TEST(Acf, ConstantShrinks) {
  const ScoreTensor out = acf(ScoreTensor(Tensor({8, 4, 3}, 0.3)), 4);
  EXPECT_EQ(out.data(), Tensor({2, 1, 3}, 0.3));
}

TEST(Acf, KernelOneIsIdentity) {
  Rng rng(1);
  const ScoreTensor s(random_tensor({3, 5, 4}, rng));
  EXPECT_EQ(acf(s, 1).data(), s.data());
}

TEST(Acf, IndivisibleInputAsksForCrop) {
  try {
    acf(ScoreTensor(Tensor({5, 4, 2})), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
    EXPECT_NE(std::string(e.what()).find("crop"), std::string::npos);
  }
}

TEST(Acf, MatchesOracleAndCommutesWithTopOne) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = rng.bernoulli(0.5) ? 2 : 4;
    const std::size_t h = k * (1 + rng.index(16 / k)), w = k * (1 + rng.index(16 / k)), l = 1 + rng.index(8);
    const Tensor s = random_tensor({h, w, l}, rng, -5, 5);
    const ScoreTensor out = acf(ScoreTensor(s), k);
    ASSERT_EQ(out.data(), oracle::acf(s, k));
    // Max over channels of the output == max over the window of per-cell channel maxima.
    for (std::size_t i = 0; i < h / k; ++i)
      for (std::size_t j = 0; j < w / k; ++j) {
        double top_out = out.data().at(i, j, 0), top_in = s.at(i * k, j * k, 0);
        for (std::size_t o = 0; o < l; ++o) top_out = std::max(top_out, out.data().at(i, j, o));
        for (std::size_t di = 0; di < k; ++di)
          for (std::size_t dj = 0; dj < k; ++dj)
            for (std::size_t o = 0; o < l; ++o) top_in = std::max(top_in, s.at(i * k + di, j * k + dj, o));
        ASSERT_EQ(top_out, top_in);
      }
  }
}

TEST(ArgmaxLabels, TiesGoToLowestIndex) {
  const LabelMap m = argmax_labels(ScoreTensor(Tensor({2, 3, 4}, 0.5)));
  for (auto c : m.cells) EXPECT_EQ(c, 0);
}

TEST(ArgmaxLabels, OneHotRecovered) {
  Tensor s({2, 2, 3});
  const std::uint16_t truth[4] = {2, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i) s[i * 3 + truth[i]] = 1.0;
  const LabelMap m = argmax_labels(ScoreTensor(s));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(m.cells[i], truth[i]);
}

TEST(ArgmaxLabels, InvariantToPerCellShiftAndMatchesOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor s = random_tensor({4, 4, 5}, rng);
    const LabelMap before = argmax_labels(ScoreTensor(s));
    EXPECT_EQ(before, oracle::argmax_labels(s));
    for (std::size_t cell = 0; cell < 16; ++cell) {
      const double shift = static_cast<double>(rng.index(9)) - 4.0;  // exact in binary
      for (std::size_t o = 0; o < 5; ++o) s[cell * 5 + o] += shift;
    }
    EXPECT_EQ(argmax_labels(ScoreTensor(s)), before);
  }
}

TEST(BinaryMap, Indicator) {
  LabelMap m(2, 2, 2);
  m.cells = {0, 1, 1, 1};
  const BinaryMask mask = binary_map(m, 1);
  EXPECT_EQ(mask.cells, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(mask.population(), 3u);
}

TEST(BinaryMap, AbsentObjectGivesEmptyMask) {
  const BinaryMask mask = binary_map(LabelMap(3, 3, 4, 1), 2);
  EXPECT_EQ(mask.population(), 0u);
}

TEST(BinaryMap, OutOfRangeObjectIsArgumentError) {
  try {
    binary_map(LabelMap(2, 2, 3), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::argument);
  }
}

TEST(BinaryMap, MasksPartitionTheGrid) {
  Rng rng(4);
  LabelMap m(5, 6, 4);
  for (auto& c : m.cells) c = static_cast<std::uint16_t>(rng.index(4));
  std::vector<int> total(m.cells.size(), 0);
  for (std::size_t o = 0; o < 4; ++o) {
    const BinaryMask mask = binary_map(m, o);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += mask.cells[i];
  }
  for (int t : total) EXPECT_EQ(t, 1);
}

TEST(ScoreTensor, RejectsEmptyClassAxis) {
  EXPECT_THROW(ScoreTensor(Tensor({2, 2, 0})), Error);
  EXPECT_THROW(ScoreTensor(Tensor({2, 2})), Error);
}
