#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "spaconet/feature_extractors.hpp"
#include "spaconet/ops.hpp"
#include "test_util.hpp"

using namespace spaconet;
using testutil::random_tensor;
using testutil::randomize;

namespace {

void zero(Parameter& p) { p.value.fill(0.0); }

// relu(p w1 + b1) w2 + b2 for a single pooled vector.
std::vector<long double> bottleneck(const std::vector<long double>& p, const ChannelAttention& a) {
  const std::size_t c = a.w1.value.dim(0), hdim = a.w1.value.dim(1);
  std::vector<long double> hidden(hdim), out(c);
  for (std::size_t j = 0; j < hdim; ++j) {
    long double s = a.b1.value[j];
    for (std::size_t i = 0; i < c; ++i) s += p[i] * a.w1.value.at(i, j);
    hidden[j] = std::max(s, 0.0L);
  }
  for (std::size_t j = 0; j < c; ++j) {
    long double s = a.b2.value[j];
    for (std::size_t i = 0; i < hdim; ++i) s += hidden[i] * a.w2.value.at(i, j);
    out[j] = s;
  }
  return out;
}

}  // namespace

TEST(ChannelAttention, ZeroMlpHalvesTheInput) {
  Rng rng(1);
  ChannelAttention a(8, 4, rng);
  zero(a.w1), zero(a.b1), zero(a.w2), zero(a.b2);
  const Tensor f = random_tensor({3, 3, 8}, rng);
  Tensor half = f;
  for (auto& v : half.values()) v *= 0.5;
  EXPECT_EQ(cham(f, a), half);
  for (double s : a.last_scale().values()) EXPECT_EQ(s, 0.5);
}

TEST(ChannelAttention, ScaleInUnitIntervalAndMatchesFormula) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    ChannelAttention a(4, 2, rng);
    randomize(a.b1, rng), randomize(a.b2, rng);
    const Tensor f = random_tensor({2, 3, 4}, rng, -2, 2);
    const Tensor out = cham(f, a);
    std::vector<long double> avg(4, 0.0L), mx(4, -1e300L);
    for (std::size_t cell = 0; cell < 6; ++cell)
      for (std::size_t c = 0; c < 4; ++c) {
        avg[c] += f[cell * 4 + c] / 6.0L;
        mx[c] = std::max<long double>(mx[c], f[cell * 4 + c]);
      }
    const auto za = bottleneck(avg, a), zm = bottleneck(mx, a);
    for (std::size_t c = 0; c < 4; ++c) {
      const long double scale = 1.0L / (1.0L + std::exp(-(za[c] + zm[c])));
      EXPECT_GT(a.last_scale()[c], 0.0);
      EXPECT_LT(a.last_scale()[c], 1.0);
      EXPECT_NEAR(a.last_scale()[c], static_cast<double>(scale), 1e-12);
      for (std::size_t cell = 0; cell < 6; ++cell)
        EXPECT_NEAR(out[cell * 4 + c], static_cast<double>(f[cell * 4 + c] * scale), 1e-12);
    }
  }
}

TEST(ChannelAttention, ReductionMustDivide) {
  Rng rng(3);
  EXPECT_THROW(ChannelAttention(6, 4, rng), Error);
}

TEST(Backbone, DeskScaleOutputShapes) {
  Rng rng(4);
  Backbone ifem(default_ifem_config(64, 16), rng);
  Backbone ssrm(default_ssrm_config(8, 64, 16), rng);
  const FeatureGrid fi = ifem_forward(random_tensor({64, 64, 3}, rng), ifem);
  EXPECT_EQ(fi.data.shape(), (Shape{4, 4, 64}));
  EXPECT_EQ(fi.downsample, 16u);
  const FeatureGrid fs = ssrm_forward(ScoreTensor(random_tensor({32, 32, 8}, rng, 0, 1)), ssrm);
  EXPECT_EQ(fs.data.shape(), (Shape{2, 2, 64}));
  const FeatureGrid aligned = align_spatial(fs, fi.height(), fi.width());
  EXPECT_EQ(aligned.data.shape(), fi.data.shape());
}

TEST(Backbone, ZeroInputGivesZeroFeatures) {
  Rng rng(5);
  Backbone ifem(default_ifem_config(16, 8), rng);
  Backbone ssrm(default_ssrm_config(4, 16, 8), rng);
  EXPECT_EQ(ifem_forward(Tensor({16, 16, 3}), ifem).data, Tensor({2, 2, 16}));
  EXPECT_EQ(ssrm_forward(ScoreTensor(Tensor({16, 16, 4})), ssrm).data, Tensor({2, 2, 16}));
}

TEST(Backbone, WrongInputChannelsRejected) {
  Rng rng(6);
  Backbone ifem(default_ifem_config(16, 8), rng);
  EXPECT_THROW(ifem_forward(Tensor({16, 16, 4}), ifem), Error);
}

TEST(Backbone, InvalidConfigRejected) {
  BackboneConfig c = default_ifem_config(16, 8);
  c.strides.pop_back();
  EXPECT_THROW(c.validate(), Error);
}

TEST(AlignSpatial, EqualShapeIsIdentity) {
  Rng rng(7);
  const FeatureGrid f{random_tensor({3, 5, 4}, rng), 16};
  const FeatureGrid g = align_spatial(f, 3, 5);
  EXPECT_EQ(g.data, f.data);
}

TEST(AlignSpatial, SingleCellReplicates) {
  const FeatureGrid f{Tensor({1, 1, 2}, {0.25, -3}), 32};
  const FeatureGrid g = align_spatial(f, 2, 2);
  for (std::size_t cell = 0; cell < 4; ++cell) {
    EXPECT_EQ(g.data[cell * 2], 0.25);
    EXPECT_EQ(g.data[cell * 2 + 1], -3.0);
  }
  EXPECT_EQ(g.downsample, 16u);
}

TEST(AlignSpatial, MatchesBilinearOracle) {
  Rng rng(8);
  const FeatureGrid f{random_tensor({2, 3, 5}, rng), 32};
  EXPECT_LE(max_abs_diff(align_spatial(f, 4, 6).data, oracle::bilinear(f.data, 4, 6)), 1e-12);
}

TEST(BaselineHead, ConstantGridAndZeroWeights) {
  Rng rng(9);
  PooledHead head(3, 4, 0.3, rng);
  zero(head.head.fc.weight);
  head.head.fc.bias.value = Tensor::vector({0.5, -1, 2, 0});
  const Tensor logits = baseline_head({random_tensor({4, 4, 3}, rng), 16}, head);
  EXPECT_EQ(logits, Tensor::vector({0.5, -1, 2, 0}));
}

TEST(BaselineHead, EqualsHeadOnPooledFeature) {
  Rng rng(10);
  PooledHead head(3, 2, 0.3, rng);
  const FeatureGrid f{random_tensor({2, 2, 3}, rng), 16};
  Rng unused(0);
  const Tensor direct = head.head.forward(ops::global_avg_pool(f.data), ops::Mode::eval, unused);
  EXPECT_EQ(baseline_head(f, head), direct);
}
