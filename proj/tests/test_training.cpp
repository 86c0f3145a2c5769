#include <gtest/gtest.h>

#include <cmath>

#include "spaconet/synthetic.hpp"
#include "spaconet/training.hpp"
#include "test_util.hpp"

using namespace spaconet;

namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.channels = 16;
  m.heads = 2;
  return m;
}

const GeneratedDataset& corpus() {
  static const GeneratedDataset d = generate_dataset(confounded_spec(), 8, 4);
  return d;
}

StageConfig short_stage(int stage, std::size_t epochs) {
  StageConfig s = stage == 1 ? default_stage1() : default_stage2();
  s.epochs = epochs;
  s.batch_size = 4;
  return s;
}

}  // namespace

TEST(AliG, StepClampedByEta) {
  Parameter p(Tensor::vector({1, 2}));
  p.grad = Tensor::vector({1, 0});
  std::vector<NamedParameter> params{{"p", &p}};
  const StepInfo info = alig_step(params, 10.0, 0.1);
  EXPECT_EQ(info.gamma, 0.1);
  EXPECT_EQ(p.value, Tensor::vector({0.9, 2}));
}

TEST(AliG, PolyakStepWhenSmall) {
  Parameter p(Tensor::vector({0}));
  p.grad = Tensor::vector({1});
  std::vector<NamedParameter> params{{"p", &p}};
  const StepInfo info = alig_step(params, 1e-4, 0.1);
  EXPECT_NEAR(info.gamma, 1e-4 / (1.0 + 1e-5), 1e-18);
  EXPECT_NEAR(p.value[0], -info.gamma, 1e-18);
}

TEST(AliG, ZeroGradientLeavesParameters) {
  Parameter p(Tensor::vector({3, 4}));
  std::vector<NamedParameter> params{{"p", &p}};
  alig_step(params, 0.5, 0.1);
  EXPECT_EQ(p.value, Tensor::vector({3, 4}));
}

TEST(AliG, FrozenParametersUntouchedAndExcludedFromNorm) {
  Parameter a(Tensor::vector({1})), b(Tensor::vector({1}));
  a.grad = Tensor::vector({2});
  b.grad = Tensor::vector({100});
  b.frozen = true;
  std::vector<NamedParameter> params{{"a", &a}, {"b", &b}};
  const StepInfo info = alig_step(params, 1e-3, 0.1);
  EXPECT_EQ(info.grad_norm_sq, 4.0);
  EXPECT_EQ(b.value[0], 1.0);
  EXPECT_LT(a.value[0], 1.0);
}

TEST(AliG, GammaNeverExceedsEta) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Parameter p(testutil::random_tensor({3}, rng));
    p.grad = testutil::random_tensor({3}, rng, -1e-3, 1e-3);
    std::vector<NamedParameter> params{{"p", &p}};
    const double eta = rng.uniform(1e-3, 1.0);
    const StepInfo info = alig_step(params, rng.uniform(0, 5), eta);
    EXPECT_LE(info.gamma, eta);
    EXPECT_GE(info.gamma, 0.0);
  }
}

TEST(AliG, RejectsBadInputs) {
  Parameter p(Tensor::vector({0}));
  std::vector<NamedParameter> params{{"p", &p}};
  try {
    alig_step(params, std::nan(""), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
  try {
    alig_step(params, 1.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(StageConfig, DefaultsFollowThePaper) {
  EXPECT_EQ(default_stage1().eta, 0.01);
  EXPECT_EQ(default_stage2().eta, 0.1);
  EXPECT_EQ(default_stage1().dropout, 0.3);
  EXPECT_EQ(default_stage2().dropout, 0.8);
  EXPECT_EQ(default_stage1().batch_size, 32u);
}

TEST(StageConfig, ValidationNamesTheKey) {
  StageConfig s = default_stage2();
  s.dropout = 1.0;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("stage2.dropout"), std::string::npos);
  }
}

TEST(Training, StageOneLossDecreases) {
  const Dataset data = to_dataset(corpus().train, corpus().spec);
  Rng rng(1);
  SpacoNet model(small_model(), rng);
  std::vector<EpochMetrics> log;
  StageConfig stage = short_stage(1, 8);
  stage.dropout = 0.0;
  stage.eta = 0.1;
  train_stage1(model, data, stage, [&](const EpochMetrics& m) { log.push_back(m); });
  ASSERT_EQ(log.size(), 16u);
  EXPECT_EQ(log.front().phase, "stage1.ifem");
  EXPECT_EQ(log.back().phase, "stage1.ssrm");
  EXPECT_LT(log[7].loss, log[0].loss);
  EXPECT_LT(log[15].loss, log[8].loss);
}

TEST(Training, Stage2FreezesBackbonesAndIsDeterministic) {
  const Dataset data = to_dataset(corpus().train, corpus().spec);
  auto run = [&](std::uint64_t& backbone_before, std::uint64_t& backbone_after) {
    Rng rng(2);
    SpacoNet model(small_model(), rng);
    train_stage1(model, data, short_stage(1, 1));
    backbone_before = parameter_hash(model.backbone_parameters());
    const std::uint64_t head_before = parameter_hash(model.stage2_parameters());
    train_stage2(model, data, short_stage(2, 2));
    backbone_after = parameter_hash(model.backbone_parameters());
    EXPECT_NE(parameter_hash(model.stage2_parameters()), head_before);
    for (const auto& np : model.backbone_parameters()) EXPECT_TRUE(np.param->frozen) << np.name;
    return parameter_hash(model.all_parameters());
  };
  std::uint64_t b1, a1, b2, a2;
  const std::uint64_t h1 = run(b1, a1), h2 = run(b2, a2);
  EXPECT_EQ(b1, a1);
  EXPECT_EQ(b2, a2);
  EXPECT_EQ(h1, h2);
}

TEST(Training, BaselineVariantTrainsNothingInStageTwo) {
  const Dataset data = to_dataset(corpus().train, corpus().spec);
  Rng rng(3);
  SpacoNet model(small_model(), rng);
  model.set_variant(Variant::baseline);
  const std::uint64_t before = parameter_hash(model.all_parameters());
  const TrainState s = train_stage2(model, data, short_stage(2, 3));
  EXPECT_EQ(s.epochs, 0u);
  EXPECT_EQ(parameter_hash(model.all_parameters()), before);
}

TEST(Training, PredictReturnsOneLabelPerSample) {
  const Dataset data = to_dataset(corpus().test, corpus().spec);
  Rng rng(4);
  SpacoNet model(small_model(), rng);
  const auto p = predict(model, data);
  ASSERT_EQ(p.size(), data.size());
  for (auto y : p) EXPECT_LT(y, 4u);
}

TEST(ParameterHash, SensitiveToValuesOnly) {
  Parameter a(Tensor::vector({1, 2})), b(Tensor::vector({1, 2}));
  b.grad = Tensor::vector({5, 5});
  std::vector<NamedParameter> pa{{"a", &a}}, pb{{"b", &b}};
  EXPECT_EQ(parameter_hash(pa), parameter_hash(pb));
  b.value[1] = std::nextafter(2.0, 3.0);
  EXPECT_NE(parameter_hash(pa), parameter_hash(pb));
}
