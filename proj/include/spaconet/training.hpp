#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spaconet/model.hpp"
#include "spaconet/recognition.hpp"

namespace spaconet {

struct StageConfig {
  int stage = 1;
  double eta = 0.01;
  double dropout = 0.3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

StageConfig default_stage1();
StageConfig default_stage2();

/// Full run configuration: model dimensions plus both stage schedules.
struct RunConfig {
  ModelConfig model;
  StageConfig stage1 = default_stage1();
  StageConfig stage2 = default_stage2();
  std::uint64_t seed = 1;

  void validate() const;
};

/// Schedule used for the confounded desk-scale corpus: short stages, paper step
/// sizes and batch size, no dropout. With only 64 feature channels a rate of 0.8
/// leaves too few active units for the head to separate the confounded pair.
RunConfig desk_scale_run_config();

struct Dataset {
  std::size_t classes = 0;
  std::size_t objects = 0;
  std::vector<SampleInput> samples;
  std::vector<SceneLabel> labels;

  std::size_t size() const { return samples.size(); }
};

struct StepInfo {
  double gamma = 0.0;
  double grad_norm_sq = 0.0;
};

/// ALI-G step: gamma = min(eta, loss / (|grad|^2 + delta)); every non-frozen
/// parameter moves by -gamma * grad. Frozen parameters are left untouched.
StepInfo alig_step(std::span<const NamedParameter> params, double loss, double eta, double delta = 1e-5);

struct EpochMetrics {
  std::string phase;
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

struct TrainState {
  std::size_t epochs = 0;
  double last_gamma = 0.0;
  std::string rng_state;
};

struct Stage1Result {
  TrainState ifem;
  TrainState ssrm;
};

/// Trains the image backbone and the score backbone independently, each with
/// its own pooled classifier head.
Stage1Result train_stage1(SpacoNet& model, const Dataset& data, const StageConfig& config,
                          const MetricsSink& sink = {});

/// Precomputes frozen-backbone features for every sample.
std::vector<NodeFeatures> extract_features(SpacoNet& model, const Dataset& data);

/// Freezes both backbones and trains the stage-2 parameters of the model's
/// current variant on cached backbone features.
TrainState train_stage2(SpacoNet& model, const Dataset& data, const StageConfig& config,
                        const MetricsSink& sink = {});
TrainState train_stage2(SpacoNet& model, const std::vector<NodeFeatures>& features,
                        std::span<const SceneLabel> labels, const StageConfig& config, const MetricsSink& sink = {});

std::vector<SceneLabel> predict(SpacoNet& model, const Dataset& data);
std::vector<SceneLabel> predict(SpacoNet& model, const std::vector<NodeFeatures>& features);

struct AblationRow {
  Variant variant;
  std::string name;
  double accuracy = 0.0;
  std::vector<SceneLabel> predictions;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // baseline, +SSRM, +Encoder, +Decoder
};

/// Stage 1 once, then one stage-2 run per row on the shared frozen backbones.
AblationReport ablation_suite(const Dataset& train, const Dataset& test, const RunConfig& config,
                              const MetricsSink& sink = {});

/// FNV-1a over the bytes of every parameter value, in order.
std::uint64_t parameter_hash(std::span<const NamedParameter> params);

}  // namespace spaconet
