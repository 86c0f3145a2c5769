#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "spaconet/feature_extractors.hpp"
#include "spaconet/gldm.hpp"
#include "spaconet/node_aggregation.hpp"
#include "spaconet/recognition.hpp"
#include "spaconet/semantic_filtering.hpp"

namespace spaconet {

/// Which classifier path is trained in stage 2 and used for prediction.
///  baseline: image backbone + its stage-1 pooled head
///  ssrm:     element-wise max of both pooled backbone features + a new head
///  encoder:  node aggregation + two encoders + max merge, no decoder
///  full:     encoders, merge and decoder
enum class Variant { baseline, ssrm, encoder, full };

const char* to_string(Variant v);
Variant parse_variant(const std::string& text);

struct ModelConfig {
  std::size_t objects = 8;
  std::size_t classes = 4;
  std::size_t channels = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t cham_reduction = 4;
  std::size_t acf_kernel = 2;
  std::size_t ifem_factor = 16;
  std::size_t ssrm_factor = 16;
  Variant variant = Variant::full;

  void validate() const;
  BackboneConfig ifem() const;
  BackboneConfig ssrm() const;
  GldmConfig gldm() const;
};

/// One scene sample. Precomputed feature grids, when present, replace the
/// surrogate backbones' outputs.
struct SampleInput {
  Tensor image;  // H x W x 3
  ScoreTensor scores;
  std::optional<Tensor> image_features;
  std::optional<Tensor> spatial_features;
};

/// Everything downstream of the (frozen) backbones for one sample.
struct NodeFeatures {
  FeatureGrid image;        // F_I
  FeatureGrid spatial_raw;  // F_S at its own resolution
  FeatureGrid spatial;      // F_S aligned to F_I
  LabelMap labels;          // label map on F_I's grid
  SemanticSequence rgb, spa;
};

class SpacoNet {
 public:
  SpacoNet() = default;
  SpacoNet(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  void set_variant(Variant v);

  /// Runs both backbones (or takes ingested grids) and the node aggregation.
  NodeFeatures features(const SampleInput& sample);

  /// Variant-dependent logits from already-extracted features. Caches what
  /// backward() needs.
  Tensor logits(const NodeFeatures& f, ops::Mode mode, Rng& rng);
  /// Accumulates gradients of the stage-2 parameters of the current variant.
  void backward(const Tensor& dlogits);

  /// logits(features(sample)) with caches kept for backward_end_to_end().
  Tensor forward(const SampleInput& sample, ops::Mode mode, Rng& rng);
  /// Backpropagates through the head path, the aggregation and both backbones.
  void backward_end_to_end(const Tensor& dlogits);

  // Stage-1 paths: each backbone with its own pooled head.
  Tensor ifem_logits(const Tensor& image, ops::Mode mode, Rng& rng);
  void ifem_backward(const Tensor& dlogits);
  Tensor ssrm_logits(const ScoreTensor& scores, ops::Mode mode, Rng& rng);
  void ssrm_backward(const Tensor& dlogits);

  std::vector<NamedParameter> ifem_parameters();
  std::vector<NamedParameter> ssrm_parameters();
  std::vector<NamedParameter> backbone_parameters();
  /// Parameters trained in stage 2 for the current variant.
  std::vector<NamedParameter> stage2_parameters();
  std::vector<NamedParameter> all_parameters();

  void set_stage1_dropout(double rate);
  void set_stage2_dropout(double rate);

  Backbone ifem, ssrm;
  PooledHead ifem_head, ssrm_head;
  ClassifierHead fused_head;
  Gldm gldm;
  ClassifierHead head;

 private:
  ModelConfig config_;
  NodeFeatures cached_;
  Tensor fused_image_, fused_spatial_;
};

}  // namespace spaconet
