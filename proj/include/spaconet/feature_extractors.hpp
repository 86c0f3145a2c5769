#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spaconet/layers.hpp"
#include "spaconet/recognition.hpp"
#include "spaconet/semantic_filtering.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

/// H' x W' x c feature map plus its downsample factor relative to the grid
/// that produced it.
struct FeatureGrid {
  Tensor data;
  std::size_t downsample = 1;

  std::size_t height() const { return data.dim(0); }
  std::size_t width() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }
};

/// One entry per stage: a strided downsampling conv (3x3 for stride <= 2,
/// stride x stride patchify otherwise) followed by `blocks` residual blocks
/// and, when enabled, channel attention.
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> strides;
  std::vector<std::size_t> blocks;
  bool channel_attention = false;
  std::size_t cham_reduction = 4;

  std::size_t downsample() const;
  std::size_t out_channels() const { return widths.empty() ? in_channels : widths.back(); }
  void validate() const;
};

BackboneConfig default_ifem_config(std::size_t channels, std::size_t factor = 16);
BackboneConfig default_ssrm_config(std::size_t objects, std::size_t channels, std::size_t factor = 16);

/// CBAM-style channel attention: F * sigmoid(MLP(avgpool F) + MLP(maxpool F)),
/// with the two-layer bottleneck MLP shared by both pooled statistics.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng);

  Tensor forward(const Tensor& grid);
  Tensor backward(const Tensor& dy);

  /// Gate from the most recent forward call, shape [c].
  const Tensor& last_scale() const { return scale_; }

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Parameter w1, b1;  // c x c/r
  Parameter w2, b2;  // c/r x c

 private:
  struct Branch {
    Tensor pooled;  // 1 x c
    Tensor pre;     // 1 x c/r
    Tensor hidden;  // 1 x c/r
  };
  Tensor mlp(Branch& branch, const Tensor& pooled);
  Tensor mlp_backward(const Branch& branch, const Tensor& dz);

  Tensor input_;
  Tensor scale_;
  Branch avg_, max_;
  std::vector<std::size_t> max_index_;
};

Tensor cham(const Tensor& grid, ChannelAttention& attention);

class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Conv2d conv1, conv2;

 private:
  Tensor pre1_, sum_;
};

/// Residual conv stack without global pooling. Used both as the image
/// backbone (IFEM) and, with channel attention, as the score-tensor backbone
/// (SSRM).
class Backbone {
 public:
  Backbone() = default;
  Backbone(BackboneConfig config, Rng& rng);

  FeatureGrid forward(const Tensor& input);
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& dgrid);

  const BackboneConfig& config() const { return config_; }
  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);
  void set_frozen(bool frozen);

  struct Stage {
    Conv2d down;
    std::vector<ResidualBlock> blocks;
    bool attention = false;
    ChannelAttention cham;
    Tensor pre;  // cache: downsample pre-activation
  };
  std::vector<Stage> stages;

 private:
  BackboneConfig config_;
};

/// Score-branch forward. `filtered` must already be the ACF output.
FeatureGrid ssrm_forward(const ScoreTensor& filtered, Backbone& ssrm);
FeatureGrid ifem_forward(const Tensor& image, Backbone& ifem);

/// Bilinear resize of F_S onto F_I's spatial grid.
FeatureGrid align_spatial(const FeatureGrid& spatial, std::size_t height, std::size_t width);

/// Global average pooling followed by a classifier head.
class PooledHead {
 public:
  PooledHead() = default;
  PooledHead(std::size_t channels, std::size_t classes, double dropout_rate, Rng& rng)
      : head(channels, classes, dropout_rate, rng) {}

  Tensor forward(const FeatureGrid& grid, ops::Mode mode, Rng& rng);
  Tensor backward(const Tensor& dlogits);
  void parameters(std::vector<NamedParameter>& out, const std::string& prefix) { head.parameters(out, prefix); }

  ClassifierHead head;

 private:
  Shape grid_shape_;
};

/// Eval-mode logits of the pooled-feature baseline.
Tensor baseline_head(const FeatureGrid& image_features, PooledHead& head);

}  // namespace spaconet
