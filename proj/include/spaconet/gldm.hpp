#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spaconet/feature_extractors.hpp"
#include "spaconet/layers.hpp"
#include "spaconet/node_aggregation.hpp"
#include "spaconet/tensor.hpp"

namespace spaconet {

/// (l+1) x c node sequence; the global node is the last row.
Tensor extend_with_global(const SemanticSequence& nodes, const FeatureGrid& features);
Tensor add_positional(const Tensor& extended, const Parameter& embedding);
Tensor merge_max(const Tensor& a, const Tensor& b);
Tensor extract_global_node(const Tensor& extended);

class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(std::size_t channels, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  std::size_t heads() const { return heads_; }
  /// Per-head (n x n) attention weights from the most recent forward call.
  const std::vector<Tensor>& attention() const { return attention_; }

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Linear query, key, value, output;

 private:
  std::size_t heads_ = 1;
  Tensor q_, k_, v_;
  std::vector<Tensor> attention_;
};

/// Pre-norm transformer block:
///   y = x + MSA(LN1(x));  out = y + MLP(LN2(y))
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(std::size_t channels, std::size_t heads, std::size_t mlp_ratio, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

  /// Zero the MSA output projection and the last MLP layer, turning the block
  /// into an exact identity.
  void zero_branch_outputs();

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  LayerNorm norm1, norm2;
  MultiHeadSelfAttention msa;
  Linear fc1, fc2;

 private:
  Tensor mlp_pre_;
};

Tensor msa(const Tensor& x, MultiHeadSelfAttention& attention);
Tensor encoder_block(const Tensor& x, AttentionBlock& block);
Tensor decoder_block(const Tensor& x, AttentionBlock& block);

struct GldmConfig {
  std::size_t objects = 8;
  std::size_t channels = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  bool use_decoder = true;
  double positional_init_std = 0.02;

  void validate() const;
};

/// Two encoder branches (image nodes, spatial nodes), element-wise max merge,
/// and an optional decoder; produces the refined global node.
class Gldm {
 public:
  Gldm() = default;
  Gldm(GldmConfig config, Rng& rng);

  /// Returns F_o, shape [c].
  Tensor forward(const SemanticSequence& rgb, const SemanticSequence& spa, const FeatureGrid& image_features,
                 const FeatureGrid& spatial_features);

  struct InputGrad {
    Tensor rgb;  // (l+1) x c, gradient w.r.t. the extended image sequence
    Tensor spa;
  };
  InputGrad backward(const Tensor& dglobal);

  const GldmConfig& config() const { return config_; }
  std::size_t encoder_layers_per_branch() const { return 1; }
  std::size_t decoder_layers() const { return config_.use_decoder ? 1 : 0; }
  /// The decoder's parameters always exist; this only bypasses it.
  void set_use_decoder(bool use) { config_.use_decoder = use; }

  /// Last merged sequence and decoder output, for inspection.
  const Tensor& merged() const { return merged_; }
  const Tensor& decoded() const { return decoded_; }

  void parameters(std::vector<NamedParameter>& out, const std::string& prefix);

  Parameter pos_rgb, pos_spa;
  AttentionBlock encoder_rgb, encoder_spa, decoder;

 private:
  GldmConfig config_;
  Tensor enc_rgb_out_, enc_spa_out_, merged_, decoded_;
};

}  // namespace spaconet
