#include "spaconet/gldm.hpp"

#include <cmath>

#include "spaconet/ops.hpp"

namespace spaconet {

Tensor extend_with_global(const SemanticSequence& nodes, const FeatureGrid& features) {
  const std::size_t l = nodes.objects(), c = nodes.channels();
  if (features.channels() != c) {
    fail(ErrorKind::dimension, "extend_with_global: sequence has " + std::to_string(c) +
                                   " channels, feature grid has " + std::to_string(features.channels()));
  }
  Tensor out({l + 1, c});
  std::copy(nodes.data.values().begin(), nodes.data.values().end(), out.data());
  const Tensor global = ops::global_avg_pool(features.data);
  std::copy(global.values().begin(), global.values().end(), out.data() + l * c);
  return out;
}

Tensor add_positional(const Tensor& extended, const Parameter& embedding) {
  require_same_shape(extended, embedding.value, "add_positional");
  Tensor out = extended;
  out += embedding.value;
  return out;
}

Tensor merge_max(const Tensor& a, const Tensor& b) { return ops::elementwise_max(a, b); }

Tensor extract_global_node(const Tensor& extended) {
  const std::size_t last = extended.dim(0) - 1, c = extended.dim(1);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = extended.at(last, ch);
  return out;
}

// ---- multi-head self-attention ---------------------------------------------

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t channels, std::size_t heads, Rng& rng)
    : query(channels, channels, rng),
      // A key bias adds q.b to every score in a row, which softmax discards.
      key(channels, channels, rng, false),
      value(channels, channels, rng),
      output(channels, channels, rng),
      heads_(heads) {
  if (heads == 0 || channels % heads != 0) {
    fail(ErrorKind::config, "head count " + std::to_string(heads) + " must divide channels " +
                                std::to_string(channels));
  }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), d = c / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  q_ = query.forward(x);
  k_ = key.forward(x);
  v_ = value.forward(x);
  attention_.assign(heads_, Tensor());
  Tensor concat({n, c});
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * d;
    Tensor scores({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += q_.at(i, off + t) * k_.at(j, off + t);
        scores.at(i, j) = s * scale;
      }
    attention_[h] = ops::softmax_lastdim(scores);
    const Tensor& a = attention_[h];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a.at(i, j);
        for (std::size_t t = 0; t < d; ++t) concat.at(i, off + t) += w * v_.at(j, off + t);
      }
  }
  return output.forward(concat);
}

Tensor MultiHeadSelfAttention::backward(const Tensor& dy) {
  const std::size_t n = q_.dim(0), c = q_.dim(1), d = c / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Tensor dconcat = output.backward(dy);
  Tensor dq({n, c}), dk({n, c}), dv({n, c});
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t off = h * d;
    const Tensor& a = attention_[h];
    Tensor da({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          s += dconcat.at(i, off + t) * v_.at(j, off + t);
          dv.at(j, off + t) += a.at(i, j) * dconcat.at(i, off + t);
        }
        da.at(i, j) = s;
      }
    const Tensor dscores = ops::softmax_backward(a, da);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = dscores.at(i, j) * scale;
        for (std::size_t t = 0; t < d; ++t) {
          dq.at(i, off + t) += g * k_.at(j, off + t);
          dk.at(j, off + t) += g * q_.at(i, off + t);
        }
      }
  }
  Tensor dx = query.backward(dq);
  dx += key.backward(dk);
  dx += value.backward(dv);
  return dx;
}

void MultiHeadSelfAttention::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  query.parameters(out, prefix + "query.");
  key.parameters(out, prefix + "key.");
  value.parameters(out, prefix + "value.");
  output.parameters(out, prefix + "output.");
}

Tensor msa(const Tensor& x, MultiHeadSelfAttention& attention) { return attention.forward(x); }

// ---- attention block -------------------------------------------------------

AttentionBlock::AttentionBlock(std::size_t channels, std::size_t heads, std::size_t mlp_ratio, Rng& rng)
    : norm1(channels),
      norm2(channels),
      msa(channels, heads, rng),
      fc1(channels, channels * mlp_ratio, rng),
      fc2(channels * mlp_ratio, channels, rng) {}

Tensor AttentionBlock::forward(const Tensor& x) {
  Tensor mid = x;
  mid += msa.forward(norm1.forward(x));
  mlp_pre_ = fc1.forward(norm2.forward(mid));
  Tensor out = mid;
  out += fc2.forward(ops::activate(mlp_pre_, ops::Activation::gelu));
  return out;
}

Tensor AttentionBlock::backward(const Tensor& dy) {
  Tensor dmid = dy;
  dmid += norm2.backward(fc1.backward(ops::activate_backward(mlp_pre_, fc2.backward(dy), ops::Activation::gelu)));
  Tensor dx = dmid;
  dx += norm1.backward(msa.backward(dmid));
  return dx;
}

void AttentionBlock::zero_branch_outputs() {
  msa.output.weight.value.fill(0.0);
  msa.output.bias.value.fill(0.0);
  fc2.weight.value.fill(0.0);
  fc2.bias.value.fill(0.0);
}

void AttentionBlock::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  norm1.parameters(out, prefix + "norm1.");
  msa.parameters(out, prefix + "msa.");
  norm2.parameters(out, prefix + "norm2.");
  fc1.parameters(out, prefix + "mlp.fc1.");
  fc2.parameters(out, prefix + "mlp.fc2.");
}

Tensor encoder_block(const Tensor& x, AttentionBlock& block) { return block.forward(x); }
Tensor decoder_block(const Tensor& x, AttentionBlock& block) { return block.forward(x); }

// ---- GLDM ------------------------------------------------------------------

void GldmConfig::validate() const {
  if (objects == 0) fail(ErrorKind::config, "objects must be positive");
  if (channels == 0) fail(ErrorKind::config, "channels must be positive");
  if (heads == 0 || channels % heads != 0) {
    fail(ErrorKind::config, "heads " + std::to_string(heads) + " must divide channels " + std::to_string(channels));
  }
  if (mlp_ratio == 0) fail(ErrorKind::config, "mlp_ratio must be positive");
}

Gldm::Gldm(GldmConfig config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t n = config_.objects + 1, c = config_.channels;
  auto gaussian = [&](double stddev) {
    Tensor t({n, c});
    for (auto& v : t.values()) v = rng.normal(0.0, stddev);
    return t;
  };
  pos_rgb = Parameter(gaussian(config_.positional_init_std));
  pos_spa = Parameter(gaussian(config_.positional_init_std));
  encoder_rgb = AttentionBlock(c, config_.heads, config_.mlp_ratio, rng);
  encoder_spa = AttentionBlock(c, config_.heads, config_.mlp_ratio, rng);
  decoder = AttentionBlock(c, config_.heads, config_.mlp_ratio, rng);
}

Tensor Gldm::forward(const SemanticSequence& rgb, const SemanticSequence& spa, const FeatureGrid& image_features,
                     const FeatureGrid& spatial_features) {
  if (rgb.objects() != config_.objects || spa.objects() != config_.objects) {
    fail(ErrorKind::dimension, "gldm: expected " + std::to_string(config_.objects) + " object rows");
  }
  enc_rgb_out_ = encoder_rgb.forward(add_positional(extend_with_global(rgb, image_features), pos_rgb));
  enc_spa_out_ = encoder_spa.forward(add_positional(extend_with_global(spa, spatial_features), pos_spa));
  merged_ = merge_max(enc_spa_out_, enc_rgb_out_);
  decoded_ = config_.use_decoder ? decoder.forward(merged_) : merged_;
  return extract_global_node(decoded_);
}

Gldm::InputGrad Gldm::backward(const Tensor& dglobal) {
  const std::size_t n = config_.objects + 1, c = config_.channels;
  Tensor ddecoded({n, c});
  for (std::size_t ch = 0; ch < c; ++ch) ddecoded.at(n - 1, ch) = dglobal[ch];
  const Tensor dmerged = config_.use_decoder ? decoder.backward(ddecoded) : ddecoded;
  Tensor dspa({n, c}), drgb({n, c});
  ops::elementwise_max_backward(enc_spa_out_, enc_rgb_out_, dmerged, dspa, drgb);
  InputGrad g{encoder_rgb.backward(drgb), encoder_spa.backward(dspa)};
  pos_rgb.grad += g.rgb;
  pos_spa.grad += g.spa;
  return g;
}

void Gldm::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  collect(out, prefix, "pos_rgb", pos_rgb);
  collect(out, prefix, "pos_spa", pos_spa);
  encoder_rgb.parameters(out, prefix + "encoder_rgb.");
  encoder_spa.parameters(out, prefix + "encoder_spa.");
  decoder.parameters(out, prefix + "decoder.");
}

}  // namespace spaconet
