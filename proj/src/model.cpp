#include "spaconet/model.hpp"

#include "spaconet/ops.hpp"

namespace spaconet {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::ssrm: return "ssrm";
    case Variant::encoder: return "encoder";
    case Variant::full: return "full";
  }
  return "unknown";
}

Variant parse_variant(const std::string& text) {
  if (text == "baseline") return Variant::baseline;
  if (text == "ssrm") return Variant::ssrm;
  if (text == "encoder") return Variant::encoder;
  if (text == "full") return Variant::full;
  fail(ErrorKind::config, "variant: unknown value '" + text + "' (expected baseline|ssrm|encoder|full)");
}

void ModelConfig::validate() const {
  if (objects == 0 || objects > 65535) fail(ErrorKind::config, "objects must lie in [1, 65535]");
  if (classes < 2) fail(ErrorKind::config, "classes must be at least 2");
  if (acf_kernel == 0) fail(ErrorKind::config, "acf_kernel must be positive");
  if (cham_reduction == 0 || channels % cham_reduction != 0) {
    fail(ErrorKind::config, "cham_reduction must divide channels");
  }
  gldm().validate();
  ifem().validate();
  ssrm().validate();
}

BackboneConfig ModelConfig::ifem() const { return default_ifem_config(channels, ifem_factor); }

BackboneConfig ModelConfig::ssrm() const {
  BackboneConfig c = default_ssrm_config(objects, channels, ssrm_factor);
  c.cham_reduction = cham_reduction;
  return c;
}

GldmConfig ModelConfig::gldm() const {
  GldmConfig g;
  g.objects = objects;
  g.channels = channels;
  g.heads = heads;
  g.mlp_ratio = mlp_ratio;
  g.use_decoder = variant == Variant::full;
  return g;
}

SpacoNet::SpacoNet(ModelConfig config, Rng& rng) : config_(config) {
  config_.validate();
  ifem = Backbone(config_.ifem(), rng);
  ifem_head = PooledHead(config_.channels, config_.classes, 0.0, rng);
  ssrm = Backbone(config_.ssrm(), rng);
  ssrm_head = PooledHead(config_.channels, config_.classes, 0.0, rng);
  fused_head = ClassifierHead(config_.channels, config_.classes, 0.0, rng);
  gldm = Gldm(config_.gldm(), rng);
  head = ClassifierHead(config_.channels, config_.classes, 0.0, rng);
}

void SpacoNet::set_variant(Variant v) {
  config_.variant = v;
  gldm.set_use_decoder(v == Variant::full);
}

NodeFeatures SpacoNet::features(const SampleInput& sample) {
  NodeFeatures f;
  if (sample.scores.classes() != config_.objects) {
    fail(ErrorKind::dimension, "score tensor has " + std::to_string(sample.scores.classes()) +
                                   " classes, model expects " + std::to_string(config_.objects));
  }
  if (sample.image_features) {
    f.image = {*sample.image_features, config_.ifem_factor};
  } else {
    f.image = ifem_forward(sample.image, ifem);
  }
  if (sample.spatial_features) {
    f.spatial_raw = {*sample.spatial_features, config_.acf_kernel * config_.ssrm_factor};
  } else {
    f.spatial_raw = ssrm_forward(acf(sample.scores, config_.acf_kernel), ssrm);
    f.spatial_raw.downsample *= config_.acf_kernel;
  }
  f.spatial = align_spatial(f.spatial_raw, f.image.height(), f.image.width());
  AggregatedPair pair = aggregate_pair(f.image, f.spatial, sample.scores, config_.acf_kernel);
  f.labels = std::move(pair.labels);
  f.rgb = std::move(pair.rgb);
  f.spa = std::move(pair.spa);
  return f;
}

Tensor SpacoNet::logits(const NodeFeatures& f, ops::Mode mode, Rng& rng) {
  cached_ = f;
  switch (config_.variant) {
    case Variant::baseline:
      return ifem_head.forward(f.image, mode, rng);
    case Variant::ssrm:
      fused_image_ = ops::global_avg_pool(f.image.data);
      fused_spatial_ = ops::global_avg_pool(f.spatial_raw.data);
      return fused_head.forward(ops::elementwise_max(fused_image_, fused_spatial_), mode, rng);
    case Variant::encoder:
    case Variant::full:
      return head.forward(gldm.forward(f.rgb, f.spa, f.image, f.spatial), mode, rng);
  }
  return {};
}

void SpacoNet::backward(const Tensor& dlogits) {
  switch (config_.variant) {
    case Variant::baseline: ifem_head.backward(dlogits); break;
    case Variant::ssrm: fused_head.backward(dlogits); break;
    case Variant::encoder:
    case Variant::full: gldm.backward(head.backward(dlogits)); break;
  }
}

Tensor SpacoNet::forward(const SampleInput& sample, ops::Mode mode, Rng& rng) {
  return logits(features(sample), mode, rng);
}

void SpacoNet::backward_end_to_end(const Tensor& dlogits) {
  const NodeFeatures& f = cached_;
  Tensor dimage(f.image.data.shape());
  Tensor dspatial_raw(f.spatial_raw.data.shape());
  switch (config_.variant) {
    case Variant::baseline:
      dimage = ifem_head.backward(dlogits);
      break;
    case Variant::ssrm: {
      const Tensor dmax = fused_head.backward(dlogits);
      Tensor dimg_pool(fused_image_.shape()), dspa_pool(fused_spatial_.shape());
      ops::elementwise_max_backward(fused_image_, fused_spatial_, dmax, dimg_pool, dspa_pool);
      dimage = ops::global_avg_pool_backward(dimg_pool, f.image.data.shape());
      dspatial_raw = ops::global_avg_pool_backward(dspa_pool, f.spatial_raw.data.shape());
      break;
    }
    case Variant::encoder:
    case Variant::full: {
      const Gldm::InputGrad g = gldm.backward(head.backward(dlogits));
      const std::size_t l = config_.objects, c = config_.channels;
      auto split = [&](const Tensor& dext, const SemanticSequence& seq, const Shape& grid_shape) {
        Tensor dseq({l, c}), dglobal({c});
        std::copy(dext.data(), dext.data() + l * c, dseq.data());
        std::copy(dext.data() + l * c, dext.data() + (l + 1) * c, dglobal.data());
        Tensor dgrid = aggregate_backward(dseq, f.labels, seq.counts, grid_shape);
        dgrid += ops::global_avg_pool_backward(dglobal, grid_shape);
        return dgrid;
      };
      dimage = split(g.rgb, f.rgb, f.image.data.shape());
      const Tensor dspatial = split(g.spa, f.spa, f.spatial.data.shape());
      dspatial_raw = f.spatial.data.shape() == f.spatial_raw.data.shape()
                         ? dspatial
                         : ops::bilinear_resize_backward(dspatial, f.spatial_raw.data.shape());
      break;
    }
  }
  ifem.backward(dimage);
  ssrm.backward(dspatial_raw);
}

Tensor SpacoNet::ifem_logits(const Tensor& image, ops::Mode mode, Rng& rng) {
  return ifem_head.forward(ifem_forward(image, ifem), mode, rng);
}

void SpacoNet::ifem_backward(const Tensor& dlogits) { ifem.backward(ifem_head.backward(dlogits)); }

Tensor SpacoNet::ssrm_logits(const ScoreTensor& scores, ops::Mode mode, Rng& rng) {
  return ssrm_head.forward(ssrm_forward(acf(scores, config_.acf_kernel), ssrm), mode, rng);
}

void SpacoNet::ssrm_backward(const Tensor& dlogits) { ssrm.backward(ssrm_head.backward(dlogits)); }

std::vector<NamedParameter> SpacoNet::ifem_parameters() {
  std::vector<NamedParameter> out;
  ifem.parameters(out, "ifem.");
  ifem_head.parameters(out, "ifem_head.");
  return out;
}

std::vector<NamedParameter> SpacoNet::ssrm_parameters() {
  std::vector<NamedParameter> out;
  ssrm.parameters(out, "ssrm.");
  ssrm_head.parameters(out, "ssrm_head.");
  return out;
}

std::vector<NamedParameter> SpacoNet::backbone_parameters() {
  std::vector<NamedParameter> out;
  ifem.parameters(out, "ifem.");
  ssrm.parameters(out, "ssrm.");
  return out;
}

std::vector<NamedParameter> SpacoNet::stage2_parameters() {
  std::vector<NamedParameter> out;
  switch (config_.variant) {
    case Variant::baseline: break;
    case Variant::ssrm: fused_head.parameters(out, "fused_head."); break;
    case Variant::encoder:
    case Variant::full: {
      std::vector<NamedParameter> g;
      gldm.parameters(g, "gldm.");
      for (auto& np : g) {
        const bool decoder_param = np.name.rfind("gldm.decoder.", 0) == 0;
        if (!decoder_param || config_.variant == Variant::full) out.push_back(np);
      }
      head.parameters(out, "head.");
      break;
    }
  }
  return out;
}

std::vector<NamedParameter> SpacoNet::all_parameters() {
  std::vector<NamedParameter> out;
  ifem.parameters(out, "ifem.");
  ifem_head.parameters(out, "ifem_head.");
  ssrm.parameters(out, "ssrm.");
  ssrm_head.parameters(out, "ssrm_head.");
  fused_head.parameters(out, "fused_head.");
  gldm.parameters(out, "gldm.");
  head.parameters(out, "head.");
  return out;
}

void SpacoNet::set_stage1_dropout(double rate) {
  ifem_head.head.set_dropout_rate(rate);
  ssrm_head.head.set_dropout_rate(rate);
}

void SpacoNet::set_stage2_dropout(double rate) {
  fused_head.set_dropout_rate(rate);
  head.set_dropout_rate(rate);
}

}  // namespace spaconet
