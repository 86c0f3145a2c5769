#include "spaconet/diagnostics.hpp"

#include <functional>

#include "spaconet/feature_extractors.hpp"
#include "spaconet/gldm.hpp"
#include "spaconet/layers.hpp"
#include "spaconet/model.hpp"
#include "spaconet/recognition.hpp"

namespace spaconet {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

void randomize(Parameter& p, Rng& rng) {
  for (auto& v : p.value.values()) v = rng.uniform(-0.5, 0.5);
}

double probe(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

void zero(std::span<const NamedParameter> params) {
  for (const auto& np : params) np.param->zero_grad();
}

class Suite {
 public:
  explicit Suite(const GradSuiteOptions& o) : o_(o), rng_(o.seed) {}

  // Checks y = layer(x) under the probe loss <y, r>, including dL/dx.
  template <class Layer>
  void layer(const std::string& name, Layer& l, Shape input) {
    Parameter x(random_tensor(std::move(input), rng_));
    const Tensor r = random_tensor(l.forward(x.value).shape(), rng_);
    std::vector<NamedParameter> params;
    l.parameters(params, "");
    params.push_back({"input", &x});
    run(name, params, [&] { return probe(l.forward(x.value), r); },
        [&] {
          zero(params);
          l.forward(x.value);
          x.grad = l.backward(r);
        });
  }

  void run(const std::string& name, std::span<const NamedParameter> params, const std::function<double()>& loss,
           const std::function<void()>& backward) {
    ModuleCheck m{name, grad_check(loss, backward, params, o_.eps, o_.max_per_param), false};
    m.passed = m.report.passed(o_.tolerance) && m.report.skipped() <= m.report.checked() / 20 + 1;
    results.push_back(std::move(m));
  }

  Rng& rng() { return rng_; }
  const GradSuiteOptions& options() const { return o_; }

  std::vector<ModuleCheck> results;

 private:
  GradSuiteOptions o_;
  Rng rng_;
};

void stage2_loss(Suite& suite) {
  const GradSuiteOptions& o = suite.options();
  Rng& rng = suite.rng();
  ModelConfig cfg;
  cfg.objects = o.objects;
  cfg.classes = o.classes;
  cfg.channels = o.channels;
  cfg.heads = o.heads;
  cfg.ifem_factor = 4;
  cfg.ssrm_factor = 4;
  SpacoNet model(cfg, rng);
  model.set_stage2_dropout(0.8);
  std::vector<NodeFeatures> features;
  std::vector<SceneLabel> labels;
  for (std::size_t i = 0; i < o.samples; ++i) {
    const SampleInput s{random_tensor({16, 16, 3}, rng), ScoreTensor(random_tensor({16, 16, o.objects}, rng, 0, 1)),
                        {}, {}};
    features.push_back(model.features(s));
    labels.push_back(static_cast<SceneLabel>(rng.index(o.classes)));
  }
  for (const auto& np : model.backbone_parameters()) np.param->frozen = true;
  const auto params = model.stage2_parameters();
  const double inv = 1.0 / static_cast<double>(o.samples);
  const std::uint64_t mask_seed = o.seed + 17;
  // Every evaluation replays the same dropout masks.
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      Rng mask = Rng(mask_seed).split(i);
      total += cross_entropy(model.logits(features[i], ops::Mode::train, mask), labels[i]).loss;
    }
    return total * inv;
  };
  auto backward = [&] {
    zero(params);
    for (std::size_t i = 0; i < features.size(); ++i) {
      Rng mask = Rng(mask_seed).split(i);
      Tensor g = cross_entropy(model.logits(features[i], ops::Mode::train, mask), labels[i]).grad;
      for (auto& v : g.values()) v *= inv;
      model.backward(g);
    }
  };
  suite.run("stage2_loss", params, loss, backward);
}

}  // namespace

void GradSuiteOptions::validate() const {
  if (channels == 0 || heads == 0 || channels % heads != 0) fail(ErrorKind::config, "heads must divide channels");
  if (channels % 4 != 0) fail(ErrorKind::config, "channels must be a multiple of 4");
  if (objects < 2) fail(ErrorKind::config, "objects must be at least 2");
  if (classes < 2) fail(ErrorKind::config, "classes must be at least 2");
  if (samples == 0) fail(ErrorKind::config, "samples must be positive");
  if (!(tolerance > 0.0)) fail(ErrorKind::config, "tolerance must be positive");
  if (!(eps > 0.0)) fail(ErrorKind::config, "eps must be positive");
}

std::vector<ModuleCheck> run_grad_suite(const GradSuiteOptions& o) {
  o.validate();
  Suite suite(o);
  Rng& rng = suite.rng();
  const std::size_t c = o.channels;

  {
    Linear l(c, c / 2, rng);
    randomize(l.bias, rng);
    suite.layer("linear", l, {3, c});
  }
  for (std::size_t stride : {1u, 2u, 4u}) {
    const std::size_t k = stride == 4 ? 4 : 3, pad = stride == 4 ? 0 : 1;
    Conv2d conv(k, 3, 4, stride, pad, rng);
    randomize(conv.bias, rng);
    suite.layer("conv2d.stride" + std::to_string(stride), conv, {8, 8, 3});
  }
  {
    LayerNorm norm(c);
    randomize(norm.gamma, rng), randomize(norm.beta, rng);
    suite.layer("layer_norm", norm, {3, c});
  }
  {
    ChannelAttention att(c, 4, rng);
    randomize(att.b1, rng), randomize(att.b2, rng);
    suite.layer("channel_attention", att, {3, 3, c});
  }
  {
    ResidualBlock block(4, rng);
    suite.layer("residual_block", block, {4, 4, 4});
  }
  {
    Backbone net(default_ssrm_config(o.objects, c, 4), rng);
    Parameter x(random_tensor({8, 8, o.objects}, rng, 0, 1));
    const Tensor r = random_tensor(net.forward(x.value).data.shape(), rng);
    std::vector<NamedParameter> params;
    net.parameters(params, "");
    params.push_back({"input", &x});
    suite.run("backbone", params, [&] { return probe(net.forward(x.value).data, r); },
              [&] {
                zero(params);
                net.forward(x.value);
                x.grad = net.backward(r);
              });
  }
  {
    MultiHeadSelfAttention att(c, o.heads, rng);
    suite.layer("self_attention", att, {o.objects + 1, c});
  }
  {
    AttentionBlock block(c, o.heads, 4, rng);
    randomize(block.norm1.beta, rng), randomize(block.fc1.bias, rng);
    suite.layer("attention_block", block, {o.objects + 1, c});
  }
  {
    GldmConfig cfg;
    cfg.objects = o.objects;
    cfg.channels = c;
    cfg.heads = o.heads;
    Gldm gldm(cfg, rng);
    const SemanticSequence rgb{random_tensor({o.objects, c}, rng), std::vector<bool>(o.objects, true),
                               std::vector<std::size_t>(o.objects, 1)};
    const SemanticSequence spa{random_tensor({o.objects, c}, rng), std::vector<bool>(o.objects, true),
                               std::vector<std::size_t>(o.objects, 1)};
    const FeatureGrid fi{random_tensor({2, 2, c}, rng), 1}, fs{random_tensor({2, 2, c}, rng), 1};
    const Tensor r = random_tensor({c}, rng);
    std::vector<NamedParameter> params;
    gldm.parameters(params, "");
    suite.run("gldm", params, [&] { return probe(gldm.forward(rgb, spa, fi, fs), r); },
              [&] {
                zero(params);
                gldm.forward(rgb, spa, fi, fs);
                gldm.backward(r);
              });
  }
  {
    ClassifierHead head(c, o.classes, 0.0, rng);
    randomize(head.fc.bias, rng);
    Parameter f(random_tensor({c}, rng));
    std::vector<NamedParameter> params;
    head.parameters(params, "");
    params.push_back({"feature", &f});
    const SceneLabel y = static_cast<SceneLabel>(rng.index(o.classes));
    Rng unused(0);
    suite.run("classifier_cross_entropy", params,
              [&] { return cross_entropy(head.forward(f.value, ops::Mode::eval, unused), y).loss; },
              [&] {
                zero(params);
                f.grad = head.backward(cross_entropy(head.forward(f.value, ops::Mode::eval, unused), y).grad);
              });
  }
  stage2_loss(suite);
  return std::move(suite.results);
}

}  // namespace spaconet
