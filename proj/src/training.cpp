#include "spaconet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace spaconet {
namespace {

// Independent streams derived from one stage seed.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with our own index draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

void zero_grads(std::span<const NamedParameter> params) {
  for (const auto& np : params) np.param->zero_grad();
}

void set_frozen(std::span<const NamedParameter> params, bool frozen) {
  for (const auto& np : params) np.param->frozen = frozen;
}

void require_labels(const Dataset& data) {
  if (data.labels.size() != data.samples.size()) {
    fail(ErrorKind::data, "dataset has " + std::to_string(data.samples.size()) + " samples but " +
                              std::to_string(data.labels.size()) + " labels");
  }
  if (data.samples.empty()) fail(ErrorKind::data, "dataset is empty");
}

// One pass over `n` samples in shuffled mini-batches. `step` runs forward and
// backward for one sample and returns (loss, predicted).
template <typename Step>
EpochMetrics run_epoch(std::size_t n, std::span<const SceneLabel> labels, const StageConfig& config,
                       std::span<const NamedParameter> params, Rng& shuffle_rng, Step&& step, double& last_gamma) {
  const std::vector<std::size_t> order = shuffled(n, shuffle_rng);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
    const std::size_t end = std::min(n, begin + config.batch_size);
    const double inv = 1.0 / static_cast<double>(end - begin);
    zero_grads(params);
    double batch_loss = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t i = order[b];
      const auto [loss, predicted] = step(i, inv);
      batch_loss += loss;
      if (predicted == labels[i]) ++correct;
    }
    batch_loss *= inv;
    loss_sum += batch_loss * static_cast<double>(end - begin);
    last_gamma = alig_step(params, batch_loss, config.eta).gamma;
  }
  EpochMetrics m;
  m.loss = loss_sum / static_cast<double>(n);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return m;
}

}  // namespace

void StageConfig::validate() const {
  const std::string where = "stage" + std::to_string(stage) + ".";
  if (!(eta > 0.0) || !std::isfinite(eta)) fail(ErrorKind::config, where + "eta must be a positive finite number");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, where + "dropout must lie in [0, 1)");
  if (batch_size == 0) fail(ErrorKind::config, where + "batch_size must be positive");
}

StageConfig default_stage1() {
  StageConfig c;
  c.stage = 1;
  c.eta = 0.01;
  c.dropout = 0.3;
  c.epochs = 20;
  return c;
}

StageConfig default_stage2() {
  StageConfig c;
  c.stage = 2;
  c.eta = 0.1;
  c.dropout = 0.8;
  c.epochs = 20;
  return c;
}

RunConfig desk_scale_run_config() {
  RunConfig c;
  c.stage1.epochs = 5;
  c.stage1.dropout = 0.0;
  c.stage2.epochs = 20;
  c.stage2.dropout = 0.0;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  stage1.validate();
  stage2.validate();
}

StepInfo alig_step(std::span<const NamedParameter> params, double loss, double eta, double delta) {
  if (!std::isfinite(loss)) fail(ErrorKind::numeric, "alig_step: non-finite loss");
  if (!(eta > 0.0)) fail(ErrorKind::config, "alig_step: eta must be positive");
  StepInfo info;
  for (const auto& np : params) {
    if (np.param->frozen) continue;
    for (double g : np.param->grad.values()) info.grad_norm_sq += g * g;
  }
  if (!std::isfinite(info.grad_norm_sq)) fail(ErrorKind::numeric, "alig_step: non-finite gradient");
  info.gamma = std::min(eta, loss / (info.grad_norm_sq + delta));
  for (const auto& np : params) {
    if (np.param->frozen) continue;
    double* v = np.param->value.data();
    const double* g = np.param->grad.data();
    for (std::size_t i = 0; i < np.param->value.size(); ++i) v[i] -= info.gamma * g[i];
  }
  return info;
}

Stage1Result train_stage1(SpacoNet& model, const Dataset& data, const StageConfig& config, const MetricsSink& sink) {
  config.validate();
  require_labels(data);
  model.set_stage1_dropout(config.dropout);
  Stage1Result result;

  auto train_branch = [&](const std::string& phase, std::vector<NamedParameter> params, std::uint64_t branch,
                          auto&& forward, auto&& backward) {
    set_frozen(params, false);
    const Rng root = Rng(config.seed).split(branch);
    Rng shuffle_rng = root.split(kShuffleStream);
    Rng dropout_rng = root.split(kDropoutStream);
    TrainState state;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      auto step = [&](std::size_t i, double scale) {
        const Tensor logits = forward(data.samples[i], dropout_rng);
        LossValue lv = cross_entropy(logits, data.labels[i]);
        lv.grad *= scale;
        backward(lv.grad);
        return std::pair{lv.loss, argmax(logits.values())};
      };
      EpochMetrics m = run_epoch(data.size(), data.labels, config, params, shuffle_rng, step, state.last_gamma);
      m.phase = phase;
      m.epoch = epoch + 1;
      state.epochs = epoch + 1;
      if (sink) sink(m);
    }
    state.rng_state = shuffle_rng.state();
    return state;
  };

  result.ifem = train_branch(
      "stage1.ifem", model.ifem_parameters(), 1,
      [&](const SampleInput& s, Rng& rng) { return model.ifem_logits(s.image, ops::Mode::train, rng); },
      [&](const Tensor& d) { model.ifem_backward(d); });
  result.ssrm = train_branch(
      "stage1.ssrm", model.ssrm_parameters(), 2,
      [&](const SampleInput& s, Rng& rng) { return model.ssrm_logits(s.scores, ops::Mode::train, rng); },
      [&](const Tensor& d) { model.ssrm_backward(d); });
  return result;
}

std::vector<NodeFeatures> extract_features(SpacoNet& model, const Dataset& data) {
  std::vector<NodeFeatures> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(model.features(s));
  return out;
}

TrainState train_stage2(SpacoNet& model, const std::vector<NodeFeatures>& features, std::span<const SceneLabel> labels,
                        const StageConfig& config, const MetricsSink& sink) {
  config.validate();
  if (features.size() != labels.size() || features.empty()) {
    fail(ErrorKind::data, "stage 2 needs one label per cached feature set and at least one sample");
  }
  set_frozen(model.backbone_parameters(), true);
  model.set_stage2_dropout(config.dropout);
  std::vector<NamedParameter> params = model.stage2_parameters();
  set_frozen(params, false);

  const Rng root = Rng(config.seed).split(3);
  Rng shuffle_rng = root.split(kShuffleStream);
  Rng dropout_rng = root.split(kDropoutStream);
  TrainState state;
  if (params.empty()) {
    // The baseline row reuses its stage-1 head; nothing is trained here.
    state.rng_state = shuffle_rng.state();
    return state;
  }
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    auto step = [&](std::size_t i, double scale) {
      const Tensor logits = model.logits(features[i], ops::Mode::train, dropout_rng);
      LossValue lv = cross_entropy(logits, labels[i]);
      lv.grad *= scale;
      model.backward(lv.grad);
      return std::pair{lv.loss, argmax(logits.values())};
    };
    EpochMetrics m = run_epoch(features.size(), labels, config, params, shuffle_rng, step, state.last_gamma);
    m.phase = std::string("stage2.") + to_string(model.config().variant);
    m.epoch = epoch + 1;
    state.epochs = epoch + 1;
    if (sink) sink(m);
  }
  state.rng_state = shuffle_rng.state();
  return state;
}

TrainState train_stage2(SpacoNet& model, const Dataset& data, const StageConfig& config, const MetricsSink& sink) {
  require_labels(data);
  set_frozen(model.backbone_parameters(), true);
  return train_stage2(model, extract_features(model, data), data.labels, config, sink);
}

std::vector<SceneLabel> predict(SpacoNet& model, const std::vector<NodeFeatures>& features) {
  Rng unused(0);
  std::vector<SceneLabel> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(argmax(model.logits(f, ops::Mode::eval, unused).values()));
  return out;
}

std::vector<SceneLabel> predict(SpacoNet& model, const Dataset& data) {
  return predict(model, extract_features(model, data));
}

AblationReport ablation_suite(const Dataset& train, const Dataset& test, const RunConfig& config,
                              const MetricsSink& sink) {
  config.validate();
  require_labels(train);
  require_labels(test);
  Rng init(config.seed);
  SpacoNet trained(config.model, init);
  train_stage1(trained, train, config.stage1, sink);
  set_frozen(trained.backbone_parameters(), true);
  const std::vector<NodeFeatures> train_features = extract_features(trained, train);
  const std::vector<NodeFeatures> test_features = extract_features(trained, test);

  static constexpr std::pair<Variant, const char*> kRows[] = {
      {Variant::baseline, "Baseline"},
      {Variant::ssrm, "+SSRM"},
      {Variant::encoder, "+Encoder"},
      {Variant::full, "+Decoder"},
  };
  AblationReport report;
  for (const auto& [variant, name] : kRows) {
    SpacoNet model = trained;  // every row starts from the same stage-1 state
    model.set_variant(variant);
    train_stage2(model, train_features, train.labels, config.stage2, sink);
    AblationRow row;
    row.variant = variant;
    row.name = name;
    row.predictions = predict(model, test_features);
    row.accuracy = top1_accuracy(row.predictions, test.labels);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::uint64_t parameter_hash(std::span<const NamedParameter> params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (const auto& np : params) {
    for (double v : np.param->value.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) mix(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return h;
}

}  // namespace spaconet
