#include "spaconet/feature_extractors.hpp"

#include <bit>

namespace spaconet {
namespace {

std::size_t down_kernel(std::size_t stride) { return stride <= 2 ? 3 : stride; }
std::size_t down_pad(std::size_t stride) { return stride <= 2 ? 1 : 0; }

Tensor relu_mask_grad(const Tensor& pre, const Tensor& dy) {
  return ops::activate_backward(pre, dy, ops::Activation::relu);
}

}  // namespace

std::size_t BackboneConfig::downsample() const {
  std::size_t f = 1;
  for (auto s : strides) f *= s;
  return f;
}

void BackboneConfig::validate() const {
  if (widths.empty()) fail(ErrorKind::config, "backbone needs at least one stage");
  if (strides.size() != widths.size() || blocks.size() != widths.size()) {
    fail(ErrorKind::config, "backbone widths, strides and blocks must have one entry per stage");
  }
  if (in_channels == 0) fail(ErrorKind::config, "backbone input channels must be positive");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) fail(ErrorKind::config, "backbone stage width must be positive");
    if (strides[i] == 0) fail(ErrorKind::config, "backbone stride must be positive");
    if (channel_attention && (cham_reduction == 0 || widths[i] % cham_reduction != 0)) {
      fail(ErrorKind::config, "cham_reduction " + std::to_string(cham_reduction) + " must divide stage width " +
                                  std::to_string(widths[i]));
    }
  }
}

BackboneConfig default_ifem_config(std::size_t channels, std::size_t factor) {
  if (factor < 4 || !std::has_single_bit(factor)) {
    fail(ErrorKind::config, "downsample factor must be a power of two >= 4, got " + std::to_string(factor));
  }
  BackboneConfig c;
  c.in_channels = 3;
  c.widths = {16, 32, channels};
  c.strides = {factor / 4, 2, 2};
  c.blocks = {0, 1, 1};
  c.channel_attention = false;
  return c;
}

BackboneConfig default_ssrm_config(std::size_t objects, std::size_t channels, std::size_t factor) {
  BackboneConfig c = default_ifem_config(channels, factor);
  c.in_channels = objects;
  c.channel_attention = true;
  c.cham_reduction = 4;
  return c;
}

// ---- channel attention -----------------------------------------------------

ChannelAttention::ChannelAttention(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    fail(ErrorKind::config, "channel attention reduction must divide the channel count");
  }
  const std::size_t hidden = channels / reduction;
  w1 = Parameter(kaiming_normal({channels, hidden}, channels, rng));
  b1 = Parameter(Tensor({hidden}));
  w2 = Parameter(kaiming_normal({hidden, channels}, hidden, rng));
  b2 = Parameter(Tensor({channels}));
}

Tensor ChannelAttention::mlp(Branch& branch, const Tensor& pooled) {
  branch.pooled = pooled.reshaped({1, pooled.size()});
  branch.pre = ops::linear(branch.pooled, w1.value, b1.value);
  branch.hidden = ops::activate(branch.pre, ops::Activation::relu);
  return ops::linear(branch.hidden, w2.value, b2.value);
}

Tensor ChannelAttention::mlp_backward(const Branch& branch, const Tensor& dz) {
  Tensor dhidden = ops::linear_backward(branch.hidden, w2.value, dz, w2.grad, b2.grad);
  Tensor dpre = relu_mask_grad(branch.pre, dhidden);
  return ops::linear_backward(branch.pooled, w1.value, dpre, w1.grad, b1.grad);
}

Tensor ChannelAttention::forward(const Tensor& grid) {
  input_ = grid;
  const std::size_t c = grid.dim(2);
  Tensor z = mlp(avg_, ops::global_avg_pool(grid));
  z += mlp(max_, ops::global_max_pool(grid, &max_index_));
  scale_ = ops::activate(z, ops::Activation::sigmoid).reshaped({c});
  Tensor out(grid.shape());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i] * scale_[i % c];
  return out;
}

Tensor ChannelAttention::backward(const Tensor& dy) {
  const std::size_t c = input_.dim(2);
  Tensor dx(input_.shape());
  Tensor dz({1, c});
  for (std::size_t i = 0; i < dy.size(); ++i) {
    dx[i] = dy[i] * scale_[i % c];
    dz[i % c] += dy[i] * input_[i];
  }
  for (std::size_t ch = 0; ch < c; ++ch) dz[ch] *= scale_[ch] * (1.0 - scale_[ch]);

  const Tensor davg = mlp_backward(avg_, dz);
  const Tensor dmax = mlp_backward(max_, dz);
  dx += ops::global_avg_pool_backward(davg.reshaped({c}), input_.shape());
  for (std::size_t ch = 0; ch < c; ++ch) dx[max_index_[ch]] += dmax[ch];
  return dx;
}

void ChannelAttention::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  collect(out, prefix, "w1", w1);
  collect(out, prefix, "b1", b1);
  collect(out, prefix, "w2", w2);
  collect(out, prefix, "b2", b2);
}

Tensor cham(const Tensor& grid, ChannelAttention& attention) { return attention.forward(grid); }

// ---- residual block --------------------------------------------------------

ResidualBlock::ResidualBlock(std::size_t channels, Rng& rng)
    : conv1(3, channels, channels, 1, 1, rng), conv2(3, channels, channels, 1, 1, rng) {}

Tensor ResidualBlock::forward(const Tensor& x) {
  pre1_ = conv1.forward(x);
  sum_ = conv2.forward(ops::activate(pre1_, ops::Activation::relu));
  sum_ += x;
  return ops::activate(sum_, ops::Activation::relu);
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  const Tensor dsum = relu_mask_grad(sum_, dy);
  Tensor dx = conv1.backward(relu_mask_grad(pre1_, conv2.backward(dsum)));
  dx += dsum;
  return dx;
}

void ResidualBlock::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  conv1.parameters(out, prefix + "conv1.");
  conv2.parameters(out, prefix + "conv2.");
}

// ---- backbone --------------------------------------------------------------

Backbone::Backbone(BackboneConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.in_channels;
  for (std::size_t s = 0; s < config_.widths.size(); ++s) {
    const std::size_t width = config_.widths[s], stride = config_.strides[s];
    Stage stage;
    stage.down = Conv2d(down_kernel(stride), in, width, stride, down_pad(stride), rng);
    for (std::size_t b = 0; b < config_.blocks[s]; ++b) stage.blocks.emplace_back(width, rng);
    stage.attention = config_.channel_attention;
    if (stage.attention) stage.cham = ChannelAttention(width, config_.cham_reduction, rng);
    stages.push_back(std::move(stage));
    in = width;
  }
}

FeatureGrid Backbone::forward(const Tensor& input) {
  if (input.rank() != 3 || input.dim(2) != config_.in_channels) {
    fail(ErrorKind::config, "backbone expects H x W x " + std::to_string(config_.in_channels) + " input, got " +
                                shape_string(input.shape()));
  }
  const std::size_t factor = config_.downsample();
  if (input.dim(0) % factor != 0 || input.dim(1) % factor != 0) {
    fail(ErrorKind::dimension, "backbone input " + shape_string(input.shape()) +
                                   " is not divisible by the downsample factor " + std::to_string(factor));
  }
  Tensor x = input;
  for (auto& stage : stages) {
    stage.pre = stage.down.forward(x);
    x = ops::activate(stage.pre, ops::Activation::relu);
    for (auto& block : stage.blocks) x = block.forward(x);
    if (stage.attention) x = stage.cham.forward(x);
  }
  return {std::move(x), factor};
}

Tensor Backbone::backward(const Tensor& dgrid) {
  Tensor g = dgrid;
  for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
    if (it->attention) g = it->cham.backward(g);
    for (auto b = it->blocks.rbegin(); b != it->blocks.rend(); ++b) g = b->backward(g);
    g = it->down.backward(relu_mask_grad(it->pre, g));
  }
  return g;
}

void Backbone::parameters(std::vector<NamedParameter>& out, const std::string& prefix) {
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string p = prefix + "stage" + std::to_string(s) + ".";
    stages[s].down.parameters(out, p + "down.");
    for (std::size_t b = 0; b < stages[s].blocks.size(); ++b)
      stages[s].blocks[b].parameters(out, p + "block" + std::to_string(b) + ".");
    if (stages[s].attention) stages[s].cham.parameters(out, p + "cham.");
  }
}

void Backbone::set_frozen(bool frozen) {
  std::vector<NamedParameter> params;
  parameters(params, "");
  for (auto& np : params) np.param->frozen = frozen;
}

FeatureGrid ssrm_forward(const ScoreTensor& filtered, Backbone& ssrm) { return ssrm.forward(filtered.data()); }

FeatureGrid ifem_forward(const Tensor& image, Backbone& ifem) { return ifem.forward(image); }

FeatureGrid align_spatial(const FeatureGrid& spatial, std::size_t height, std::size_t width) {
  if (spatial.height() == height && spatial.width() == width) return spatial;
  // The resulting grid lives on the target grid; its factor is no longer tied to
  // the source, so record the ratio implied by the resize.
  const std::size_t factor = spatial.downsample * spatial.height() / height;
  return {ops::bilinear_resize(spatial.data, height, width), factor == 0 ? 1 : factor};
}

Tensor PooledHead::forward(const FeatureGrid& grid, ops::Mode mode, Rng& rng) {
  grid_shape_ = grid.data.shape();
  return head.forward(ops::global_avg_pool(grid.data), mode, rng);
}

Tensor PooledHead::backward(const Tensor& dlogits) {
  return ops::global_avg_pool_backward(head.backward(dlogits), grid_shape_);
}

Tensor baseline_head(const FeatureGrid& image_features, PooledHead& head) {
  Rng unused(0);
  return head.forward(image_features, ops::Mode::eval, unused);
}

}  // namespace spaconet
