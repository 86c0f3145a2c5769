#include "spaconet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace spaconet {

void LabelMap::validate() const {
  if (cells.size() != height * width) {
    fail(ErrorKind::dimension, "label map has " + std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(height * width));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] >= num_classes) {
      fail(ErrorKind::data, "label " + std::to_string(cells[i]) + " at cell " + std::to_string(i) +
                                " is outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

namespace ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorKind::dimension, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                   shape_string(t.shape()));
  }
}

// Source coordinate for a destination center under half-pixel alignment.
double source_coord(std::size_t dst, std::size_t in, std::size_t out) {
  const double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(src, 0.0, static_cast<double>(in - 1));
}

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t d = 0; d < out; ++d) {
    const double src = source_coord(d, in, out);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    fail(ErrorKind::dimension,
         "matmul: inner dimensions differ, " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (da) {
    // da[i,p] += sum_j dy[i,j] b[p,j]
    for (std::size_t i = 0; i < m; ++i) {
      const double* dyrow = dy.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b.data() + p * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += dyrow[j] * brow[j];
        (*da)[i * k + p] += s;
      }
    }
  }
  if (db) {
    // db[p,j] += sum_i a[i,p] dy[i,j]
    for (std::size_t i = 0; i < m; ++i) {
      const double* dyrow = dy.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        double* dbrow = db->data() + p * n;
        for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dyrow[j];
      }
    }
  }
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (bias.size() != y.dim(1)) {
    fail(ErrorKind::dimension, "linear: bias " + shape_string(bias.shape()) + " vs output " + shape_string(y.shape()));
  }
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < y.dim(1); ++j) y.at(i, j) += bias[j];
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& dbias) {
  Tensor dx(x.shape());
  matmul_backward(x, w, dy, &dx, &dw);
  for (std::size_t i = 0; i < dy.dim(0); ++i)
    for (std::size_t j = 0; j < dy.dim(1); ++j) dbias[j] += dy.at(i, j);
  return dx;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) fail(ErrorKind::dimension, "softmax over an empty axis");
  const std::size_t n = x.shape().back();
  Tensor y(x.shape());
  for (std::size_t base = 0; base < x.size(); base += n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[base + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[base + j] = std::exp(x[base + j] - mx);
      total += y[base + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[base + j] /= total;
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  const std::size_t n = y.shape().back();
  Tensor dx(y.shape());
  for (std::size_t base = 0; base < y.size(); base += n) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += y[base + j] * dy[base + j];
    for (std::size_t j = 0; j < n; ++j) dx[base + j] = y[base + j] * (dy[base + j] - dot);
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, LayerNormCache* cache) {
  require_rank(x, 2, "layer_norm");
  if (eps <= 0.0) fail(ErrorKind::argument, "layer_norm: eps must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (gamma.size() != c || beta.size() != c) {
    fail(ErrorKind::dimension, "layer_norm: affine size does not match " + shape_string(x.shape()));
  }
  Tensor y(x.shape());
  Tensor normalized(x.shape());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      normalized.at(i, j) = (x.at(i, j) - mean) * inv_std[i];
      y.at(i, j) = gamma[j] * normalized.at(i, j) + beta[j];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dgamma,
                           Tensor& dbeta) {
  const std::size_t n = dy.dim(0), c = dy.dim(1);
  const double inv_c = 1.0 / static_cast<double>(c);
  Tensor dx(dy.shape());
  std::vector<double> dxhat(c);
  for (std::size_t i = 0; i < n; ++i) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = cache.normalized.at(i, j);
      dgamma[j] += dy.at(i, j) * xhat;
      dbeta[j] += dy.at(i, j);
      dxhat[j] = dy.at(i, j) * gamma[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xhat;
    }
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = cache.normalized.at(i, j);
      dx.at(i, j) = cache.inv_std[i] * (dxhat[j] - inv_c * sum_dxhat - xhat * inv_c * sum_dxhat_xhat);
    }
  }
  return dx;
}

Tensor max_pool2d(const Tensor& x, std::size_t k, std::size_t s, std::vector<std::size_t>* argmax) {
  require_rank(x, 3, "max_pool2d");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (k == 0 || s == 0) fail(ErrorKind::argument, "max_pool2d: window and stride must be positive");
  if (k > h || k > w) {
    fail(ErrorKind::dimension, "max_pool2d: window " + std::to_string(k) + " larger than input " +
                                   shape_string(x.shape()));
  }
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Tensor y({oh, ow, c});
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = (oy * s * w + ox * s) * c + ch;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = ((oy * s + ky) * w + ox * s + kx) * c + ch;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t out = (oy * ow + ox) * c + ch;
        y[out] = x[best];
        if (argmax) (*argmax)[out] = best;
      }
    }
  }
  return y;
}

Tensor max_pool2d_backward(const Tensor& dy, const Shape& input_shape, const std::vector<std::size_t>& argmax) {
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t cells = x.dim(0) * x.dim(1), c = x.dim(2);
  if (cells == 0) fail(ErrorKind::dimension, "global_avg_pool on an empty grid");
  Tensor y({c});
  for (std::size_t p = 0; p < cells; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) y[ch] += x[p * c + ch];
  for (std::size_t ch = 0; ch < c; ++ch) y[ch] /= static_cast<double>(cells);
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, const Shape& input_shape) {
  Tensor dx(input_shape);
  const std::size_t cells = input_shape[0] * input_shape[1], c = input_shape[2];
  const double scale = 1.0 / static_cast<double>(cells);
  for (std::size_t p = 0; p < cells; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) dx[p * c + ch] = dy[ch] * scale;
  return dx;
}

Tensor global_max_pool(const Tensor& x, std::vector<std::size_t>* argmax) {
  require_rank(x, 3, "global_max_pool");
  const std::size_t cells = x.dim(0) * x.dim(1), c = x.dim(2);
  Tensor y({c});
  std::vector<std::size_t> best(c);
  for (std::size_t ch = 0; ch < c; ++ch) best[ch] = ch;
  for (std::size_t p = 1; p < cells; ++p)
    for (std::size_t ch = 0; ch < c; ++ch)
      if (x[p * c + ch] > x[best[ch]]) best[ch] = p * c + ch;
  for (std::size_t ch = 0; ch < c; ++ch) y[ch] = x[best[ch]];
  if (argmax) *argmax = std::move(best);
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d kernel");
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::size_t k = w.dim(0), cout = w.dim(3);
  if (w.dim(1) != k || w.dim(2) != cin) {
    fail(ErrorKind::dimension, "conv2d: kernel " + shape_string(w.shape()) + " incompatible with input " +
                                   shape_string(x.shape()));
  }
  if (bias.size() != cout) fail(ErrorKind::dimension, "conv2d: bias size does not match output channels");
  if (stride == 0) fail(ErrorKind::argument, "conv2d: stride must be positive");
  if (k > h + 2 * pad || k > wd + 2 * pad) {
    fail(ErrorKind::dimension, "conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                                   shape_string(x.shape()));
  }
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({oh, ow, cout});
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* out = y.data() + (oy * ow + ox) * cout;
      for (std::size_t co = 0; co < cout; ++co) out[co] = bias[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
          const double* in = x.data() + (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * cin;
          const double* wk = w.data() + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = in[ci];
            const double* wrow = wk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) out[co] += xv * wrow[co];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, std::size_t stride, std::size_t pad,
                       Tensor& dw, Tensor& dbias) {
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::size_t k = w.dim(0), cout = w.dim(3);
  const std::size_t oh = dy.dim(0), ow = dy.dim(1);
  Tensor dx(x.shape());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* g = dy.data() + (oy * ow + ox) * cout;
      for (std::size_t co = 0; co < cout; ++co) dbias[co] += g[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
          const std::size_t in_off = (static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix)) * cin;
          const double* in = x.data() + in_off;
          double* din = dx.data() + in_off;
          const std::size_t w_off = (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = in[ci];
            const double* wrow = w.data() + w_off + ci * cout;
            double* dwrow = dw.data() + w_off + ci * cout;
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) {
              dwrow[co] += xv * g[co];
              acc += wrow[co] * g[co];
            }
            din[ci] += acc;
          }
        }
      }
    }
  }
  return dx;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) fail(ErrorKind::argument, "bilinear_resize: output size must be positive");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor y({out_h, out_w, c});
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1, fy] = ty[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1, fx] = tx[ox];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        y.at(oy, ox, ch) = w00 * x.at(y0, x0, ch) + w01 * x.at(y0, x1, ch) + w10 * x.at(y1, x0, ch) +
                           w11 * x.at(y1, x1, ch);
      }
    }
  }
  return y;
}

Tensor bilinear_resize_backward(const Tensor& dy, const Shape& input_shape) {
  const std::size_t h = input_shape[0], w = input_shape[1], c = input_shape[2];
  const std::size_t out_h = dy.dim(0), out_w = dy.dim(1);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor dx(input_shape);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const auto [y0, y1, fy] = ty[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const auto [x0, x1, fx] = tx[ox];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx, w10 = fy * (1 - fx), w11 = fy * fx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = dy.at(oy, ox, ch);
        dx.at(y0, x0, ch) += w00 * g;
        dx.at(y0, x1, ch) += w01 * g;
        dx.at(y1, x0, ch) += w10 * g;
        dx.at(y1, x1, ch) += w11 * g;
      }
    }
  }
  return dx;
}

LabelMap nearest_resize_labels(const LabelMap& labels, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) fail(ErrorKind::argument, "nearest_resize_labels: output size must be positive");
  auto pick = [](std::size_t dst, std::size_t in, std::size_t out) {
    const double src = source_coord(dst, in, out);
    return std::min(static_cast<std::size_t>(std::floor(src + 0.5)), in - 1);
  };
  LabelMap out(out_h, out_w, labels.num_classes);
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t si = pick(i, labels.height, out_h);
    for (std::size_t j = 0; j < out_w; ++j) out.at(i, j) = labels.at(si, pick(j, labels.width, out_w));
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(ErrorKind::config, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  const double inner = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

}  // namespace

Tensor activate(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case Activation::relu: y[i] = x[i] > 0.0 ? x[i] : 0.0; break;
      case Activation::gelu: y[i] = gelu(x[i]); break;
      case Activation::sigmoid: y[i] = sigmoid(x[i]); break;
    }
  }
  return y;
}

Tensor activate_backward(const Tensor& x, const Tensor& dy, Activation kind) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case Activation::relu: dx[i] = x[i] > 0.0 ? dy[i] : 0.0; break;
      case Activation::gelu: dx[i] = dy[i] * gelu_grad(x[i]); break;
      case Activation::sigmoid: {
        const double s = sigmoid(x[i]);
        dx[i] = dy[i] * s * (1.0 - s);
        break;
      }
    }
  }
  return dx;
}

Tensor elementwise_max(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_max");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = std::max(a[i], b[i]);
  return y;
}

void elementwise_max_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor& da, Tensor& db) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) {
      da[i] += dy[i];
    } else if (b[i] > a[i]) {
      db[i] += dy[i];
    } else {
      da[i] += 0.5 * dy[i];
      db[i] += 0.5 * dy[i];
    }
  }
}

}  // namespace ops
}  // namespace spaconet
