#ifndef STUN_LAYERS_HPP_
#define STUN_LAYERS_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "stun/rng.hpp"
#include "stun/tensor.hpp"

namespace stun {

// A named array of values with its gradient accumulator. `trainable=false`
// excludes a block from optimizer updates (frozen normalization params);
// `buffer=true` marks persistent state that is not a parameter at all
// (running statistics).
struct ParamBlock {
  std::string name;
  std::vector<double> w;
  std::vector<double> g;
  bool trainable = true;
  bool buffer = false;

  void init(std::string n, std::size_t size, bool train = true,
            bool buf = false) {
    name = std::move(n);
    w.assign(size, 0.0);
    g.assign(size, 0.0);
    trainable = train;
    buffer = buf;
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

// 2-D convolution, square kernel, zero padding.
struct ConvLayer {
  int in_ch = 0, out_ch = 0, kernel = 3, stride = 2, pad = 1;
  ParamBlock W, b;

  void init(const std::string& name, int cin, int cout, Rng& rng, int k = 3,
            int s = 2, int p = 1) {
    in_ch = cin;
    out_ch = cout;
    kernel = k;
    stride = s;
    pad = p;
    W.init(name + ".weight", static_cast<std::size_t>(cout) * cin * k * k);
    b.init(name + ".bias", static_cast<std::size_t>(cout));
    const double std_he = std::sqrt(2.0 / (cin * k * k));
    for (double& v : W.w) v = rng.normal(0.0, std_he);
  }

  std::size_t out_dim(std::size_t in, int k, int s, int p) const {
    const long long o = (static_cast<long long>(in) + 2 * p - k) / s + 1;
    if (o < 1)
      throw std::invalid_argument("ConvLayer: input too small for kernel");
    return static_cast<std::size_t>(o);
  }

  Tensor forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != static_cast<std::size_t>(in_ch))
      throw std::invalid_argument("ConvLayer: bad input shape " +
                                  x.shape_str());
    const std::size_t hin = x.dim(1), win = x.dim(2);
    const std::size_t hout = out_dim(hin, kernel, stride, pad);
    const std::size_t wout = out_dim(win, kernel, stride, pad);
    Tensor y({static_cast<std::size_t>(out_ch), hout, wout});
    for (int o = 0; o < out_ch; ++o) {
      for (std::size_t i = 0; i < hout; ++i) {
        for (std::size_t j = 0; j < wout; ++j) {
          double acc = b.w[o];
          const long long i0 = static_cast<long long>(i) * stride - pad;
          const long long j0 = static_cast<long long>(j) * stride - pad;
          for (int c = 0; c < in_ch; ++c) {
            for (int u = 0; u < kernel; ++u) {
              const long long ii = i0 + u;
              if (ii < 0 || ii >= static_cast<long long>(hin)) continue;
              const double* xrow = &x.data[(c * hin + ii) * win];
              const double* wrow =
                  &W.w[((static_cast<std::size_t>(o) * in_ch + c) * kernel + u) *
                       kernel];
              for (int v = 0; v < kernel; ++v) {
                const long long jj = j0 + v;
                if (jj < 0 || jj >= static_cast<long long>(win)) continue;
                acc += wrow[v] * xrow[jj];
              }
            }
          }
          y.at(o, i, j) = acc;
        }
      }
    }
    return y;
  }

  // Accumulates parameter gradients and returns the input gradient.
  Tensor backward(const Tensor& x, const Tensor& gy) {
    const std::size_t hin = x.dim(1), win = x.dim(2);
    const std::size_t hout = gy.dim(1), wout = gy.dim(2);
    Tensor gx(x.shape);
    for (int o = 0; o < out_ch; ++o) {
      for (std::size_t i = 0; i < hout; ++i) {
        for (std::size_t j = 0; j < wout; ++j) {
          const double g = gy.at(o, i, j);
          if (g == 0.0) continue;
          b.g[o] += g;
          const long long i0 = static_cast<long long>(i) * stride - pad;
          const long long j0 = static_cast<long long>(j) * stride - pad;
          for (int c = 0; c < in_ch; ++c) {
            for (int u = 0; u < kernel; ++u) {
              const long long ii = i0 + u;
              if (ii < 0 || ii >= static_cast<long long>(hin)) continue;
              const double* xrow = &x.data[(c * hin + ii) * win];
              double* gxrow = &gx.data[(c * hin + ii) * win];
              const std::size_t wbase =
                  ((static_cast<std::size_t>(o) * in_ch + c) * kernel + u) *
                  kernel;
              for (int v = 0; v < kernel; ++v) {
                const long long jj = j0 + v;
                if (jj < 0 || jj >= static_cast<long long>(win)) continue;
                W.g[wbase + v] += g * xrow[jj];
                gxrow[jj] += g * W.w[wbase + v];
              }
            }
          }
        }
      }
    }
    return gx;
  }
};

// Per-channel normalization with running statistics. Parameters and
// statistics stay frozen during training (standard practice for this
// pipeline); statistics are set once from data before training starts.
struct BatchNormLayer {
  int channels = 0;
  double eps = 1e-5;
  ParamBlock gamma, beta;
  ParamBlock running_mean, running_var;

  void init(const std::string& name, int ch) {
    channels = ch;
    gamma.init(name + ".gamma", ch, /*train=*/false);
    beta.init(name + ".beta", ch, /*train=*/false);
    running_mean.init(name + ".running_mean", ch, false, /*buf=*/true);
    running_var.init(name + ".running_var", ch, false, /*buf=*/true);
    std::fill(gamma.w.begin(), gamma.w.end(), 1.0);
    std::fill(running_var.w.begin(), running_var.w.end(), 1.0);
  }

  Tensor forward(const Tensor& x) const {
    Tensor y(x.shape);
    const std::size_t hw = x.dim(1) * x.dim(2);
    for (int c = 0; c < channels; ++c) {
      const double inv = 1.0 / std::sqrt(running_var.w[c] + eps);
      const double scale = gamma.w[c] * inv;
      const double shift = beta.w[c] - running_mean.w[c] * scale;
      const double* xp = &x.data[c * hw];
      double* yp = &y.data[c * hw];
      for (std::size_t i = 0; i < hw; ++i) yp[i] = xp[i] * scale + shift;
    }
    return y;
  }

  Tensor backward(const Tensor& gy) const {
    Tensor gx(gy.shape);
    const std::size_t hw = gy.dim(1) * gy.dim(2);
    for (int c = 0; c < channels; ++c) {
      const double scale = gamma.w[c] / std::sqrt(running_var.w[c] + eps);
      const double* gp = &gy.data[c * hw];
      double* xp = &gx.data[c * hw];
      for (std::size_t i = 0; i < hw; ++i) xp[i] = gp[i] * scale;
    }
    return gx;
  }

  // One-shot statistics calibration from a set of feature maps.
  void set_stats_from(const std::vector<Tensor>& maps) {
    std::vector<double> mean(channels, 0.0), var(channels, 0.0);
    std::size_t count = 0;
    for (const Tensor& m : maps) {
      const std::size_t hw = m.dim(1) * m.dim(2);
      count += hw;
      for (int c = 0; c < channels; ++c) {
        const double* p = &m.data[c * hw];
        for (std::size_t i = 0; i < hw; ++i) mean[c] += p[i];
      }
    }
    if (count == 0) return;
    for (int c = 0; c < channels; ++c) mean[c] /= static_cast<double>(count);
    for (const Tensor& m : maps) {
      const std::size_t hw = m.dim(1) * m.dim(2);
      for (int c = 0; c < channels; ++c) {
        const double* p = &m.data[c * hw];
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - mean[c];
          var[c] += d * d;
        }
      }
    }
    for (int c = 0; c < channels; ++c) {
      running_mean.w[c] = mean[c];
      running_var.w[c] = var[c] / static_cast<double>(count);
    }
  }
};

inline Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

inline Tensor relu_backward(const Tensor& out, const Tensor& gy) {
  Tensor gx(gy.shape);
  for (std::size_t i = 0; i < gy.size(); ++i)
    gx.data[i] = out.data[i] > 0.0 ? gy.data[i] : 0.0;
  return gx;
}

// Inverted dropout: active passes scale kept units by 1/(1-rate) so that
// deterministic inference needs no rescaling.
struct DropoutLayer {
  double rate = 0.0;

  Tensor forward(const Tensor& x, Rng& rng, Tensor* mask_out) const {
    Tensor y(x.shape);
    Tensor mask(x.shape);
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double m = rng.uniform() < rate ? 0.0 : 1.0;
      mask.data[i] = m;
      y.data[i] = x.data[i] * m / keep;
    }
    if (mask_out) *mask_out = std::move(mask);
    return y;
  }

  Tensor backward(const Tensor& mask, const Tensor& gy) const {
    Tensor gx(gy.shape);
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx.data[i] = gy.data[i] * mask.data[i] / keep;
    return gx;
  }
};

// Generalized-mean pooling over the spatial grid: per channel,
// (mean of x^p)^(1/p) on nonnegative activations. p=1 is average pooling,
// large p approaches max pooling.
struct GemPool {
  double p = 3.0;
  bool average = false;  // plain average-pooling variant

  std::vector<double> forward(const Tensor& x) const {
    const std::size_t ch = x.dim(0), hw = x.dim(1) * x.dim(2);
    std::vector<double> y(ch, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
      const double* xp = &x.data[c * hw];
      double s = 0.0;
      if (average) {
        for (std::size_t i = 0; i < hw; ++i) s += xp[i];
        y[c] = s / static_cast<double>(hw);
      } else {
        for (std::size_t i = 0; i < hw; ++i) {
          const double v = xp[i] > 0.0 ? xp[i] : 0.0;
          s += std::pow(v, p);
        }
        y[c] = std::pow(s / static_cast<double>(hw), 1.0 / p);
      }
    }
    return y;
  }

  Tensor backward(const Tensor& x, const std::vector<double>& y,
                  const std::vector<double>& gy) const {
    Tensor gx(x.shape);
    const std::size_t ch = x.dim(0), hw = x.dim(1) * x.dim(2);
    for (std::size_t c = 0; c < ch; ++c) {
      const double* xp = &x.data[c * hw];
      double* gp = &gx.data[c * hw];
      if (average) {
        const double g = gy[c] / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) gp[i] = g;
      } else {
        if (y[c] <= 0.0) continue;
        const double scale =
            gy[c] * std::pow(y[c], 1.0 - p) / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) {
          if (xp[i] <= 0.0) continue;
          gp[i] = scale * std::pow(xp[i], p - 1.0);
        }
      }
    }
    return gx;
  }
};

struct LinearLayer {
  int in_dim = 0, out_dim = 0;
  ParamBlock W, b;

  void init(const std::string& name, int in, int out, Rng& rng,
            double weight_scale = -1.0) {
    in_dim = in;
    out_dim = out;
    W.init(name + ".weight", static_cast<std::size_t>(in) * out);
    b.init(name + ".bias", static_cast<std::size_t>(out));
    const double s =
        weight_scale > 0.0 ? weight_scale : std::sqrt(1.0 / in);
    for (double& v : W.w) v = rng.uniform(-s, s);
  }

  std::vector<double> forward(const std::vector<double>& x) const {
    if (x.size() != static_cast<std::size_t>(in_dim))
      throw std::invalid_argument("LinearLayer: bad input dimension");
    std::vector<double> y(out_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
      const double* wrow = &W.w[static_cast<std::size_t>(o) * in_dim];
      double acc = b.w[o];
      for (int i = 0; i < in_dim; ++i) acc += wrow[i] * x[i];
      y[o] = acc;
    }
    return y;
  }

  std::vector<double> backward(const std::vector<double>& x,
                               const std::vector<double>& gy) {
    std::vector<double> gx(in_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
      const double g = gy[o];
      if (g == 0.0) continue;
      b.g[o] += g;
      double* gw = &W.g[static_cast<std::size_t>(o) * in_dim];
      const double* wrow = &W.w[static_cast<std::size_t>(o) * in_dim];
      for (int i = 0; i < in_dim; ++i) {
        gw[i] += g * x[i];
        gx[i] += g * wrow[i];
      }
    }
    return gx;
  }
};

inline std::vector<double> l2_normalize(const std::vector<double>& x,
                                        double* norm_out = nullptr) {
  double n = l2_norm(x);
  if (n < 1e-12) n = 1e-12;
  if (norm_out) *norm_out = n;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
  return y;
}

// gx = (gy - (gy . y) y) / ||x||
inline std::vector<double> l2_normalize_backward(const std::vector<double>& y,
                                                 double norm,
                                                 const std::vector<double>& gy) {
  const double proj = dot(gy, y);
  std::vector<double> gx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    gx[i] = (gy[i] - proj * y[i]) / norm;
  return gx;
}

inline std::vector<double> sigmoid(const std::vector<double>& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

inline std::vector<double> sigmoid_backward(const std::vector<double>& y,
                                            const std::vector<double>& gy) {
  std::vector<double> gx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    gx[i] = gy[i] * y[i] * (1.0 - y[i]);
  return gx;
}

}  // namespace stun

#endif  // STUN_LAYERS_HPP_
