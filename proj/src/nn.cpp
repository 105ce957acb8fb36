#include "thzlab/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace thzlab::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

thread_local bool g_track_kinks = false;
thread_local std::uint64_t g_kink_digest = 0;

std::size_t numel(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

void add_vec(Vec& acc, const Vec& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

} // namespace

NnTensor::NnTensor(int n_, int c_, int h_, int w_, double fill)
    : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

Param::Param(std::string name_, std::vector<int> shape_)
    : name(std::move(name_)), shape(std::move(shape_)), value(numel(shape), 0.0), grad(value.size(), 0.0),
      m(value.size(), 0.0), v(value.size(), 0.0) {}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void he_init(Param& p, int fan_in, Rng& rng) {
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
  for (auto& x : p.value) x = d(rng);
}

void reset_kink_digest() {
  g_track_kinks = true;
  g_kink_digest = 0;
}

std::uint64_t kink_digest() { return g_kink_digest; }

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(const std::string& name, int cin, int cout, int kernel, bool bias)
    : weight(name + ".weight", {cout, cin, kernel, kernel}), cin_(cin), cout_(cout), k_(kernel), has_bias_(bias) {
  if (cin <= 0 || cout <= 0) throw std::invalid_argument("conv2d: channel counts must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (bias) this->bias = Param(name + ".bias", {cout});
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

NnTensor Conv2d::forward(const NnTensor& x) {
  if (x.c != cin_) throw std::invalid_argument("conv2d: input has " + std::to_string(x.c) + " channels, expected " +
                                               std::to_string(cin_));
  x_ = x;
  const int H = x.h, W = x.w, pad = k_ / 2;
  const auto hw = static_cast<Eigen::Index>(x.plane());
  const int kk = cin_ * k_ * k_;
  NnTensor y(x.n, cout_, H, W);
  CMap Wm(weight.value.data(), cout_, kk);
  if (k_ > 1) cols_.assign(static_cast<std::size_t>(x.n) * kk * hw, 0.0);
  for (int b = 0; b < x.n; ++b) {
    const double* src = x.at(b, 0);
    if (k_ > 1) {
      double* cols = cols_.data() + static_cast<std::size_t>(b) * kk * hw;
      for (int c = 0; c < cin_; ++c)
        for (int di = 0; di < k_; ++di)
          for (int dj = 0; dj < k_; ++dj) {
            double* row = cols + (static_cast<std::size_t>(c) * k_ * k_ + di * k_ + dj) * hw;
            const double* plane = src + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < H; ++i) {
              const int si = i + di - pad;
              if (si < 0 || si >= H) continue;
              for (int j = 0; j < W; ++j) {
                const int sj = j + dj - pad;
                if (sj >= 0 && sj < W) row[i * W + j] = plane[si * W + sj];
              }
            }
          }
      src = cols;
    }
    MMap Y(y.at(b, 0), cout_, hw);
    Y.noalias() = Wm * CMap(src, kk, hw);
    if (has_bias_)
      for (int o = 0; o < cout_; ++o) Y.row(o).array() += bias.value[static_cast<std::size_t>(o)];
  }
  return y;
}

NnTensor Conv2d::backward(const NnTensor& dy) {
  if (dy.n != x_.n || dy.c != cout_ || dy.h != x_.h || dy.w != x_.w) throw std::invalid_argument("conv2d: bad gradient shape");
  const int H = x_.h, W = x_.w, pad = k_ / 2;
  const auto hw = static_cast<Eigen::Index>(x_.plane());
  const int kk = cin_ * k_ * k_;
  NnTensor dx(x_.n, cin_, H, W);
  CMap Wm(weight.value.data(), cout_, kk);
  MMap dW(weight.grad.data(), cout_, kk);
  Vec dcols(k_ > 1 ? static_cast<std::size_t>(kk) * hw : 0);
  for (int b = 0; b < x_.n; ++b) {
    CMap dY(dy.at(b, 0), cout_, hw);
    const double* cols = k_ > 1 ? cols_.data() + static_cast<std::size_t>(b) * kk * hw : x_.at(b, 0);
    dW.noalias() += dY * CMap(cols, kk, hw).transpose();
    if (has_bias_)
      for (int o = 0; o < cout_; ++o) bias.grad[static_cast<std::size_t>(o)] += dY.row(o).sum();
    if (k_ == 1) {
      MMap(dx.at(b, 0), cin_, hw).noalias() = Wm.transpose() * dY;
      continue;
    }
    MMap(dcols.data(), kk, hw).noalias() = Wm.transpose() * dY;
    double* dst = dx.at(b, 0);
    for (int c = 0; c < cin_; ++c)
      for (int di = 0; di < k_; ++di)
        for (int dj = 0; dj < k_; ++dj) {
          const double* row = dcols.data() + (static_cast<std::size_t>(c) * k_ * k_ + di * k_ + dj) * hw;
          double* plane = dst + static_cast<std::size_t>(c) * hw;
          for (int i = 0; i < H; ++i) {
            const int si = i + di - pad;
            if (si < 0 || si >= H) continue;
            for (int j = 0; j < W; ++j) {
              const int sj = j + dj - pad;
              if (sj >= 0 && sj < W) plane[si * W + sj] += row[i * W + j];
            }
          }
        }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
      running_mean{name + ".running_mean", Vec(static_cast<std::size_t>(channels), 0.0)},
      running_var{name + ".running_var", Vec(static_cast<std::size_t>(channels), 1.0)} {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
}

void BatchNorm2d::collect(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::collect(std::vector<Buffer*>& out) {
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

NnTensor BatchNorm2d::forward(const NnTensor& x) {
  const int C = x.c;
  if (static_cast<std::size_t>(C) != gamma.size()) throw std::invalid_argument("batchnorm: channel mismatch");
  const std::size_t hw = x.plane();
  const double M = static_cast<double>(x.n) * static_cast<double>(hw);
  if (training && M < 2) throw std::invalid_argument("batchnorm: training needs batch*H*W >= 2");
  cached_training_ = training;
  NnTensor y(x.n, x.c, x.h, x.w);
  xhat_.assign(x.size(), 0.0);
  invstd_.assign(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    double mean, var;
    if (training) {
      double s = 0;
      for (int b = 0; b < x.n; ++b)
        for (std::size_t i = 0; i < hw; ++i) s += x.at(b, c)[i];
      mean = s / M;
      double ss = 0;
      for (int b = 0; b < x.n; ++b)
        for (std::size_t i = 0; i < hw; ++i) ss += (x.at(b, c)[i] - mean) * (x.at(b, c)[i] - mean);
      var = ss / M;
      running_mean.value[uc] = (1 - momentum) * running_mean.value[uc] + momentum * mean;
      running_var.value[uc] = (1 - momentum) * running_var.value[uc] + momentum * var * M / (M - 1);
    } else {
      mean = running_mean.value[uc];
      var = running_var.value[uc];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    invstd_[uc] = inv;
    for (int b = 0; b < x.n; ++b) {
      const double* src = x.at(b, c);
      double* dst = y.at(b, c);
      double* xh = xhat_.data() + (static_cast<std::size_t>(b) * C + uc) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gamma.value[uc] * xh[i] + beta.value[uc];
      }
    }
  }
  return y;
}

NnTensor BatchNorm2d::backward(const NnTensor& dy) {
  const int C = dy.c;
  const std::size_t hw = dy.plane();
  const double M = static_cast<double>(dy.n) * static_cast<double>(hw);
  NnTensor dx(dy.n, dy.c, dy.h, dy.w);
  for (int c = 0; c < C; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    double sdy = 0, sdyx = 0;
    for (int b = 0; b < dy.n; ++b) {
      const double* g = dy.at(b, c);
      const double* xh = xhat_.data() + (static_cast<std::size_t>(b) * C + uc) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sdy += g[i];
        sdyx += g[i] * xh[i];
      }
    }
    gamma.grad[uc] += sdyx;
    beta.grad[uc] += sdy;
    const double k = gamma.value[uc] * invstd_[uc];
    for (int b = 0; b < dy.n; ++b) {
      const double* g = dy.at(b, c);
      const double* xh = xhat_.data() + (static_cast<std::size_t>(b) * C + uc) * hw;
      double* d = dx.at(b, c);
      if (cached_training_)
        for (std::size_t i = 0; i < hw; ++i) d[i] = k / M * (M * g[i] - sdy - xh[i] * sdyx);
      else
        for (std::size_t i = 0; i < hw; ++i) d[i] = k * g[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise

NnTensor ReLU::forward(const NnTensor& x) {
  NnTensor y = x;
  mask_.assign(x.size(), 0);
  std::uint64_t h = g_kink_digest;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x.data[i] > 0;
    mask_[i] = on;
    if (!on) y.data[i] = 0;
    if (g_track_kinks) h = (h ^ static_cast<std::uint64_t>(on)) * 0x100000001b3ull;
  }
  g_kink_digest = h;
  return y;
}

NnTensor ReLU::backward(const NnTensor& dy) const {
  NnTensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!mask_[i]) dx.data[i] = 0;
  return dx;
}

NnTensor Sigmoid::forward(const NnTensor& x) {
  y_ = x;
  for (auto& v : y_.data) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return y_;
}

NnTensor Sigmoid::backward(const NnTensor& dy) const {
  NnTensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (1 - y_.data[i]);
  return dx;
}

Vec softmax(const Vec& x, int outer, int len, int inner) {
  if (x.size() != static_cast<std::size_t>(outer) * len * inner) throw std::invalid_argument("softmax: size mismatch");
  Vec y(x.size());
  for (int o = 0; o < outer; ++o)
    for (int i = 0; i < inner; ++i) {
      auto idx = [&](int l) { return (static_cast<std::size_t>(o) * len + l) * inner + i; };
      double mx = x[idx(0)];
      for (int l = 1; l < len; ++l) mx = std::max(mx, x[idx(l)]);
      double s = 0;
      for (int l = 0; l < len; ++l) s += y[idx(l)] = std::exp(x[idx(l)] - mx);
      for (int l = 0; l < len; ++l) y[idx(l)] /= s;
    }
  return y;
}

Vec softmax_backward(const Vec& y, const Vec& dy, int outer, int len,
                                     int inner) {
  Vec dx(y.size());
  for (int o = 0; o < outer; ++o)
    for (int i = 0; i < inner; ++i) {
      auto idx = [&](int l) { return (static_cast<std::size_t>(o) * len + l) * inner + i; };
      double dot = 0;
      for (int l = 0; l < len; ++l) dot += y[idx(l)] * dy[idx(l)];
      for (int l = 0; l < len; ++l) dx[idx(l)] = y[idx(l)] * (dy[idx(l)] - dot);
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Resampling and plumbing

NnTensor downsample_half(const NnTensor& x) {
  if (x.h % 2 || x.w % 2) throw std::invalid_argument("downsample_half: H and W must be even");
  NnTensor y(x.n, x.c, x.h / 2, x.w / 2);
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const double* s = x.at(b, c);
      double* d = y.at(b, c);
      for (int i = 0; i < y.h; ++i)
        for (int j = 0; j < y.w; ++j) {
          const int si = 2 * i, sj = 2 * j;
          d[i * y.w + j] = 0.25 * (s[si * x.w + sj] + s[si * x.w + sj + 1] + s[(si + 1) * x.w + sj] + s[(si + 1) * x.w + sj + 1]);
        }
    }
  return y;
}

NnTensor downsample_half_backward(const NnTensor& dy) {
  NnTensor dx(dy.n, dy.c, dy.h * 2, dy.w * 2);
  for (int b = 0; b < dy.n; ++b)
    for (int c = 0; c < dy.c; ++c) {
      const double* s = dy.at(b, c);
      double* d = dx.at(b, c);
      for (int i = 0; i < dx.h; ++i)
        for (int j = 0; j < dx.w; ++j) d[i * dx.w + j] = 0.25 * s[(i / 2) * dy.w + j / 2];
    }
  return dx;
}

namespace {

struct Tap {
  int i0, i1;
  double w1;
};

std::vector<Tap> upsample_taps(int n_in) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n_in));
  for (int o = 0; o < 2 * n_in; ++o) {
    const double src = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    const int i0 = std::min(static_cast<int>(src), n_in - 1);
    const int i1 = std::min(i0 + 1, n_in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
  }
  return taps;
}

} // namespace

NnTensor upsample_double(const NnTensor& x) {
  NnTensor y(x.n, x.c, x.h * 2, x.w * 2);
  const auto ty = upsample_taps(x.h), tx = upsample_taps(x.w);
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const double* s = x.at(b, c);
      double* d = y.at(b, c);
      for (int i = 0; i < y.h; ++i) {
        const auto& a = ty[static_cast<std::size_t>(i)];
        for (int j = 0; j < y.w; ++j) {
          const auto& e = tx[static_cast<std::size_t>(j)];
          const double top = (1 - e.w1) * s[a.i0 * x.w + e.i0] + e.w1 * s[a.i0 * x.w + e.i1];
          const double bot = (1 - e.w1) * s[a.i1 * x.w + e.i0] + e.w1 * s[a.i1 * x.w + e.i1];
          d[i * y.w + j] = (1 - a.w1) * top + a.w1 * bot;
        }
      }
    }
  return y;
}

NnTensor upsample_double_backward(const NnTensor& dy) {
  NnTensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  const auto ty = upsample_taps(dx.h), tx = upsample_taps(dx.w);
  for (int b = 0; b < dy.n; ++b)
    for (int c = 0; c < dy.c; ++c) {
      const double* s = dy.at(b, c);
      double* d = dx.at(b, c);
      for (int i = 0; i < dy.h; ++i) {
        const auto& a = ty[static_cast<std::size_t>(i)];
        for (int j = 0; j < dy.w; ++j) {
          const auto& e = tx[static_cast<std::size_t>(j)];
          const double g = s[i * dy.w + j];
          d[a.i0 * dx.w + e.i0] += (1 - a.w1) * (1 - e.w1) * g;
          d[a.i0 * dx.w + e.i1] += (1 - a.w1) * e.w1 * g;
          d[a.i1 * dx.w + e.i0] += a.w1 * (1 - e.w1) * g;
          d[a.i1 * dx.w + e.i1] += a.w1 * e.w1 * g;
        }
      }
    }
  return dx;
}

NnTensor concat_channels(const std::vector<const NnTensor*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  int C = 0;
  for (const auto* p : parts) {
    if (p->n != parts[0]->n || p->h != parts[0]->h || p->w != parts[0]->w)
      throw std::invalid_argument("concat_channels: spatial mismatch");
    C += p->c;
  }
  NnTensor y(parts[0]->n, C, parts[0]->h, parts[0]->w);
  for (int b = 0; b < y.n; ++b) {
    double* dst = y.at(b, 0);
    for (const auto* p : parts) dst = std::copy_n(p->at(b, 0), static_cast<std::size_t>(p->c) * p->plane(), dst);
  }
  return y;
}

NnTensor concat_channels(const NnTensor& a, const NnTensor& b) { return concat_channels({&a, &b}); }

NnTensor slice_channels(const NnTensor& x, int first, int count) {
  if (first < 0 || count < 0 || first + count > x.c) throw std::out_of_range("slice_channels");
  NnTensor y(x.n, count, x.h, x.w);
  for (int b = 0; b < x.n; ++b) std::copy_n(x.at(b, first), static_cast<std::size_t>(count) * x.plane(), y.at(b, 0));
  return y;
}

void add_into(NnTensor& acc, const NnTensor& x) {
  if (!acc.same_shape(x)) throw std::invalid_argument("add_into: shape mismatch");
  add_vec(acc.data, x.data);
}

// ---------------------------------------------------------------------------
// Blocks

ConvBlock::ConvBlock(const std::string& name, int cin, int cout, int kernel)
    : conv1(name + ".conv1", cin, cout, kernel, false), conv2(name + ".conv2", cout, cout, kernel, false),
      bn1(name + ".bn1", cout), bn2(name + ".bn2", cout) {}

NnTensor ConvBlock::forward(const NnTensor& x) {
  return relu2_.forward(bn2.forward(conv2.forward(relu1_.forward(bn1.forward(conv1.forward(x))))));
}

NnTensor ConvBlock::backward(const NnTensor& dy) {
  return conv1.backward(bn1.backward(relu1_.backward(conv2.backward(bn2.backward(relu2_.backward(dy))))));
}

void ConvBlock::collect(std::vector<Param*>& out) {
  conv1.collect(out);
  bn1.collect(out);
  conv2.collect(out);
  bn2.collect(out);
}

void ConvBlock::collect(std::vector<Buffer*>& out) {
  bn1.collect(out);
  bn2.collect(out);
}

void ConvBlock::set_training(bool t) { bn1.training = bn2.training = t; }

Cam::Cam(const std::string& name, int channels, int reduction)
    : fc1(name + ".fc1", channels, reduction > 0 && channels % reduction == 0 ? channels / reduction : 1, 1, true),
      fc2(name + ".fc2", fc1.cout(), channels, 1, true) {
  if (reduction <= 0 || channels % reduction != 0) throw std::invalid_argument("cam: channels must be divisible by the reduction");
}

NnTensor Cam::forward(const NnTensor& x) {
  x_ = x;
  NnTensor pooled(x.n, x.c, 1, 1);
  const double hw = static_cast<double>(x.plane());
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const double* p = x.at(b, c);
      pooled.at(b, c)[0] = std::accumulate(p, p + x.plane(), 0.0) / hw;
    }
  g_ = sig_.forward(fc2.forward(relu_.forward(fc1.forward(pooled))));
  NnTensor y = x;
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c) {
      const double g = g_.at(b, c)[0];
      double* p = y.at(b, c);
      for (std::size_t i = 0; i < x.plane(); ++i) p[i] *= g;
    }
  return y;
}

NnTensor Cam::backward(const NnTensor& dy) {
  NnTensor dx = dy, dg(dy.n, dy.c, 1, 1);
  for (int b = 0; b < dy.n; ++b)
    for (int c = 0; c < dy.c; ++c) {
      const double g = g_.at(b, c)[0];
      const double* d = dy.at(b, c);
      const double* x = x_.at(b, c);
      double s = 0;
      for (std::size_t i = 0; i < dy.plane(); ++i) s += d[i] * x[i];
      dg.at(b, c)[0] = s;
      double* o = dx.at(b, c);
      for (std::size_t i = 0; i < dy.plane(); ++i) o[i] *= g;
    }
  const NnTensor dp = fc1.backward(relu_.backward(fc2.backward(sig_.backward(dg))));
  const double hw = static_cast<double>(dy.plane());
  for (int b = 0; b < dy.n; ++b)
    for (int c = 0; c < dy.c; ++c) {
      const double g = dp.at(b, c)[0] / hw;
      double* o = dx.at(b, c);
      for (std::size_t i = 0; i < dy.plane(); ++i) o[i] += g;
    }
  return dx;
}

void Cam::collect(std::vector<Param*>& out) {
  fc1.collect(out);
  fc2.collect(out);
}

// ---------------------------------------------------------------------------
// Gram-Schmidt and SAFM

Vec mgs_forward(const Vec& b, int k, int len, Vec& store,
                                Vec& norms, double eps) {
  const auto L = static_cast<std::size_t>(len);
  Vec q(static_cast<std::size_t>(k) * L);
  store.assign(static_cast<std::size_t>(k) * (k + 1) / 2 * L, 0.0);
  norms.assign(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    double* v = store.data() + static_cast<std::size_t>(i) * (i + 1) / 2 * L; // v^(0) .. v^(i)
    std::copy_n(b.data() + i * L, L, v);
    for (int j = 0; j < i; ++j) {
      const double* qj = q.data() + j * L;
      const double* cur = v + j * L;
      double* next = v + (j + 1) * L;
      double r = 0;
      for (std::size_t t = 0; t < L; ++t) r += qj[t] * cur[t];
      for (std::size_t t = 0; t < L; ++t) next[t] = cur[t] - r * qj[t];
    }
    const double* vi = v + i * L;
    double ss = 0;
    for (std::size_t t = 0; t < L; ++t) ss += vi[t] * vi[t];
    const double n = std::sqrt(ss + eps);
    norms[static_cast<std::size_t>(i)] = n;
    for (std::size_t t = 0; t < L; ++t) q[i * L + t] = vi[t] / n;
  }
  return q;
}

Vec mgs_backward(const Vec& q, const Vec& dq_in, int k, int len,
                                 const Vec& store, const Vec& norms) {
  const auto L = static_cast<std::size_t>(len);
  Vec dq = dq_in, db(dq.size()), g(L);
  for (int i = k - 1; i >= 0; --i) {
    const double* v = store.data() + static_cast<std::size_t>(i) * (i + 1) / 2 * L;
    const double* vi = v + i * L;
    const double n = norms[static_cast<std::size_t>(i)];
    const double* dqi = dq.data() + i * L;
    double vd = 0;
    for (std::size_t t = 0; t < L; ++t) vd += vi[t] * dqi[t];
    for (std::size_t t = 0; t < L; ++t) g[t] = dqi[t] / n - vi[t] * vd / (n * n * n);
    for (int j = i - 1; j >= 0; --j) {
      const double* qj = q.data() + j * L;
      const double* vj = v + j * L;
      double r = 0, dr = 0;
      for (std::size_t t = 0; t < L; ++t) {
        r += qj[t] * vj[t];
        dr -= qj[t] * g[t];
      }
      double* dqj = dq.data() + j * L;
      for (std::size_t t = 0; t < L; ++t) {
        dqj[t] += -r * g[t] + dr * vj[t];
        g[t] += dr * qj[t];
      }
    }
    std::copy(g.begin(), g.end(), db.begin() + static_cast<std::ptrdiff_t>(i * L));
  }
  return db;
}

Safm::Safm(const std::string& name, int c_amp, int c_phase, int c_upper, int c_out, int k)
    : embed_amp(name + ".embed_amp", c_amp, c_out, 1, false), embed_phase(name + ".embed_phase", c_phase, c_out, 1, false),
      embed_upper(name + ".embed_upper", c_upper, c_out, 1, false), basis_conv(name + ".basis", 2 * c_out, k, 1, false),
      residual(name + ".residual", c_amp + c_phase + c_upper, c_out, 1, false), logits(name + ".logits", {3, c_out}),
      c_(c_out), k_(k), ca_(c_amp), cp_(c_phase), cu_(c_upper) {
  if (k < 1 || k > c_out) throw std::invalid_argument("safm: need 1 <= k <= channels");
}

void Safm::collect(std::vector<Param*>& out) {
  embed_amp.collect(out);
  embed_phase.collect(out);
  embed_upper.collect(out);
  basis_conv.collect(out);
  residual.collect(out);
  out.push_back(&logits);
}

NnTensor Safm::forward(const NnTensor& amp, const NnTensor& phase, const NnTensor& upper) {
  if (amp.n != phase.n || amp.n != upper.n || amp.h != phase.h || amp.h != upper.h || amp.w != phase.w || amp.w != upper.w)
    throw std::invalid_argument("safm: inputs differ in batch or spatial size");
  if (amp.c != ca_ || phase.c != cp_ || upper.c != cu_) throw std::invalid_argument("safm: channel mismatch");
  hw_ = static_cast<int>(amp.plane());
  const auto hw = static_cast<Eigen::Index>(hw_);
  e_[0] = embed_amp.forward(amp);
  e_[1] = embed_phase.forward(phase);
  e_[2] = embed_upper.forward(upper);
  const NnTensor bmaps = basis_conv.forward(concat_channels(e_[0], e_[1]));
  alpha_ = softmax(logits.value, 1, 3, c_);

  NnTensor out = residual.forward(concat_channels({&amp, &phase, &upper}));
  const int N = amp.n;
  q_.assign(static_cast<std::size_t>(N), {});
  mix_.assign(static_cast<std::size_t>(N), {});
  v_store_.assign(static_cast<std::size_t>(N), {});
  norms_.assign(static_cast<std::size_t>(N), {});
  for (auto& c : coef_) c.assign(static_cast<std::size_t>(N), {});
  for (int b = 0; b < N; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    Vec braw(bmaps.at(b, 0), bmaps.at(b, 0) + static_cast<std::size_t>(k_) * hw_);
    q_[ub] = mgs_forward(braw, k_, hw_, v_store_[ub], norms_[ub]);
    CMap Q(q_[ub].data(), k_, hw);
    mix_[ub].assign(static_cast<std::size_t>(c_) * k_, 0.0);
    MMap Mix(mix_[ub].data(), c_, k_);
    for (int s = 0; s < 3; ++s) {
      coef_[s][ub].resize(static_cast<std::size_t>(c_) * k_);
      MMap C(coef_[s][ub].data(), c_, k_);
      C.noalias() = CMap(e_[s].at(b, 0), c_, hw) * Q.transpose();
      for (int ch = 0; ch < c_; ++ch) Mix.row(ch) += alpha_[static_cast<std::size_t>(s * c_ + ch)] * C.row(ch);
    }
    MMap(out.at(b, 0), c_, hw).noalias() += Mix * Q;
  }
  return out;
}

Safm::Grads Safm::backward(const NnTensor& dy) {
  const int N = dy.n;
  const auto hw = static_cast<Eigen::Index>(hw_);
  NnTensor de[3] = {NnTensor(N, c_, dy.h, dy.w), NnTensor(N, c_, dy.h, dy.w), NnTensor(N, c_, dy.h, dy.w)};
  NnTensor dbasis(N, k_, dy.h, dy.w);
  Vec dalpha(static_cast<std::size_t>(3 * c_), 0.0);
  RowMat dMix, dC;
  for (int b = 0; b < N; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    CMap Q(q_[ub].data(), k_, hw);
    CMap dR(dy.at(b, 0), c_, hw);
    dMix.noalias() = dR * Q.transpose();
    RowMat dQ = CMap(mix_[ub].data(), c_, k_).transpose() * dR;
    for (int s = 0; s < 3; ++s) {
      CMap C(coef_[s][ub].data(), c_, k_);
      dC = dMix;
      for (int ch = 0; ch < c_; ++ch) {
        const auto ai = static_cast<std::size_t>(s * c_ + ch);
        dalpha[ai] += dMix.row(ch).dot(C.row(ch));
        dC.row(ch) *= alpha_[ai];
      }
      MMap(de[s].at(b, 0), c_, hw).noalias() = dC * Q;
      dQ.noalias() += dC.transpose() * CMap(e_[s].at(b, 0), c_, hw);
    }
    Vec dq(dQ.data(), dQ.data() + dQ.size());
    const auto db = mgs_backward(q_[ub], dq, k_, hw_, v_store_[ub], norms_[ub]);
    std::copy(db.begin(), db.end(), dbasis.at(b, 0));
  }
  add_vec(logits.grad, softmax_backward(alpha_, dalpha, 1, 3, c_));

  const NnTensor dcat = basis_conv.backward(dbasis);
  add_into(de[0], slice_channels(dcat, 0, c_));
  add_into(de[1], slice_channels(dcat, c_, c_));

  const NnTensor draw = residual.backward(dy);
  Grads g{slice_channels(draw, 0, ca_), slice_channels(draw, ca_, cp_), slice_channels(draw, ca_ + cp_, cu_)};
  add_into(g.amp, embed_amp.backward(de[0]));
  add_into(g.phase, embed_phase.backward(de[1]));
  add_into(g.upper, embed_upper.backward(de[2]));
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer and finite differences

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (Param* p : params)
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = opt_.beta1 * p->m[i] + (1 - opt_.beta1) * g;
      p->v[i] = opt_.beta2 * p->v[i] + (1 - opt_.beta2) * g * g;
      p->value[i] -= opt_.lr * (p->m[i] / c1) / (std::sqrt(p->v[i] / c2) + opt_.eps);
    }
}

GradCheckReport grad_check(const std::function<double()>& loss, const std::vector<GradTarget>& targets, double eps,
                           std::size_t max_coords, std::uint64_t seed) {
  if (!(eps >= 1e-4 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps out of range");
  GradCheckReport rep;
  Rng rng(seed);
  const bool was_tracking = g_track_kinks;
  for (const auto& t : targets) {
    auto& val = *t.value;
    if (t.grad->size() != val.size()) throw std::invalid_argument("grad_check: gradient size mismatch for " + t.name);
    std::vector<std::size_t> idx(val.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > max_coords) {
      std::vector<std::size_t> pick;
      std::sample(idx.begin(), idx.end(), std::back_inserter(pick), max_coords, rng);
      idx = std::move(pick);
    }
    for (std::size_t i : idx) {
      const double orig = val[i];
      val[i] = orig + eps;
      reset_kink_digest();
      const double lp = loss();
      const auto dp = kink_digest();
      val[i] = orig - eps;
      reset_kink_digest();
      const double lm = loss();
      const auto dm = kink_digest();
      val[i] = orig;
      if (dp != dm) {
        ++rep.skipped_kinks;
        continue;
      }
      const double num = (lp - lm) / (2 * eps), ana = (*t.grad)[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-7});
      ++rep.checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  g_track_kinks = was_tracking;
  return rep;
}

} // namespace thzlab::nn
