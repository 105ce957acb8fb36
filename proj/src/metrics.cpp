#include "thzlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thzlab {

namespace {

void require_same(const Image2D& a, const Image2D& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("images differ in shape");
}

std::vector<double> normalized(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = range > 0 ? (v[i] - min) / range : std::clamp(v[i], 0.0, 1.0);
  return out;
}

// Separable valid-mode filter with a normalized 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, int rows, int cols, const std::vector<double>& k) {
  const int w = static_cast<int>(k.size());
  const int orows = rows - w + 1, ocols = cols - w + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows) * ocols), out(static_cast<std::size_t>(orows) * ocols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < ocols; ++c) {
      double s = 0;
      for (int i = 0; i < w; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(r) * cols + c + i];
      tmp[static_cast<std::size_t>(r) * ocols + c] = s;
    }
  for (int r = 0; r < orows; ++r)
    for (int c = 0; c < ocols; ++c) {
      double s = 0;
      for (int i = 0; i < w; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(r + i) * ocols + c];
      out[static_cast<std::size_t>(r) * ocols + c] = s;
    }
  return out;
}

} // namespace

double mse(const Image2D& a, const Image2D& b) {
  require_same(a, b);
  if (a.data.empty()) throw std::invalid_argument("mse of empty images");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s / static_cast<double>(a.size());
}

double psnr(const Image2D& a, const Image2D& b, double range) {
  if (!(range > 0)) throw std::invalid_argument("psnr: data_range must be > 0");
  const double m = mse(a, b);
  if (m == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(range * range / m));
}

double ssim(const Image2D& a, const Image2D& b) {
  require_same(a, b);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (a.rows < kWin || a.cols < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  double lo = std::min(*std::min_element(a.data.begin(), a.data.end()), *std::min_element(b.data.begin(), b.data.end()));
  double hi = std::max(*std::max_element(a.data.begin(), a.data.end()), *std::max_element(b.data.begin(), b.data.end()));
  const double range = hi - lo;
  std::vector<double> x(a.size()), y(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    x[i] = range > 0 ? (a.data[i] - lo) / range : 0.0;
    y[i] = range > 0 ? (b.data[i] - lo) / range : 0.0;
  }

  std::vector<double> k(kWin);
  double ks = 0;
  for (int i = 0; i < kWin; ++i) ks += k[static_cast<std::size_t>(i)] = std::exp(-0.5 * std::pow((i - kWin / 2) / kSigma, 2));
  for (auto& v : k) v /= ks;

  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, a.rows, a.cols, k), my = filter_valid(y, a.rows, a.cols, k);
  const auto sxx = filter_valid(xx, a.rows, a.cols, k), syy = filter_valid(yy, a.rows, a.cols, k),
             sxy = filter_valid(xy, a.rows, a.cols, k);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + C1) * (2 * cxy + C2)) / ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
  }
  return total / static_cast<double>(mx.size());
}

double mse_cross_sections(const Volume3D& a, const Volume3D& b) {
  if (a.nz != b.nz || a.ny != b.ny || a.nx != b.nx) throw std::invalid_argument("volumes differ in shape");
  if (a.data.empty()) throw std::invalid_argument("mse of empty volumes");
  const auto x = normalized(a.data), y = normalized(b.data);
  const std::size_t plane = static_cast<std::size_t>(a.ny) * a.nx;
  double total = 0;
  for (int z = 0; z < a.nz; ++z) {
    double s = 0;
    for (std::size_t i = z * plane; i < (z + 1) * plane; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    total += s / static_cast<double>(plane);
  }
  return total / a.nz;
}

} // namespace thzlab
