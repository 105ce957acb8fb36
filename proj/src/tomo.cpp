#include "thzlab/tomo.hpp"

#include "thzlab/fft.hpp"
#include "thzlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace thzlab {

namespace {

constexpr double kPi = std::numbers::pi;

struct Lattice {
  int n = 0;          // image side
  int n_bins = 0;
  int n_t = 0;        // samples along each ray
  double pitch = 1.0; // pixel pitch == bin pitch == step along the ray
};

Lattice make_lattice(int n, int n_bins, double pitch) {
  Lattice l{n, n_bins, 0, pitch};
  const int span = std::max(n, n_bins);
  l.n_t = static_cast<int>(std::ceil(span * std::numbers::sqrt2)) + 1;
  return l;
}

// Visits every (bin, pixel, weight) of the rotate-and-sum projector for one angle.
template <typename F>
void for_each_weight(const Lattice& l, double angle_deg, F&& f) {
  const double th = angle_deg * kPi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double c_img = (l.n - 1) / 2.0, c_bin = (l.n_bins - 1) / 2.0, c_t = (l.n_t - 1) / 2.0;
  for (int b = 0; b < l.n_bins; ++b) {
    const double rho = b - c_bin;
    for (int k = 0; k < l.n_t; ++k) {
      const double t = k - c_t;
      const double fx = rho * ct - t * st + c_img;
      const double fy = rho * st + t * ct + c_img;
      if (fx <= -1.0 || fy <= -1.0 || fx >= l.n || fy >= l.n) continue;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const double wx = fx - x0, wy = fy - y0;
      const double w[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int q = 0; q < 4; ++q) {
        if (xs[q] < 0 || xs[q] >= l.n || ys[q] < 0 || ys[q] >= l.n || w[q] == 0.0) continue;
        f(b, static_cast<std::size_t>(ys[q]) * l.n + xs[q], w[q] * l.pitch);
      }
    }
  }
}

void project_angle(const Lattice& l, double angle, std::span<const double> img, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for_each_weight(l, angle, [&](int b, std::size_t px, double w) { out[static_cast<std::size_t>(b)] += w * img[px]; });
}

void backproject_angle(const Lattice& l, double angle, std::span<const double> row, std::span<double> img) {
  for_each_weight(l, angle, [&](int b, std::size_t px, double w) { img[px] += w * row[static_cast<std::size_t>(b)]; });
}

std::vector<double> filter_rows(const Sinogram& s, FbpFilter filter) {
  const int padded = static_cast<int>(fft::next_pow2(static_cast<std::size_t>(std::max(64, 2 * s.n_bins))));
  const auto H = fbp_filter_response(filter, padded, s.bin_pitch_mm);
  std::vector<double> out(s.data.size());
  parallel_for(s.n_angles, [&](std::int64_t a) {
    std::vector<double> row(static_cast<std::size_t>(padded), 0.0);
    std::copy_n(s.data.begin() + a * s.n_bins, s.n_bins, row.begin());
    auto X = fft::rfft(row);
    for (std::size_t k = 0; k < X.size(); ++k) X[k] *= H[k];
    auto y = fft::irfft(X, static_cast<std::size_t>(padded));
    std::copy_n(y.begin(), s.n_bins, out.begin() + a * s.n_bins);
  });
  return out;
}

} // namespace

Sinogram::Sinogram(std::vector<double> angles, int bins, double pitch)
    : n_angles(static_cast<int>(angles.size())), n_bins(bins), bin_pitch_mm(pitch), angles_deg(std::move(angles)),
      data(static_cast<std::size_t>(n_angles) * bins, 0.0) {
  if (bins <= 0 || !(pitch > 0)) throw std::invalid_argument("sinogram needs positive bin count and pitch");
}

void Sinogram::validate() const {
  if (static_cast<int>(angles_deg.size()) != n_angles || data.size() != static_cast<std::size_t>(n_angles) * n_bins)
    throw std::invalid_argument("sinogram shape does not match its angle list");
  for (int a = 0; a < n_angles; ++a) {
    const double t = angles_deg[static_cast<std::size_t>(a)];
    if (!(t >= 0.0 && t < 180.0)) throw std::invalid_argument("sinogram angles must lie in [0, 180)");
    if (a > 0 && !(t > angles_deg[static_cast<std::size_t>(a) - 1]))
      throw std::invalid_argument("sinogram angles must be strictly increasing");
  }
}

Sinogram radon(const Image2D& img, const std::vector<double>& angles, int n_bins) {
  if (img.rows != img.cols) throw std::invalid_argument("radon: image must be square");
  if (n_bins <= 0) n_bins = img.cols;
  Sinogram s(angles, n_bins, img.pitch_mm);
  s.validate();
  const auto l = make_lattice(img.cols, n_bins, img.pitch_mm);
  parallel_for(s.n_angles, [&](std::int64_t a) {
    project_angle(l, s.angles_deg[static_cast<std::size_t>(a)], img.data,
                  std::span<double>(s.data).subspan(static_cast<std::size_t>(a) * n_bins, static_cast<std::size_t>(n_bins)));
  });
  return s;
}

Image2D radon_adjoint(const Sinogram& s, int out_size, double pitch_mm) {
  s.validate();
  if (out_size <= 0) throw std::invalid_argument("radon_adjoint: out_size must be positive");
  if (std::abs(pitch_mm - s.bin_pitch_mm) > 1e-12 * s.bin_pitch_mm)
    throw std::invalid_argument("radon_adjoint: image pitch must equal bin pitch");
  Image2D img(out_size, out_size, pitch_mm);
  const auto l = make_lattice(out_size, s.n_bins, pitch_mm);
  for (int a = 0; a < s.n_angles; ++a)
    backproject_angle(l, s.angles_deg[static_cast<std::size_t>(a)],
                      std::span<const double>(s.data).subspan(static_cast<std::size_t>(a) * s.n_bins,
                                                              static_cast<std::size_t>(s.n_bins)),
                      img.data);
  return img;
}

FbpFilter parse_fbp_filter(const std::string& name) {
  if (name == "ram-lak" || name == "ramlak") return FbpFilter::RamLak;
  if (name == "shepp-logan") return FbpFilter::SheppLogan;
  if (name == "hann") return FbpFilter::Hann;
  throw std::invalid_argument("unknown FBP filter '" + name + "' (expected ram-lak, shepp-logan or hann)");
}

std::string to_string(FbpFilter f) {
  switch (f) {
  case FbpFilter::RamLak: return "ram-lak";
  case FbpFilter::SheppLogan: return "shepp-logan";
  case FbpFilter::Hann: return "hann";
  }
  return "?";
}

std::vector<double> fbp_filter_response(FbpFilter f, int padded, double tau) {
  // Spatial ramp kernel: h0 = 1/(4 tau^2), h_odd = -1/(n pi tau)^2, h_even = 0.
  std::vector<double> h(static_cast<std::size_t>(padded), 0.0);
  for (int k = 0; k < padded; ++k) {
    const int n = fft::signed_index(k, padded);
    if (n == 0)
      h[static_cast<std::size_t>(k)] = 1.0 / (4 * tau * tau);
    else if (n % 2 != 0)
      h[static_cast<std::size_t>(k)] = -1.0 / std::pow(n * kPi * tau, 2);
  }
  const auto Hc = fft::rfft(h);
  std::vector<double> H(Hc.size());
  for (std::size_t k = 0; k < H.size(); ++k) {
    const double nu = static_cast<double>(k) / padded; // cycles per bin, [0, 0.5]
    double w = 1.0;
    if (f == FbpFilter::SheppLogan && k > 0) w = std::sin(kPi * nu) / (kPi * nu);
    if (f == FbpFilter::Hann) w = 0.5 * (1 + std::cos(2 * kPi * nu));
    H[k] = Hc[k].real() * tau * w;
  }
  return H;
}

Image2D fbp(const Sinogram& s, FbpFilter filter, int out_size) {
  s.validate();
  if (s.n_angles < 2) throw std::invalid_argument("fbp: need at least 2 angles");
  if (out_size <= 0) out_size = s.n_bins;
  const auto q = filter_rows(s, filter);
  std::vector<double> cs(static_cast<std::size_t>(s.n_angles)), sn(cs.size());
  for (int a = 0; a < s.n_angles; ++a) {
    cs[static_cast<std::size_t>(a)] = std::cos(s.angles_deg[static_cast<std::size_t>(a)] * kPi / 180.0);
    sn[static_cast<std::size_t>(a)] = std::sin(s.angles_deg[static_cast<std::size_t>(a)] * kPi / 180.0);
  }
  Image2D img(out_size, out_size, s.bin_pitch_mm);
  const double c_img = (out_size - 1) / 2.0, c_bin = (s.n_bins - 1) / 2.0;
  const double scale = kPi / s.n_angles;
  parallel_for(out_size, [&](std::int64_t i) {
    const double y = static_cast<double>(i) - c_img;
    for (int j = 0; j < out_size; ++j) {
      const double x = j - c_img;
      double acc = 0;
      for (int a = 0; a < s.n_angles; ++a) {
        const double fb = x * cs[static_cast<std::size_t>(a)] + y * sn[static_cast<std::size_t>(a)] + c_bin;
        if (fb < 0 || fb > s.n_bins - 1) continue;
        const int b0 = std::min(static_cast<int>(fb), s.n_bins - 1);
        const double w = fb - b0;
        const double* row = q.data() + static_cast<std::size_t>(a) * s.n_bins;
        acc += (1 - w) * row[b0] + (w > 0 ? w * row[b0 + 1] : 0.0);
      }
      img(static_cast<int>(i), j) = acc * scale;
    }
  });
  return img;
}

SartResult sart(const Sinogram& s, int iters, double relax, const Image2D* init, int out_size) {
  s.validate();
  if (iters < 1) throw std::invalid_argument("sart: iters must be >= 1");
  if (!(relax >= 0.0 && relax <= 1.0)) throw std::invalid_argument("sart: relax must lie in [0, 1]");
  if (out_size <= 0) out_size = init ? init->cols : s.n_bins;
  SartResult res{init ? *init : Image2D(out_size, out_size, s.bin_pitch_mm), {}};
  if (res.image.rows != out_size || res.image.cols != out_size) throw std::invalid_argument("sart: init has the wrong size");
  const auto l = make_lattice(out_size, s.n_bins, s.bin_pitch_mm);
  const std::size_t nb = static_cast<std::size_t>(s.n_bins), np = res.image.size();

  // Per-angle row sums A_t 1 and column sums A_t^T 1.
  std::vector<double> row_sums(static_cast<std::size_t>(s.n_angles) * nb), col_sums(static_cast<std::size_t>(s.n_angles) * np);
  const std::vector<double> ones_img(np, 1.0), ones_row(nb, 1.0);
  parallel_for(s.n_angles, [&](std::int64_t a) {
    const double th = s.angles_deg[static_cast<std::size_t>(a)];
    project_angle(l, th, ones_img, std::span<double>(row_sums).subspan(static_cast<std::size_t>(a) * nb, nb));
    backproject_angle(l, th, ones_row, std::span<double>(col_sums).subspan(static_cast<std::size_t>(a) * np, np));
  });

  auto residual = [&] {
    std::vector<double> r(nb);
    double acc = 0;
    for (int a = 0; a < s.n_angles; ++a) {
      project_angle(l, s.angles_deg[static_cast<std::size_t>(a)], res.image.data, r);
      for (std::size_t b = 0; b < nb; ++b) acc += std::pow(r[b] - s(a, static_cast<int>(b)), 2);
    }
    return std::sqrt(acc);
  };

  res.residuals.push_back(residual());
  std::vector<double> r(nb), upd(np);
  for (int it = 0; it < iters; ++it) {
    for (int a = 0; a < s.n_angles; ++a) {
      const double th = s.angles_deg[static_cast<std::size_t>(a)];
      project_angle(l, th, res.image.data, r);
      for (std::size_t b = 0; b < nb; ++b) {
        const double rs = row_sums[a * nb + b];
        r[b] = rs > 1e-12 ? (s(a, static_cast<int>(b)) - r[b]) / rs : 0.0;
      }
      std::fill(upd.begin(), upd.end(), 0.0);
      backproject_angle(l, th, r, upd);
      for (std::size_t p = 0; p < np; ++p) {
        const double csum = col_sums[a * np + p];
        if (csum > 1e-12) res.image.data[p] = std::max(0.0, res.image.data[p] + relax * upd[p] / csum);
      }
    }
    res.residuals.push_back(residual());
  }
  return res;
}

Volume3D reconstruct_volume(const std::vector<Image2D>& proj, const std::vector<double>& angles, const VolumeOptions& opt) {
  if (proj.empty() || proj.size() != angles.size())
    throw std::invalid_argument("reconstruct_volume: need one projection per angle");
  const int rows = proj[0].rows, cols = proj[0].cols;
  for (const auto& p : proj)
    if (p.rows != rows || p.cols != cols) throw std::invalid_argument("reconstruct_volume: projection shape mismatch");
  Volume3D vol(rows, cols, cols, proj[0].pitch_mm);
  parallel_for(rows, [&](std::int64_t z) {
    Sinogram s(angles, cols, proj[0].pitch_mm);
    for (std::size_t a = 0; a < proj.size(); ++a)
      for (int c = 0; c < cols; ++c) s(static_cast<int>(a), c) = proj[a](static_cast<int>(z), c);
    vol.set_slice(static_cast<int>(z), fbp(s, opt.filter));
  });
  if (opt.binarize) {
    auto [lo, hi] = std::minmax_element(vol.data.begin(), vol.data.end());
    const double min = *lo, range = *hi - *lo;
    for (auto& v : vol.data) v = range > 0 && (v - min) / range >= opt.threshold ? 1.0 : 0.0;
  }
  return vol;
}

void save_sinogram(const Sinogram& s, const std::filesystem::path& path) {
  std::vector<float> v(s.data.begin(), s.data.end());
  write_thzt(Tensor({static_cast<std::uint32_t>(s.n_angles), static_cast<std::uint32_t>(s.n_bins)}, std::move(v)), path);
  std::ostringstream a;
  for (std::size_t i = 0; i < s.angles_deg.size(); ++i) a << (i ? "," : "") << format_exact(s.angles_deg[i]);
  write_sidecar({{"kind", "sinogram"}, {"bin_pitch_mm", format_exact(s.bin_pitch_mm)}, {"angles_deg", a.str()}},
                sidecar_path(path));
}

Sinogram load_sinogram(const std::filesystem::path& path) {
  auto t = read_thzt(path);
  if (t.dtype() != DType::Real32 || t.ndim() != 2) throw DataError("sinogram must be a 2-D real32 tensor");
  auto kv = read_sidecar(sidecar_path(path));
  if (!kv.count("angles_deg") || !kv.count("bin_pitch_mm")) throw DataError("sinogram sidecar needs angles_deg and bin_pitch_mm");
  std::vector<double> angles;
  std::stringstream ss(kv["angles_deg"]);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) angles.push_back(std::stod(item));
  } catch (const std::logic_error&) {
    throw DataError("malformed sinogram angle list");
  }
  if (angles.size() != t.shape()[0]) throw DataError("sinogram angle count does not match the tensor");
  Sinogram s(std::move(angles), static_cast<int>(t.shape()[1]), std::stod(kv["bin_pitch_mm"]));
  std::copy(t.real().begin(), t.real().end(), s.data.begin());
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return s;
}

} // namespace thzlab
