#include "thzlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace thzlab {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_phase(double phi) {
  // std::arg already returns [-pi, pi]; fold the closed end.
  return phi <= -kPi ? phi + 2 * kPi : phi;
}

double alpha_slope(const WaterVaporModel& w, double f) {
  double d = 0;
  for (const auto& l : w.lines) {
    const double x = f - l.center_thz, hw2 = l.halfwidth_thz * l.halfwidth_thz;
    const double den = x * x + hw2;
    d += -2.0 * l.strength * hw2 * x / (den * den);
  }
  return d;
}

} // namespace

std::size_t Spectrum::nearest_bin(double f) const {
  if (f < 0) throw std::invalid_argument("band frequency must be >= 0");
  const auto k = static_cast<std::size_t>(std::lround(f / df_thz));
  if (k >= bins.size()) throw std::invalid_argument("band frequency above Nyquist");
  return k;
}

Spectrum fft_trace(const TimeTrace& t) {
  if (!fft::is_pow2(t.samples.size())) throw std::invalid_argument("fft_trace: trace length must be a power of two");
  return {fft::rfft(t.samples), 1.0 / (static_cast<double>(t.samples.size()) * t.dt_ps), t.samples.size()};
}

TimeTrace inverse_fft_trace(const Spectrum& s, double dt_ps) { return {fft::irfft(s.bins, s.n_samples), dt_ps}; }

double time_energy(const TimeTrace& t) {
  double e = 0;
  for (double v : t.samples) e += v * v;
  return e;
}

double spectral_energy(const Spectrum& s) {
  double e = 0;
  for (std::size_t k = 0; k < s.bins.size(); ++k) {
    const bool edge = k == 0 || (s.n_samples % 2 == 0 && k == s.bins.size() - 1);
    e += (edge ? 1.0 : 2.0) * std::norm(s.bins[k]);
  }
  return e / static_cast<double>(s.n_samples);
}

double time_max(const TimeTrace& t) {
  if (t.samples.empty()) throw std::invalid_argument("time_max: empty trace");
  return *std::max_element(t.samples.begin(), t.samples.end());
}

double time_max(std::span<const float> samples) {
  if (samples.empty()) throw std::invalid_argument("time_max: empty trace");
  return *std::max_element(samples.begin(), samples.end());
}

std::size_t time_max_index(std::span<const double> s) {
  if (s.empty()) throw std::invalid_argument("time_max_index: empty trace");
  // max_element returns the first of equal maxima.
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

double time_max_position(std::span<const double> s) {
  const auto i = time_max_index(s);
  if (i == 0 || i + 1 >= s.size()) return static_cast<double>(i);
  const double a = s[i - 1], b = s[i], c = s[i + 1];
  const double den = a - 2 * b + c;
  if (den >= 0) return static_cast<double>(i);
  return static_cast<double>(i) + 0.5 * (a - c) / den;
}

ViewTraces view_of(const ScanCube& cube, int view) {
  if (view < 0 || view >= cube.views()) throw std::out_of_range("view index out of range");
  const std::size_t per_view = static_cast<std::size_t>(cube.rows()) * cube.cols() * cube.samples();
  return {cube.rows(), cube.cols(), cube.samples(), cube.config.pulse.dt_ps, cube.config.x_step_mm,
          cube.traces.real().subspan(static_cast<std::size_t>(view) * per_view, per_view)};
}

Image2D time_max_image(const ViewTraces& v) {
  Image2D img(v.rows, v.cols, v.pitch_mm);
  for (int r = 0; r < v.rows; ++r)
    for (int c = 0; c < v.cols; ++c) img(r, c) = time_max(v.trace(r, c));
  return img;
}

std::pair<Image2D, Image2D> band_image(const ViewTraces& v, double f, const Spectrum& reference) {
  const auto k = reference.nearest_bin(f);
  if (reference.n_samples != static_cast<std::size_t>(v.n_samples))
    throw std::invalid_argument("band_image: reference length differs from the traces");
  Image2D amp(v.rows, v.cols, v.pitch_mm), phase(v.rows, v.cols, v.pitch_mm);
  const cplx ref = reference.bins[k];
  // Single-bin DFT: X_k = sum_t x_t exp(-2 pi i k t / n).
  std::vector<cplx> kernel(static_cast<std::size_t>(v.n_samples));
  for (int t = 0; t < v.n_samples; ++t)
    kernel[static_cast<std::size_t>(t)] = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) * t / v.n_samples);
  for (int r = 0; r < v.rows; ++r)
    for (int c = 0; c < v.cols; ++c) {
      auto tr = v.trace(r, c);
      cplx X = 0;
      for (std::size_t t = 0; t < tr.size(); ++t) X += static_cast<double>(tr[t]) * kernel[t];
      amp(r, c) = std::abs(X);
      phase(r, c) = wrap_phase(std::arg(X / ref));
    }
  return {std::move(amp), std::move(phase)};
}

std::vector<double> select_water_bands(const WaterVaporModel& w, double f_lo, double f_hi, int count) {
  w.validate();
  if (!(f_hi > f_lo) || count < 1) throw std::invalid_argument("select_water_bands: bad range or count");
  double min_hw = f_hi - f_lo;
  for (const auto& l : w.lines) min_hw = std::min(min_hw, l.halfwidth_thz);
  const double step = min_hw / 8.0;
  const int n = static_cast<int>(std::ceil((f_hi - f_lo) / step));
  std::vector<double> a(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) a[static_cast<std::size_t>(i)] = w.alpha(std::min(f_hi, f_lo + i * step));

  struct Peak {
    double f, alpha;
  };
  std::vector<Peak> peaks;
  for (int i = 1; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (!(a[u] > a[u - 1] && a[u] >= a[u + 1])) continue;
    // The slope changes sign inside [f_{i-1}, f_{i+1}]; bisect it to the exact maximum.
    double lo = f_lo + (i - 1) * step, hi = std::min(f_hi, f_lo + (i + 1) * step);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (alpha_slope(w, mid) > 0 ? lo : hi) = mid;
    }
    const double f = 0.5 * (lo + hi);
    peaks.push_back({f, w.alpha(f)});
  }
  if (static_cast<int>(peaks.size()) < count)
    throw std::invalid_argument("select_water_bands: only " + std::to_string(peaks.size()) +
                                " absorption maxima in range, need " + std::to_string(count));
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.alpha > y.alpha; });
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(peaks[static_cast<std::size_t>(i)].f);
  std::sort(out.begin(), out.end());
  return out;
}

void normalize_min_max(std::span<double> v) {
  if (v.empty()) return;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& x : v) x = range > 0 ? (x - min) / range : 0.0;
}

Image2D FeatureStack::channel_image(int c) const {
  Image2D img(rows, cols, pitch_mm);
  auto ch = channel(c);
  std::copy(ch.begin(), ch.end(), img.data.begin());
  return img;
}

FeatureStack feature_stack(const ViewTraces& v, std::span<const double> bands, const Spectrum& reference) {
  if (bands.size() != static_cast<std::size_t>(kBandCount)) throw std::invalid_argument("feature_stack: need exactly 12 bands");
  for (std::size_t i = 1; i < bands.size(); ++i)
    if (!(bands[i] > bands[i - 1])) throw std::invalid_argument("feature_stack: bands must be strictly ascending");
  FeatureStack fs;
  fs.rows = v.rows;
  fs.cols = v.cols;
  fs.pitch_mm = v.pitch_mm;
  fs.band_freqs.assign(bands.begin(), bands.end());
  const std::size_t plane = static_cast<std::size_t>(v.rows) * v.cols;
  fs.data.assign(kFeatureChannels * plane, 0.0);
  auto put = [&](int c, const Image2D& img) {
    std::copy(img.data.begin(), img.data.end(), fs.data.begin() + static_cast<std::ptrdiff_t>(c * plane));
  };
  auto chan = [&](int c) { return std::span<double>(fs.data.data() + c * plane, plane); };

  put(0, time_max_image(v));
  normalize_min_max(chan(0));
  for (int b = 0; b < kBandCount; ++b) {
    auto [amp, phase] = band_image(v, bands[static_cast<std::size_t>(b)], reference);
    put(1 + b, amp);
    normalize_min_max(chan(1 + b));
    for (auto& p : phase.data) p = (p + kPi) / (2 * kPi);
    put(1 + kBandCount + b, phase);
  }
  return fs;
}

void save_features(const FeatureStack& fs, const std::filesystem::path& path) {
  std::vector<float> v(fs.data.begin(), fs.data.end());
  write_thzt(Tensor({static_cast<std::uint32_t>(kFeatureChannels), static_cast<std::uint32_t>(fs.rows),
                     static_cast<std::uint32_t>(fs.cols)},
                    std::move(v)),
             path);
  std::ostringstream bands;
  bands.precision(17);
  for (std::size_t i = 0; i < fs.band_freqs.size(); ++i) bands << (i ? "," : "") << fs.band_freqs[i];
  write_sidecar({{"kind", "feature_stack"}, {"pitch_mm", format_exact(fs.pitch_mm)}, {"band_freqs_thz", bands.str()}},
                sidecar_path(path));
}

FeatureStack load_features(const std::filesystem::path& path) {
  auto t = read_thzt(path);
  if (t.dtype() != DType::Real32 || t.ndim() != 3 || t.shape()[0] != static_cast<std::uint32_t>(kFeatureChannels))
    throw DataError("feature stack must be a 25 x H x W real32 tensor");
  auto kv = read_sidecar(sidecar_path(path));
  FeatureStack fs;
  fs.rows = static_cast<int>(t.shape()[1]);
  fs.cols = static_cast<int>(t.shape()[2]);
  fs.pitch_mm = std::stod(kv.at("pitch_mm"));
  std::stringstream ss(kv.at("band_freqs_thz"));
  std::string item;
  while (std::getline(ss, item, ',')) fs.band_freqs.push_back(std::stod(item));
  if (fs.band_freqs.size() != static_cast<std::size_t>(kBandCount)) throw DataError("feature sidecar must list 12 bands");
  fs.data.assign(t.real().begin(), t.real().end());
  return fs;
}

} // namespace thzlab
