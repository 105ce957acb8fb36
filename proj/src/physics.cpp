#include "thzlab/physics.hpp"

#include "thzlab/fft.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace thzlab {

namespace {

// Outer root u > 1 of u exp(-u^2/2) = exp(-1/2)/2, i.e. where |E| falls to half
// its maximum on the far side of a Gaussian-derivative lobe.
double outer_half_max_root() {
  const double target = 0.5 * std::exp(-0.5);
  double lo = 1.0, hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid * std::exp(-0.5 * mid * mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open table: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue; // header line
      throw DataError("non-numeric row in " + path.string() + ": " + line);
    }
    if (row.size() != columns) throw DataError("expected " + std::to_string(columns) + " columns in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (xs.size() == 1 || x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  auto i = static_cast<std::size_t>(it - xs.begin());
  double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + w * (ys[i] - ys[i - 1]);
}

} // namespace

// ---------------------------------------------------------------------------
// Pulse

void PulseModel::validate() const {
  if (!(dt_ps > 0)) throw std::invalid_argument("PulseModel: dt_ps must be positive");
  if (n_samples < 2 || !fft::is_pow2(static_cast<std::size_t>(n_samples)))
    throw std::invalid_argument("PulseModel: n_samples must be a power of two");
  if (!(fwhm_fs > 0)) throw std::invalid_argument("PulseModel: fwhm_fs must be positive");
}

double PulseModel::tau_ps() const {
  static const double u_half = outer_half_max_root();
  return fwhm_fs * 1e-3 / (2.0 * u_half);
}

TimeTrace reference_pulse(const PulseModel& model) {
  model.validate();
  TimeTrace trace;
  trace.dt_ps = model.dt_ps;
  trace.samples.resize(static_cast<std::size_t>(model.n_samples));
  const double tau = model.tau_ps();
  const int center = model.n_samples / 4;
  // -u exp((1 - u^2)/2) peaks at exactly 1 for u = -1.
  for (int i = 0; i < model.n_samples; ++i) {
    double u = (i - center) * model.dt_ps / tau;
    trace.samples[static_cast<std::size_t>(i)] = model.peak_amplitude * (-u) * std::exp(0.5 * (1.0 - u * u));
  }
  return trace;
}

double measure_abs_fwhm_fs(const TimeTrace& trace) {
  const auto& s = trace.samples;
  if (s.size() < 2) return 0.0;
  double peak = 0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  const double half = 0.5 * peak;
  std::size_t first = 0, last = s.size() - 1;
  while (first < s.size() && std::abs(s[first]) < half) ++first;
  while (last > 0 && std::abs(s[last]) < half) --last;
  if (first >= last) return 0.0;
  auto crossing = [&](std::size_t below, std::size_t above) {
    double a = std::abs(s[below]), b = std::abs(s[above]);
    double frac = (half - a) / (b - a);
    return static_cast<double>(below) + frac * (static_cast<double>(above) - static_cast<double>(below));
  };
  double t0 = first > 0 ? crossing(first - 1, first) : 0.0;
  double t1 = last + 1 < s.size() ? crossing(last + 1, last) : static_cast<double>(last);
  return (t1 - t0) * trace.dt_ps * 1e3;
}

// ---------------------------------------------------------------------------
// Water vapor

void WaterVaporModel::validate() const {
  if (continuum < 0) throw std::invalid_argument("WaterVaporModel: continuum must be >= 0");
  for (const auto& l : lines) {
    if (!(l.center_thz > 0)) throw std::invalid_argument("WaterVaporModel: line centers must be > 0");
    if (l.strength < 0) throw std::invalid_argument("WaterVaporModel: strengths must be >= 0");
    if (!(l.halfwidth_thz > 0)) throw std::invalid_argument("WaterVaporModel: halfwidths must be > 0");
  }
}

double WaterVaporModel::alpha(double f) const {
  double a = continuum;
  for (const auto& l : lines) {
    double d = f - l.center_thz;
    double hw2 = l.halfwidth_thz * l.halfwidth_thz;
    a += l.strength * hw2 / (d * d + hw2);
  }
  return a;
}

std::vector<double> WaterVaporModel::centers_in(double lo, double hi) const {
  std::vector<double> c;
  for (const auto& l : lines)
    if (l.center_thz >= lo && l.center_thz <= hi) c.push_back(l.center_thz);
  std::sort(c.begin(), c.end());
  return c;
}

WaterVaporModel default_water_model() {
  constexpr double hw = 0.005;
  WaterVaporModel w;
  w.continuum = 2e-4;
  w.lines = {
      {0.1831, 0.008, hw}, {0.3802, 0.004, hw}, {0.4480, 0.003, hw}, {0.5570, 0.030, hw},
      {0.6207, 0.003, hw}, {0.7520, 0.020, hw}, {0.9162, 0.005, hw}, {0.9703, 0.010, hw},
      {0.9879, 0.018, hw}, {1.0974, 0.030, hw}, {1.1133, 0.015, hw}, {1.1629, 0.012, hw},
      {1.2076, 0.014, hw}, {1.2288, 0.010, hw}, {1.4106, 0.015, hw}, {1.6022, 0.020, hw},
      {1.6612, 0.025, hw}, {1.6697, 0.025, hw}, {1.7167, 0.030, hw}, {1.7944, 0.020, hw},
      {1.8674, 0.020, hw}, {1.9192, 0.025, hw}, {2.1640, 0.030, hw}, {2.1961, 0.025, hw},
      {2.2640, 0.020, hw},
  };
  return w;
}

WaterVaporModel load_water_lines_csv(const std::filesystem::path& path) {
  WaterVaporModel w;
  for (const auto& row : read_numeric_csv(path, 3)) w.lines.push_back({row[0], row[1], row[2]});
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return w;
}

std::vector<double> absorption_spectrum(const WaterVaporModel& w, std::span<const double> freqs) {
  std::vector<double> out(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (freqs[i] < 0) throw std::invalid_argument("absorption_spectrum: negative frequency");
    out[i] = w.alpha(freqs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Materials

void MaterialSpec::validate() const {
  if (freq_thz.empty() || n.size() != freq_thz.size() || alpha.size() != freq_thz.size())
    throw std::invalid_argument("MaterialSpec: tables must share one non-empty frequency grid");
  for (std::size_t i = 1; i < freq_thz.size(); ++i)
    if (!(freq_thz[i] > freq_thz[i - 1])) throw std::invalid_argument("MaterialSpec: frequency grid must increase");
  for (double v : n)
    if (!(v >= 1.0)) throw std::invalid_argument("MaterialSpec: n must be >= 1");
  for (double v : alpha)
    if (!(v >= 0.0)) throw std::invalid_argument("MaterialSpec: alpha must be >= 0");
}

double MaterialSpec::index_at(double f) const { return interp(freq_thz, n, f); }
double MaterialSpec::alpha_at(double f) const { return interp(freq_thz, alpha, f); }

MaterialSpec constant_material(std::string name, double n, double alpha_per_mm) {
  MaterialSpec m{std::move(name), {0.0}, {n}, {alpha_per_mm}};
  m.validate();
  return m;
}

MaterialSpec hips() { return constant_material("HIPS", 1.54, 0.2); }

MaterialSpec load_material_csv(const std::filesystem::path& path, std::string name) {
  MaterialSpec m;
  m.name = std::move(name);
  for (const auto& row : read_numeric_csv(path, 3)) {
    m.freq_thz.push_back(row[0]);
    m.n.push_back(row[1]);
    m.alpha.push_back(row[2]);
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Interfaces and propagation

double time_of_flight_thickness(double delta_t_ps, double n) {
  if (!(n >= 1.0)) throw std::invalid_argument("time_of_flight_thickness: n must be >= 1");
  if (delta_t_ps < 0) throw std::invalid_argument("time_of_flight_thickness: delta_t must be >= 0");
  return kLightMmPerPs * delta_t_ps / (2.0 * n);
}

double transmission_delay_thickness(double delta_t_ps, double n) {
  if (!(n > 1.0)) throw std::invalid_argument("transmission_delay_thickness: n must be > 1");
  return time_of_flight_thickness(2.0 * n * delta_t_ps / (n - 1.0), n);
}

FresnelCoefficients fresnel_transmission(double n1, double n2) {
  if (!(n1 >= 1.0) || !(n2 >= 1.0)) throw std::invalid_argument("fresnel_transmission: indices must be >= 1");
  return {2.0 * n1 / (n1 + n2), (n1 - n2) / (n1 + n2)};
}

double beer_lambert_field(double alpha_per_mm, double path_mm) {
  if (alpha_per_mm < 0 || path_mm < 0) throw std::invalid_argument("beer_lambert_field: negative argument");
  return std::exp(-0.5 * alpha_per_mm * path_mm);
}

double beam_radius_mm(double freq_thz, double waist_mm, double z_mm) {
  if (!(waist_mm > 0) || !(freq_thz > 0)) throw std::invalid_argument("beam_radius_mm: waist and frequency must be > 0");
  const double lambda = kLightMmPerPs / freq_thz;
  const double zr = std::numbers::pi * waist_mm * waist_mm / lambda;
  return waist_mm * std::sqrt(1.0 + (z_mm / zr) * (z_mm / zr));
}

std::vector<double> gaussian_beam_profile(double radius_mm, double pitch_mm, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
  std::vector<double> g(static_cast<std::size_t>(kernel_size));
  const int half = kernel_size / 2;
  double sum = 0;
  for (int i = 0; i < kernel_size; ++i) {
    double x = (i - half) * pitch_mm;
    g[static_cast<std::size_t>(i)] = std::exp(-2.0 * x * x / (radius_mm * radius_mm));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

PsfKernel gaussian_beam_psf(double freq_thz, double waist_mm, double z_mm, double pitch_mm, int kernel_size) {
  if (!(pitch_mm > 0)) throw std::invalid_argument("gaussian_beam_psf: pitch must be > 0");
  PsfKernel out;
  out.radius_mm = beam_radius_mm(freq_thz, waist_mm, z_mm);
  auto g = gaussian_beam_profile(out.radius_mm, pitch_mm, kernel_size);
  out.kernel = Image2D(kernel_size, kernel_size, pitch_mm);
  for (int r = 0; r < kernel_size; ++r)
    for (int c = 0; c < kernel_size; ++c)
      out.kernel(r, c) = g[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(c)];
  out.undersized = kernel_size * pitch_mm < 3.0 * out.radius_mm;
  return out;
}

} // namespace thzlab
