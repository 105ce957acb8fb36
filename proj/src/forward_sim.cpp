#include "thzlab/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace thzlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string encode_lines(const WaterVaporModel& w) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < w.lines.size(); ++i) {
    const auto& l = w.lines[i];
    os << (i ? ";" : "") << l.center_thz << ':' << l.strength << ':' << l.halfwidth_thz;
  }
  return os.str();
}

WaterVaporModel decode_lines(const std::string& s, double continuum) {
  WaterVaporModel w;
  w.continuum = continuum;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    WaterLine l{};
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> l.center_thz >> c1 >> l.strength >> c2 >> l.halfwidth_thz) || c1 != ':' || c2 != ':')
      throw DataError("malformed water line entry: " + item);
    w.lines.push_back(l);
  }
  return w;
}

std::string full(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Separable blur of one complex plane with edge replication.
void blur_plane(std::vector<cplx>& plane, int rows, int cols, const std::vector<double>& g) {
  const int half = static_cast<int>(g.size()) / 2;
  std::vector<cplx> tmp(plane.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      cplx acc = 0;
      for (int k = -half; k <= half; ++k) {
        int cc = std::clamp(c + k, 0, cols - 1);
        acc += g[static_cast<std::size_t>(k + half)] * plane[static_cast<std::size_t>(r) * cols + cc];
      }
      tmp[static_cast<std::size_t>(r) * cols + c] = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      cplx acc = 0;
      for (int k = -half; k <= half; ++k) {
        int rr = std::clamp(r + k, 0, rows - 1);
        acc += g[static_cast<std::size_t>(k + half)] * tmp[static_cast<std::size_t>(rr) * cols + c];
      }
      plane[static_cast<std::size_t>(r) * cols + c] = acc;
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Config

void ScanConfig::validate() const {
  pulse.validate();
  water.validate();
  if (n_views < 1) throw std::invalid_argument("ScanConfig: n_views must be >= 1");
  if (!(angle_step_deg > 0) || !(x_step_mm > 0) || !(z_step_mm > 0) || !(x_range_mm > 0))
    throw std::invalid_argument("ScanConfig: steps and ranges must be positive");
  if (std::abs(n_views * angle_step_deg - angular_range_deg) > 1e-9 * std::max(1.0, angular_range_deg))
    throw std::invalid_argument("ScanConfig: n_views * angle_step must equal angular_range");
  if (air_path_mm < 0) throw std::invalid_argument("ScanConfig: air_path_mm must be >= 0");
  if (!(noise_dynamic_range_db > 0)) throw std::invalid_argument("ScanConfig: dynamic range must be > 0");
  if (psf.enabled && (!(psf.waist_mm > 0) || psf.kernel_size < 1 || psf.kernel_size % 2 == 0))
    throw std::invalid_argument("ScanConfig: invalid beam PSF settings");
}

int ScanConfig::n_cols() const { return static_cast<int>(std::lround(x_range_mm / x_step_mm)); }

ScanGeometry ScanConfig::geometry(const Phantom& p) const {
  const double width = std::max(p.grid.nx, p.grid.ny) * p.pitch_mm();
  if (width > x_range_mm + 1e-9) throw std::invalid_argument("phantom is wider than the scan x_range");
  const int rows = static_cast<int>(std::floor(p.grid.nz * p.pitch_mm() / z_step_mm + 1e-9));
  return {rows, n_cols(), z_step_mm, x_step_mm};
}

KeyValues ScanConfig::to_kv() const {
  return {
      {"n_views", std::to_string(n_views)},
      {"angular_range_deg", full(angular_range_deg)},
      {"angle_step_deg", full(angle_step_deg)},
      {"x_range_mm", full(x_range_mm)},
      {"x_step_mm", full(x_step_mm)},
      {"z_step_mm", full(z_step_mm)},
      {"pulse_dt_ps", full(pulse.dt_ps)},
      {"pulse_n_samples", std::to_string(pulse.n_samples)},
      {"pulse_fwhm_fs", full(pulse.fwhm_fs)},
      {"pulse_peak", full(pulse.peak_amplitude)},
      {"water_lines", encode_lines(water)},
      {"water_continuum", full(water.continuum)},
      {"air_path_mm", full(air_path_mm)},
      {"noise_dynamic_range_db", full(noise_dynamic_range_db)},
      {"seed", std::to_string(rng_seed)},
      {"apply_fresnel", apply_fresnel ? "1" : "0"},
      {"psf_enabled", psf.enabled ? "1" : "0"},
      {"psf_waist_mm", full(psf.waist_mm)},
      {"psf_z_mm", full(psf.z_mm)},
      {"psf_kernel_size", std::to_string(psf.kernel_size)},
  };
}

ScanConfig ScanConfig::from_kv(const KeyValues& kv) {
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("scan sidecar missing key: " + k);
    return it->second;
  };
  ScanConfig c;
  try {
    c.n_views = std::stoi(get("n_views"));
    c.angular_range_deg = std::stod(get("angular_range_deg"));
    c.angle_step_deg = std::stod(get("angle_step_deg"));
    c.x_range_mm = std::stod(get("x_range_mm"));
    c.x_step_mm = std::stod(get("x_step_mm"));
    c.z_step_mm = std::stod(get("z_step_mm"));
    c.pulse.dt_ps = std::stod(get("pulse_dt_ps"));
    c.pulse.n_samples = std::stoi(get("pulse_n_samples"));
    c.pulse.fwhm_fs = std::stod(get("pulse_fwhm_fs"));
    c.pulse.peak_amplitude = std::stod(get("pulse_peak"));
    c.water = decode_lines(get("water_lines"), std::stod(get("water_continuum")));
    c.air_path_mm = std::stod(get("air_path_mm"));
    c.noise_dynamic_range_db = std::stod(get("noise_dynamic_range_db"));
    c.rng_seed = std::stoull(get("seed"));
    c.apply_fresnel = get("apply_fresnel") == "1";
    c.psf.enabled = get("psf_enabled") == "1";
    c.psf.waist_mm = std::stod(get("psf_waist_mm"));
    c.psf.z_mm = std::stod(get("psf_z_mm"));
    c.psf.kernel_size = std::stoi(get("psf_kernel_size"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("malformed scan sidecar: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Pixel model

PixelModel::PixelModel(const ScanConfig& c) : cfg(c) {
  cfg.validate();
  const auto ref = reference_pulse(cfg.pulse);
  auto spec = fft::rfft(ref.samples);
  freqs_thz.resize(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    freqs_thz[k] = static_cast<double>(k) * cfg.pulse.df_thz();
    spec[k] *= std::exp(-0.5 * cfg.water.alpha(freqs_thz[k]) * cfg.air_path_mm);
  }
  air_spectrum = std::move(spec);
  air_trace.dt_ps = cfg.pulse.dt_ps;
  air_trace.samples = fft::irfft(air_spectrum, static_cast<std::size_t>(cfg.pulse.n_samples));
}

std::vector<cplx> PixelModel::spectrum(const MaterialSpec& m, const RayProfile& ray) const {
  std::vector<cplx> out = air_spectrum;
  const double L = ray.length_mm;
  if (L <= 0) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double f = freqs_thz[k];
    const double n = m.index_at(f);
    double amp = std::exp(-0.5 * m.alpha_at(f) * L);
    if (cfg.apply_fresnel) {
      const double tt = fresnel_transmission(1.0, n).t * fresnel_transmission(n, 1.0).t;
      amp *= std::pow(tt, ray.entries);
    }
    const double phase = -kTwoPi * f * (n - 1.0) * L / kLightMmPerPs;
    out[k] *= std::polar(amp, phase);
  }
  return out;
}

TimeTrace PixelModel::trace(const MaterialSpec& m, const RayProfile& ray) const {
  if (ray.length_mm <= 0) return air_trace;
  return {fft::irfft(spectrum(m, ray), static_cast<std::size_t>(cfg.pulse.n_samples)), cfg.pulse.dt_ps};
}

TimeTrace simulate_pixel_clean(const Phantom& p, const ScanConfig& cfg, double angle_deg, int row, int col) {
  PixelModel model(cfg);
  return model.trace(p.material, ray_profile(p, cfg.geometry(p), angle_deg, row, col));
}

double noise_sigma(double dynamic_range_db, double reference_peak) {
  if (!(dynamic_range_db > 0)) throw std::invalid_argument("dynamic range must be > 0");
  if (dynamic_range_db >= 300) return 0.0;
  return reference_peak / std::pow(10.0, dynamic_range_db / 20.0);
}

TimeTrace add_noise(TimeTrace trace, double dynamic_range_db, Rng& rng, double reference_peak) {
  const double sigma = noise_sigma(dynamic_range_db, reference_peak);
  if (sigma == 0) return trace;
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& v : trace.samples) v += gauss(rng);
  return trace;
}

TimeTrace simulate_pixel(const Phantom& p, const ScanConfig& cfg, int view, int row, int col) {
  auto clean = simulate_pixel_clean(p, cfg, cfg.angle_deg(view), row, col);
  Rng rng(stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(row),
                      static_cast<std::uint64_t>(col)));
  return add_noise(std::move(clean), cfg.noise_dynamic_range_db, rng, cfg.pulse.peak_amplitude);
}

// ---------------------------------------------------------------------------
// Scans

namespace {

std::vector<float> simulate_view_with(const PixelModel& model, const Phantom& p, int view) {
  const auto& cfg = model.cfg;
  const auto g = cfg.geometry(p);
  const auto ns = static_cast<std::size_t>(cfg.pulse.n_samples);
  const double angle = cfg.angle_deg(view);
  const std::size_t n_pix = static_cast<std::size_t>(g.rows) * g.cols;
  std::vector<float> out(n_pix * ns);

  std::vector<RayProfile> rays(n_pix);
  parallel_for(static_cast<std::int64_t>(n_pix), [&](std::int64_t i) {
    rays[static_cast<std::size_t>(i)] =
        ray_profile(p, g, angle, static_cast<int>(i / g.cols), static_cast<int>(i % g.cols));
  });

  std::vector<std::vector<double>> clean(n_pix);
  if (!cfg.psf.enabled) {
    parallel_for(static_cast<std::int64_t>(n_pix), [&](std::int64_t i) {
      clean[static_cast<std::size_t>(i)] = model.trace(p.material, rays[static_cast<std::size_t>(i)]).samples;
    });
  } else {
    const std::size_t nb = model.freqs_thz.size();
    std::vector<std::vector<cplx>> spectra(n_pix);
    parallel_for(static_cast<std::int64_t>(n_pix), [&](std::int64_t i) {
      spectra[static_cast<std::size_t>(i)] = model.spectrum(p.material, rays[static_cast<std::size_t>(i)]);
    });
    parallel_for(static_cast<std::int64_t>(nb), [&](std::int64_t kk) {
      const auto k = static_cast<std::size_t>(kk);
      if (model.freqs_thz[k] <= 0) return;
      const double radius = beam_radius_mm(model.freqs_thz[k], cfg.psf.waist_mm, cfg.psf.z_mm);
      const auto gk = gaussian_beam_profile(radius, cfg.x_step_mm, cfg.psf.kernel_size);
      std::vector<cplx> plane(n_pix);
      for (std::size_t i = 0; i < n_pix; ++i) plane[i] = spectra[i][k];
      blur_plane(plane, g.rows, g.cols, gk);
      for (std::size_t i = 0; i < n_pix; ++i) spectra[i][k] = plane[i];
    });
    parallel_for(static_cast<std::int64_t>(n_pix), [&](std::int64_t i) {
      clean[static_cast<std::size_t>(i)] = fft::irfft(spectra[static_cast<std::size_t>(i)], ns);
    });
  }

  parallel_for(static_cast<std::int64_t>(n_pix), [&](std::int64_t i) {
    const auto idx = static_cast<std::size_t>(i);
    TimeTrace t{std::move(clean[idx]), cfg.pulse.dt_ps};
    Rng rng(stream_seed(cfg.rng_seed, static_cast<std::uint64_t>(view), static_cast<std::uint64_t>(i / g.cols),
                        static_cast<std::uint64_t>(i % g.cols)));
    t = add_noise(std::move(t), cfg.noise_dynamic_range_db, rng, cfg.pulse.peak_amplitude);
    std::copy(t.samples.begin(), t.samples.end(), out.begin() + static_cast<std::ptrdiff_t>(idx * ns));
  });
  return out;
}

} // namespace

std::vector<float> simulate_view(const Phantom& p, const ScanConfig& cfg, int view) {
  PixelModel model(cfg);
  return simulate_view_with(model, p, view);
}

ScanCube simulate_scan(const Phantom& p, const ScanConfig& cfg) {
  PixelModel model(cfg);
  const auto g = cfg.geometry(p);
  ScanCube cube{Tensor(DType::Real32, {static_cast<std::uint32_t>(cfg.n_views), static_cast<std::uint32_t>(g.rows),
                                       static_cast<std::uint32_t>(g.cols),
                                       static_cast<std::uint32_t>(cfg.pulse.n_samples)}),
                cfg};
  const std::size_t per_view = static_cast<std::size_t>(g.rows) * g.cols * static_cast<std::size_t>(cfg.pulse.n_samples);
  for (int v = 0; v < cfg.n_views; ++v) {
    auto traces = simulate_view_with(model, p, v);
    std::copy(traces.begin(), traces.end(), cube.traces.real().begin() + static_cast<std::ptrdiff_t>(v * per_view));
  }
  return cube;
}

std::span<const float> ScanCube::trace(int view, int row, int col) const {
  const std::size_t ns = static_cast<std::size_t>(samples());
  const std::size_t idx = ((static_cast<std::size_t>(view) * rows() + row) * cols() + col) * ns;
  return traces.real().subspan(idx, ns);
}

double ScanCube::angle_deg(int view) const {
  if (flipped && view >= config.n_views) return config.angle_deg(view - config.n_views) + 180.0;
  return config.angle_deg(view);
}

ScanCube augment_flip(const ScanCube& cube) {
  const auto& sh = cube.traces.shape();
  ScanCube out{Tensor(DType::Real32, {sh[0] * 2, sh[1], sh[2], sh[3]}), cube.config};
  out.flipped = true;
  const std::size_t ns = sh[3], cols = sh[2], rows = sh[1], views = sh[0];
  const std::size_t per_view = rows * cols * ns;
  auto src = cube.traces.real();
  auto dst = out.traces.real();
  std::copy(src.begin(), src.end(), dst.begin());
  for (std::size_t v = 0; v < views; ++v)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        auto from = src.begin() + static_cast<std::ptrdiff_t>(v * per_view + (r * cols + (cols - 1 - c)) * ns);
        std::copy(from, from + static_cast<std::ptrdiff_t>(ns),
                  dst.begin() + static_cast<std::ptrdiff_t>((views + v) * per_view + (r * cols + c) * ns));
      }
  return out;
}

std::vector<double> cs_measure(const SensingMatrix& masks, const Image2D& img, double noise_db, Rng* rng) {
  if (masks.cols() != static_cast<int>(img.size())) throw std::invalid_argument("cs_measure: mask columns must equal pixel count");
  auto s = masks.apply(img.data);
  if (noise_db > 0 && noise_db < 300) {
    if (!rng) throw std::invalid_argument("cs_measure: noise requested without an RNG");
    double peak = 0;
    for (double v : s) peak = std::max(peak, std::abs(v));
    std::normal_distribution<double> gauss(0.0, peak / std::pow(10.0, noise_db / 20.0));
    for (auto& v : s) v += gauss(*rng);
  }
  return s;
}

void save_cube(const ScanCube& cube, const std::filesystem::path& path) {
  write_thzt(cube.traces, path);
  auto kv = cube.config.to_kv();
  kv["kind"] = "scan_cube";
  kv["flipped"] = cube.flipped ? "1" : "0";
  write_sidecar(kv, sidecar_path(path));
}

ScanCube load_cube(const std::filesystem::path& path) {
  ScanCube cube{read_thzt(path), {}};
  if (cube.traces.ndim() != 4 || cube.traces.dtype() != DType::Real32) throw DataError("scan cube must be a 4-D real32 tensor");
  auto kv = read_sidecar(sidecar_path(path));
  cube.config = ScanConfig::from_kv(kv);
  cube.flipped = kv.count("flipped") && kv["flipped"] == "1";
  const int expect_views = cube.config.n_views * (cube.flipped ? 2 : 1);
  if (cube.views() != expect_views || cube.samples() != cube.config.pulse.n_samples)
    throw DataError("scan cube shape does not match its sidecar");
  return cube;
}

} // namespace thzlab
