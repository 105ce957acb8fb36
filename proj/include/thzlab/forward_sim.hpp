#pragma once

#include "thzlab/cs.hpp"
#include "thzlab/fft.hpp"
#include "thzlab/parallel.hpp"
#include "thzlab/phantom.hpp"
#include "thzlab/physics.hpp"
#include "thzlab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace thzlab {

/// Optional diffraction blur of the projection-domain field map.
struct BeamPsfConfig {
  bool enabled = false;
  double waist_mm = 0.5;
  double z_mm = 10.0;
  int kernel_size = 9;
};

struct ScanConfig {
  int n_views = 30;
  double angular_range_deg = 180;
  double angle_step_deg = 6;
  double x_range_mm = 72;
  double x_step_mm = 0.25;
  double z_step_mm = 0.25;
  PulseModel pulse;
  WaterVaporModel water = default_water_model();
  double air_path_mm = 300;
  double noise_dynamic_range_db = 41.7;
  std::uint64_t rng_seed = 0;
  bool apply_fresnel = true;
  BeamPsfConfig psf;

  void validate() const;
  double angle_deg(int view) const { return view * angle_step_deg; }
  int n_cols() const;
  ScanGeometry geometry(const Phantom& p) const;

  KeyValues to_kv() const;
  static ScanConfig from_kv(const KeyValues& kv);
};

/// views x height x width x n_samples real32 traces.
struct ScanCube {
  Tensor traces;
  ScanConfig config;

  int views() const { return static_cast<int>(traces.shape()[0]); }
  int rows() const { return static_cast<int>(traces.shape()[1]); }
  int cols() const { return static_cast<int>(traces.shape()[2]); }
  int samples() const { return static_cast<int>(traces.shape()[3]); }
  std::span<const float> trace(int view, int row, int col) const;
  /// Angle of a view; flipped views (second half after augment_flip) map to theta + 180.
  double angle_deg(int view) const;
  bool flipped = false;
};

/// Precomputed per-scan quantities shared by every pixel.
struct PixelModel {
  ScanConfig cfg;
  std::vector<double> freqs_thz;
  std::vector<cplx> air_spectrum; ///< E_ref(f) with the water path applied
  TimeTrace air_trace;

  explicit PixelModel(const ScanConfig& cfg);
  /// Noiseless one-sided output spectrum for a ray through `material`.
  std::vector<cplx> spectrum(const MaterialSpec& material, const RayProfile& ray) const;
  TimeTrace trace(const MaterialSpec& material, const RayProfile& ray) const;
};

/// Noise-free pixel trace.
TimeTrace simulate_pixel_clean(const Phantom& p, const ScanConfig& cfg, double angle_deg, int row, int col);

/// Pixel trace including the per-pixel noise stream (seed, view, row, col).
TimeTrace simulate_pixel(const Phantom& p, const ScanConfig& cfg, int view, int row, int col);

/// Adds white Gaussian noise with sigma = reference_peak / 10^(DR/20).
/// DR >= 300 dB is treated as noiseless.
TimeTrace add_noise(TimeTrace trace, double dynamic_range_db, Rng& rng, double reference_peak = 1.0);
double noise_sigma(double dynamic_range_db, double reference_peak = 1.0);

/// Traces of one view, rows x cols x n_samples, noise included.
std::vector<float> simulate_view(const Phantom& p, const ScanConfig& cfg, int view);

/// Full raster scan. Pixels are independent work items; output is identical
/// for any thread count.
ScanCube simulate_scan(const Phantom& p, const ScanConfig& cfg);

/// Appends width-reversed copies of every view.
ScanCube augment_flip(const ScanCube& cube);

/// s = A vec(x) (+ noise with sigma = max|s| / 10^(noise_db/20)); vec is row-major.
std::vector<double> cs_measure(const SensingMatrix& masks, const Image2D& img, double noise_db, Rng* rng = nullptr);

void save_cube(const ScanCube& cube, const std::filesystem::path& path);
ScanCube load_cube(const std::filesystem::path& path);

} // namespace thzlab
