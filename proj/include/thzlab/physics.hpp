#pragma once

#include "thzlab/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace thzlab {

/// Speed of light in mm/ps.
inline constexpr double kLightMmPerPs = 0.299792458;

/// One sampled THz electric-field waveform.
struct TimeTrace {
  std::vector<double> samples;
  double dt_ps = 0.1;
};

struct PulseModel {
  double dt_ps = 0.1;
  int n_samples = 1024;
  double fwhm_fs = 516.0;
  double peak_amplitude = 1.0;

  void validate() const;
  /// Nyquist frequency 1/(2 dt); 5 THz at the defaults.
  double nyquist_thz() const { return 0.5 / dt_ps; }
  double df_thz() const { return 1.0 / (n_samples * dt_ps); }
  /// Width parameter tau (ps) of E(t) ~ -(t - t0)/tau exp(-(t - t0)^2 / (2 tau^2)).
  double tau_ps() const;
  double center_ps() const { return n_samples / 4 * dt_ps; }
};

/// Gaussian first-derivative pulse centered at n_samples/4 samples. The outer
/// half-maximum crossings of |E(t)| are fwhm_fs apart; max E equals peak_amplitude.
TimeTrace reference_pulse(const PulseModel& model);

/// Full width at half maximum (fs) of |trace|, measured between the first and
/// last half-maximum crossings with linear interpolation between samples.
double measure_abs_fwhm_fs(const TimeTrace& trace);

struct WaterLine {
  double center_thz;
  double strength; ///< peak field absorption (1/mm)
  double halfwidth_thz;
};

struct WaterVaporModel {
  std::vector<WaterLine> lines;
  double continuum = 0.0; ///< frequency-independent field absorption (1/mm)

  void validate() const;
  double alpha(double f_thz) const;
  /// Line centers that lie within [lo, hi].
  std::vector<double> centers_in(double lo, double hi) const;
};

/// Default lab-air line list. Centers are the rotational water-vapor lines
/// visible as distinct maxima in published low-resolution THz transmission
/// spectra below 2.3 THz; strengths are effective values for a humid lab path
/// and are configuration, not measured constants.
WaterVaporModel default_water_model();
WaterVaporModel load_water_lines_csv(const std::filesystem::path& path);

/// alpha(f) = continuum + sum_i s_i hw_i^2 / ((f - f_i)^2 + hw_i^2).
std::vector<double> absorption_spectrum(const WaterVaporModel& w, std::span<const double> freqs_thz);

struct MaterialSpec {
  std::string name;
  std::vector<double> freq_thz; ///< strictly increasing
  std::vector<double> n;
  std::vector<double> alpha; ///< field absorption coefficient, 1/mm

  void validate() const;
  /// Linear interpolation, clamped at the table ends.
  double index_at(double f_thz) const;
  double alpha_at(double f_thz) const;
};

MaterialSpec constant_material(std::string name, double n, double alpha_per_mm);
/// High-impact polystyrene placeholder: n = 1.54, alpha = 0.2/mm.
MaterialSpec hips();
MaterialSpec load_material_csv(const std::filesystem::path& path, std::string name);

/// Thickness (mm) from a reflection-mode round-trip delay: d = c dt / (2 n).
double time_of_flight_thickness(double delta_t_ps, double n);

/// Transmission-mode inversion. A slab of index n adds (n - 1) L / c of delay
/// relative to air; substituting the equivalent round-trip delay
/// 2 n (n - 1)^-1 dt into the reflection formula yields L = c dt / (n - 1).
double transmission_delay_thickness(double delta_t_ps, double n);

struct FresnelCoefficients {
  double t; ///< amplitude transmission
  double r; ///< amplitude reflection
};

/// Normal-incidence Fresnel coefficients from medium n1 into n2.
FresnelCoefficients fresnel_transmission(double n1, double n2);

/// Field attenuation exp(-alpha * path / 2).
double beer_lambert_field(double alpha_per_mm, double path_mm);

struct PsfKernel {
  Image2D kernel;
  double radius_mm = 0;   ///< beam radius w(z)
  bool undersized = false; ///< kernel extent smaller than 3 w(z)
};

/// 1/e^2 beam radius w(z) = w0 sqrt(1 + (z/zR)^2), zR = pi w0^2 / lambda.
double beam_radius_mm(double freq_thz, double waist_mm, double z_mm);

/// Normalized intensity kernel exp(-2 r^2 / w(z)^2), summing to 1.
PsfKernel gaussian_beam_psf(double freq_thz, double waist_mm, double z_mm, double pitch_mm, int kernel_size);

/// 1-D factor g of the separable PSF (kernel = g g^T), summing to 1.
std::vector<double> gaussian_beam_profile(double radius_mm, double pitch_mm, int kernel_size);

} // namespace thzlab
