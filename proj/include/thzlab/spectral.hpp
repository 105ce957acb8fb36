#pragma once

#include "thzlab/fft.hpp"
#include "thzlab/forward_sim.hpp"
#include "thzlab/physics.hpp"
#include "thzlab/tensor.hpp"

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace thzlab {

/// One-sided spectrum of a real trace (n/2 + 1 bins, unnormalized DFT).
///
/// Parseval under this convention:
///   sum_t x_t^2 = (|X_0|^2 + 2 sum_{0<k<n/2} |X_k|^2 + |X_{n/2}|^2) / n.
struct Spectrum {
  std::vector<cplx> bins;
  double df_thz = 0;
  std::size_t n_samples = 0;

  std::size_t nearest_bin(double f_thz) const;
  double frequency(std::size_t k) const { return static_cast<double>(k) * df_thz; }
};

Spectrum fft_trace(const TimeTrace& t);
TimeTrace inverse_fft_trace(const Spectrum& s, double dt_ps);

double time_energy(const TimeTrace& t);
double spectral_energy(const Spectrum& s);

/// Largest signed sample value.
double time_max(const TimeTrace& t);
double time_max(std::span<const float> samples);
/// Index of the largest signed sample; earliest index on ties.
std::size_t time_max_index(std::span<const double> samples);
/// Sub-sample peak location (samples) from a parabola through the arg-max and its neighbors.
double time_max_position(std::span<const double> samples);

/// Read-only view of one scan view: rows x cols pixels of n_samples each.
struct ViewTraces {
  int rows = 0;
  int cols = 0;
  int n_samples = 0;
  double dt_ps = 0.1;
  double pitch_mm = 0.25;
  std::span<const float> data;

  std::span<const float> trace(int r, int c) const {
    return data.subspan((static_cast<std::size_t>(r) * cols + c) * static_cast<std::size_t>(n_samples),
                        static_cast<std::size_t>(n_samples));
  }
};

ViewTraces view_of(const ScanCube& cube, int view);

Image2D time_max_image(const ViewTraces& view);

/// Amplitude |E(f)| and reference-relative phase angle(E(f)/E_ref(f)) in (-pi, pi]
/// at the bin nearest f.
std::pair<Image2D, Image2D> band_image(const ViewTraces& view, double f_thz, const Spectrum& reference);

/// The `count` strongest local maxima of alpha(f) inside [f_lo, f_hi], ascending.
std::vector<double> select_water_bands(const WaterVaporModel& w, double f_lo = 0.3, double f_hi = 1.3, int count = 12);

inline constexpr int kBandCount = 12;
inline constexpr int kFeatureChannels = 1 + 2 * kBandCount;

/// Channel 0 Time-max, 1..12 amplitude, 13..24 phase, all mapped into [0, 1].
struct FeatureStack {
  int rows = 0;
  int cols = 0;
  double pitch_mm = 0.25;
  std::vector<double> band_freqs;
  std::vector<double> data; ///< 25 x rows x cols

  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * rows * cols, static_cast<std::size_t>(rows) * cols};
  }
  Image2D channel_image(int c) const;
};

/// Min-max normalization to [0, 1]; constant input maps to zeros.
void normalize_min_max(std::span<double> v);

FeatureStack feature_stack(const ViewTraces& view, std::span<const double> bands, const Spectrum& reference);

void save_features(const FeatureStack& fs, const std::filesystem::path& path);
FeatureStack load_features(const std::filesystem::path& path);

} // namespace thzlab
