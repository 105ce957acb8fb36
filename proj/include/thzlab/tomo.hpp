#pragma once

#include "thzlab/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace thzlab {

/// n_angles x n_bins parallel-beam projections. Bin b sits at
/// rho = (b - (n_bins - 1) / 2) * bin_pitch_mm.
struct Sinogram {
  int n_angles = 0;
  int n_bins = 0;
  double bin_pitch_mm = 1.0;
  std::vector<double> angles_deg;
  std::vector<double> data;

  Sinogram() = default;
  Sinogram(std::vector<double> angles_deg, int n_bins, double bin_pitch_mm);

  double& operator()(int a, int b) { return data[static_cast<std::size_t>(a) * n_bins + b]; }
  double operator()(int a, int b) const { return data[static_cast<std::size_t>(a) * n_bins + b]; }

  /// Throws std::invalid_argument unless angles are strictly increasing in [0, 180).
  void validate() const;
};

/// Line integrals sum_t f(rho cos t - s sin t, rho sin t + s cos t) * pitch,
/// sampled on the rotated pixel lattice with bilinear interpolation.
/// Image columns map to x and rows to y, both centered on the grid.
Sinogram radon(const Image2D& img, const std::vector<double>& angles_deg, int n_bins = 0);

/// Exact transpose of radon.
Image2D radon_adjoint(const Sinogram& s, int out_size, double pitch_mm);

enum class FbpFilter { RamLak, SheppLogan, Hann };
FbpFilter parse_fbp_filter(const std::string& name);
std::string to_string(FbpFilter f);

/// Frequency response of the band-limited ramp (spatial-domain ramp kernel,
/// zero-padded to `padded` samples) times the apodization window.
std::vector<double> fbp_filter_response(FbpFilter f, int padded, double bin_pitch_mm);

/// Ramp-filtered, pixel-driven backprojection scaled by pi / n_angles.
/// out_size 0 means n_bins.
Image2D fbp(const Sinogram& s, FbpFilter filter = FbpFilter::RamLak, int out_size = 0);

struct SartResult {
  Image2D image;
  std::vector<double> residuals; ///< ||A x - p|| before the first and after every iteration
};

SartResult sart(const Sinogram& s, int iters, double relax = 0.25, const Image2D* init = nullptr, int out_size = 0);

struct VolumeOptions {
  FbpFilter filter = FbpFilter::RamLak;
  bool binarize = false;
  double threshold = 0.5;
};

/// Row z of every projection forms the sinogram of slice z.
Volume3D reconstruct_volume(const std::vector<Image2D>& projections, const std::vector<double>& angles_deg,
                            const VolumeOptions& opt = {});

void save_sinogram(const Sinogram& s, const std::filesystem::path& path);
Sinogram load_sinogram(const std::filesystem::path& path);

} // namespace thzlab
