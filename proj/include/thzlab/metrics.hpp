#pragma once

#include "thzlab/tensor.hpp"

namespace thzlab {

inline constexpr double kPsnrCap = 99.0;

double mse(const Image2D& a, const Image2D& b);

/// 10 log10(range^2 / MSE), capped at 99 dB.
double psnr(const Image2D& a, const Image2D& b, double data_range = 1.0);

/// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01,
/// K2 0.03). The pair is min-max normalized jointly to [0, 1] first.
double ssim(const Image2D& a, const Image2D& b);

/// Mean over z of per-slice MSE after min-max normalizing each volume.
/// A constant volume is clamped to [0, 1] instead of normalized.
double mse_cross_sections(const Volume3D& a, const Volume3D& b);

} // namespace thzlab
