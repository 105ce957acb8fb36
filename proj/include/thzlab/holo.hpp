#pragma once

#include "thzlab/fft.hpp"
#include "thzlab/tensor.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace thzlab {

/// Monochromatic complex field sampled on a rows x cols grid.
struct ComplexField2D {
  int rows = 0;
  int cols = 0;
  double pitch_mm = 1.0;
  double freq_thz = 1.0;
  std::vector<cplx> data;

  ComplexField2D() = default;
  ComplexField2D(int rows, int cols, double pitch_mm, double freq_thz);

  cplx& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  cplx operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double wavelength_mm() const;

  Tensor to_tensor() const;
  static ComplexField2D from_tensor(const Tensor& t, double pitch_mm, double freq_thz);
};

/// Angular-spectrum transfer function on the FFT grid:
/// exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2)) inside the propagating disk, 0 outside.
std::vector<cplx> angular_spectrum_transfer(int rows, int cols, double pitch_mm, double freq_thz, double z_mm);

std::vector<cplx> angular_spectrum_propagate(std::span<const cplx> field, int rows, int cols, double pitch_mm,
                                             double freq_thz, double z_mm);
ComplexField2D angular_spectrum_propagate(const ComplexField2D& u, double z_mm);

/// Spatial carrier sin(tilt)/lambda (cycles/mm) of a reference tilted in the x-z plane.
double carrier_frequency(double tilt_deg, double freq_thz);

/// Tilted plane-wave reference ref_amp exp(i 2 pi x sin(tilt) / lambda), x = col * pitch.
ComplexField2D reference_wave(int rows, int cols, double pitch_mm, double freq_thz, double tilt_deg, double ref_amp);

/// |U_r|^2 + U_r* U_o + U_r U_o* + |U_o|^2 evaluated term by term.
Image2D synthesize_hologram(const ComplexField2D& obj, double tilt_deg, double ref_amp);

enum class OrderWindow { Rectangular, Circular };

struct OffaxisOptions {
  OrderWindow window = OrderWindow::Rectangular;
  double window_fraction = 0.5; ///< window half-width as a fraction of the carrier offset
};

/// Demodulates the object-carrying order to baseband, windows it, divides by
/// ref_amp and back-propagates by -z. Phase is returned wrapped.
ComplexField2D reconstruct_offaxis(const Image2D& h, double tilt_deg, double ref_amp, double z_mm, double freq_thz,
                                   const OffaxisOptions& opt = {});

void save_field(const ComplexField2D& f, const std::filesystem::path& path);
ComplexField2D load_field(const std::filesystem::path& path);

} // namespace thzlab
