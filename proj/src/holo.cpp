#include "thzlab/holo.hpp"

#include "thzlab/physics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace thzlab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

ComplexField2D::ComplexField2D(int rows_, int cols_, double pitch, double freq)
    : rows(rows_), cols(cols_), pitch_mm(pitch), freq_thz(freq),
      data(static_cast<std::size_t>(rows_) * cols_, cplx{0.0, 0.0}) {
  if (rows_ <= 0 || cols_ <= 0) throw std::invalid_argument("field dimensions must be positive");
  if (!(pitch > 0) || !(freq > 0)) throw std::invalid_argument("field pitch and frequency must be positive");
}

double ComplexField2D::wavelength_mm() const { return kLightMmPerPs / freq_thz; }

Tensor ComplexField2D::to_tensor() const {
  std::vector<std::complex<float>> v(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) v[i] = {static_cast<float>(data[i].real()), static_cast<float>(data[i].imag())};
  return Tensor({static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)}, std::span<const std::complex<float>>(v));
}

ComplexField2D ComplexField2D::from_tensor(const Tensor& t, double pitch, double freq) {
  if (t.dtype() != DType::Complex64 || t.ndim() != 2) throw DataError("expected a 2-D complex64 tensor");
  ComplexField2D f(static_cast<int>(t.shape()[0]), static_cast<int>(t.shape()[1]), pitch, freq);
  auto src = t.complex();
  for (std::size_t i = 0; i < src.size(); ++i) f.data[i] = {src[i].real(), src[i].imag()};
  return f;
}

std::vector<cplx> angular_spectrum_transfer(int rows, int cols, double pitch, double freq, double z) {
  const double inv_lambda2 = std::pow(freq / kLightMmPerPs, 2);
  std::vector<cplx> H(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double fy = fft::signed_index(r, rows) / (rows * pitch);
    for (int c = 0; c < cols; ++c) {
      const double fx = fft::signed_index(c, cols) / (cols * pitch);
      const double arg = inv_lambda2 - fx * fx - fy * fy;
      H[static_cast<std::size_t>(r) * cols + c] = arg >= 0 ? std::polar(1.0, kTwoPi * z * std::sqrt(arg)) : cplx{0.0, 0.0};
    }
  }
  return H;
}

std::vector<cplx> angular_spectrum_propagate(std::span<const cplx> field, int rows, int cols, double pitch,
                                             double freq, double z) {
  auto spec = fft::forward2(field, rows, cols);
  const auto H = angular_spectrum_transfer(rows, cols, pitch, freq, z);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= H[i];
  return fft::inverse2(spec, rows, cols);
}

ComplexField2D angular_spectrum_propagate(const ComplexField2D& u, double z) {
  ComplexField2D out = u;
  out.data = angular_spectrum_propagate(u.data, u.rows, u.cols, u.pitch_mm, u.freq_thz, z);
  return out;
}

double carrier_frequency(double tilt_deg, double freq_thz) {
  return std::sin(tilt_deg * std::numbers::pi / 180.0) * freq_thz / kLightMmPerPs;
}

ComplexField2D reference_wave(int rows, int cols, double pitch, double freq, double tilt_deg, double ref_amp) {
  ComplexField2D ref(rows, cols, pitch, freq);
  const double fc = carrier_frequency(tilt_deg, freq);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) ref(r, c) = std::polar(ref_amp, kTwoPi * fc * c * pitch);
  return ref;
}

Image2D synthesize_hologram(const ComplexField2D& obj, double tilt_deg, double ref_amp) {
  const double fc = carrier_frequency(tilt_deg, obj.freq_thz);
  if (std::abs(fc) >= 0.5 / obj.pitch_mm) throw std::invalid_argument("synthesize_hologram: carrier above Nyquist");
  const auto ref = reference_wave(obj.rows, obj.cols, obj.pitch_mm, obj.freq_thz, tilt_deg, ref_amp);
  Image2D h(obj.rows, obj.cols, obj.pitch_mm);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const cplx ur = ref.data[i], uo = obj.data[i];
    const double value = std::norm(ur) + (std::conj(ur) * uo).real() + (ur * std::conj(uo)).real() + std::norm(uo);
    h.data[i] = std::max(0.0, value);
  }
  return h;
}

ComplexField2D reconstruct_offaxis(const Image2D& h, double tilt_deg, double ref_amp, double z_mm, double freq_thz,
                                   const OffaxisOptions& opt) {
  if (!(ref_amp > 0)) throw std::invalid_argument("reconstruct_offaxis: ref_amp must be > 0");
  const double fc = carrier_frequency(tilt_deg, freq_thz);
  const double nyquist = 0.5 / h.pitch_mm;
  const double df_x = 1.0 / (h.cols * h.pitch_mm);
  if (std::abs(fc) >= nyquist || std::abs(fc) < df_x)
    throw std::invalid_argument("reconstruct_offaxis: carrier bin outside the spectrum");

  // U_r* U_o sits at -fc; shifting by +fc brings it to baseband.
  ComplexField2D field(h.rows, h.cols, h.pitch_mm, freq_thz);
  for (int r = 0; r < h.rows; ++r)
    for (int c = 0; c < h.cols; ++c) field(r, c) = h(r, c) * std::polar(1.0 / ref_amp, kTwoPi * fc * c * h.pitch_mm);

  auto spec = fft::forward2(field.data, h.rows, h.cols);
  const double half = opt.window_fraction * std::abs(fc);
  for (int r = 0; r < h.rows; ++r) {
    const double fy = fft::signed_index(r, h.rows) / (h.rows * h.pitch_mm);
    for (int c = 0; c < h.cols; ++c) {
      const double fx = fft::signed_index(c, h.cols) / (h.cols * h.pitch_mm);
      const bool keep = opt.window == OrderWindow::Rectangular ? (std::abs(fx) <= half && std::abs(fy) <= half)
                                                               : (fx * fx + fy * fy <= half * half);
      if (!keep) spec[static_cast<std::size_t>(r) * h.cols + c] = 0.0;
    }
  }
  field.data = fft::inverse2(spec, h.rows, h.cols);
  if (z_mm != 0.0) field = angular_spectrum_propagate(field, -z_mm);
  return field;
}

void save_field(const ComplexField2D& f, const std::filesystem::path& path) {
  write_thzt(f.to_tensor(), path);
  write_sidecar({{"kind", "complex_field"}, {"pitch_mm", format_exact(f.pitch_mm)}, {"freq_thz", format_exact(f.freq_thz)}},
                sidecar_path(path));
}

ComplexField2D load_field(const std::filesystem::path& path) {
  auto t = read_thzt(path);
  auto kv = read_sidecar(sidecar_path(path));
  if (!kv.count("pitch_mm") || !kv.count("freq_thz")) throw DataError("field sidecar needs pitch_mm and freq_thz");
  return ComplexField2D::from_tensor(t, std::stod(kv["pitch_mm"]), std::stod(kv["freq_thz"]));
}

} // namespace thzlab
