#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace thzlab {

/// Raised for malformed or unreadable input data (as opposed to caller misuse).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint16_t { Real32 = 0, Complex64 = 1 };

/// Row-major 1-4 dimensional array of real32 or interleaved complex64 values.
///
/// Storage is a flat float buffer; complex tensors hold 2 floats per element.
class Tensor {
public:
  Tensor() = default;
  Tensor(DType dtype, std::vector<std::uint32_t> shape);
  Tensor(std::vector<std::uint32_t> shape, std::vector<float> values);
  Tensor(std::vector<std::uint32_t> shape, std::span<const std::complex<float>> values);

  DType dtype() const { return dtype_; }
  const std::vector<std::uint32_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const;

  std::span<float> real();
  std::span<const float> real() const;
  std::span<std::complex<float>> complex();
  std::span<const std::complex<float>> complex() const;

  /// Raw float payload (2 floats per element for complex64).
  std::span<const float> raw() const { return data_; }

  bool operator==(const Tensor& other) const;

private:
  DType dtype_ = DType::Real32;
  std::vector<std::uint32_t> shape_;
  std::vector<float> data_;
};

/// Distinct failure modes of the THZT reader.
class ThztError : public DataError {
public:
  enum class Kind { Io, BadMagic, Truncated, UnknownDtype, BadShape };
  ThztError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline constexpr std::uint16_t kThztVersion = 1;

/// THZT layout: "THZT" | u16 version | u16 dtype | u16 ndim | u32 dims... | LE payload.
void write_thzt(const Tensor& t, const std::filesystem::path& path);
Tensor read_thzt(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_thzt(const Tensor& t);
Tensor decode_thzt(std::span<const std::uint8_t> bytes);

/// Double-precision working image; stored as real32 on disk.
struct Image2D {
  int rows = 0;
  int cols = 0;
  double pitch_mm = 1.0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(int rows, int cols, double pitch_mm, double fill = 0.0);

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  Tensor to_tensor() const;
  static Image2D from_tensor(const Tensor& t, double pitch_mm);
};

/// Volume indexed (z, y, x).
struct Volume3D {
  int nz = 0;
  int ny = 0;
  int nx = 0;
  double pitch_mm = 1.0;
  std::vector<double> data;

  Volume3D() = default;
  Volume3D(int nz, int ny, int nx, double pitch_mm, double fill = 0.0);

  double& operator()(int z, int y, int x) {
    return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  double operator()(int z, int y, int x) const {
    return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  std::size_t size() const { return data.size(); }

  Image2D slice(int z) const;
  void set_slice(int z, const Image2D& img);

  Tensor to_tensor() const;
  static Volume3D from_tensor(const Tensor& t, double pitch_mm);
};

/// Writes a 16-bit binary PGM (P5) with min-max normalization to [0, 65535].
/// A constant image maps to all zeros. Throws std::invalid_argument on NaN/Inf.
void export_pgm(const Image2D& img, const std::filesystem::path& path);
std::vector<std::uint16_t> pgm_levels(const Image2D& img);

struct CsvRow {
  std::string label;
  std::vector<double> values;
};

/// Formats with 6 significant digits; fields containing separators are quoted.
std::string format_csv(std::span<const CsvRow> rows, const std::vector<std::string>& header = {});
void export_csv(std::span<const CsvRow> rows, const std::filesystem::path& path,
                const std::vector<std::string>& header = {});
std::string format_number(double v);
/// Shortest round-trip decimal form.
std::string format_exact(double v);

/// Key-value sidecar files (`key = value` per line, `#` comments).
using KeyValues = std::map<std::string, std::string>;
void write_sidecar(const KeyValues& kv, const std::filesystem::path& path);
KeyValues read_sidecar(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

} // namespace thzlab
