#include "thzlab/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace thzlab {

static_assert(std::endian::native == std::endian::little,
              "THZT payloads are written as native little-endian floats");

namespace {

std::size_t product(const std::vector<std::uint32_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

void check_shape(const std::vector<std::uint32_t>& shape) {
  if (shape.empty() || shape.size() > 4)
    throw std::invalid_argument("tensor must have 1-4 dimensions");
  for (auto d : shape)
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size())
    throw ThztError(ThztError::Kind::Truncated, "THZT: truncated header");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

} // namespace

Tensor::Tensor(DType dtype, std::vector<std::uint32_t> shape)
    : dtype_(dtype), shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_) * (dtype_ == DType::Complex64 ? 2 : 1), 0.0f);
}

Tensor::Tensor(std::vector<std::uint32_t> shape, std::vector<float> values)
    : dtype_(DType::Real32), shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (data_.size() != product(shape_))
    throw std::invalid_argument("tensor data length does not match shape");
}

Tensor::Tensor(std::vector<std::uint32_t> shape, std::span<const std::complex<float>> values)
    : dtype_(DType::Complex64), shape_(std::move(shape)) {
  check_shape(shape_);
  if (values.size() != product(shape_))
    throw std::invalid_argument("tensor data length does not match shape");
  data_.resize(2 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    data_[2 * i] = values[i].real();
    data_[2 * i + 1] = values[i].imag();
  }
}

std::size_t Tensor::numel() const { return shape_.empty() ? 0 : product(shape_); }

std::span<float> Tensor::real() {
  if (dtype_ != DType::Real32) throw std::logic_error("tensor is not real32");
  return data_;
}

std::span<const float> Tensor::real() const {
  if (dtype_ != DType::Real32) throw std::logic_error("tensor is not real32");
  return data_;
}

std::span<std::complex<float>> Tensor::complex() {
  if (dtype_ != DType::Complex64) throw std::logic_error("tensor is not complex64");
  return {reinterpret_cast<std::complex<float>*>(data_.data()), data_.size() / 2};
}

std::span<const std::complex<float>> Tensor::complex() const {
  if (dtype_ != DType::Complex64) throw std::logic_error("tensor is not complex64");
  return {reinterpret_cast<const std::complex<float>*>(data_.data()), data_.size() / 2};
}

bool Tensor::operator==(const Tensor& other) const {
  return dtype_ == other.dtype_ && shape_ == other.shape_ &&
         data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// THZT

std::vector<std::uint8_t> encode_thzt(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(10 + 4 * t.ndim() + t.raw().size() * sizeof(float));
  out.insert(out.end(), {'T', 'H', 'Z', 'T'});
  put<std::uint16_t>(out, kThztVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(t.dtype()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(t.ndim()));
  for (auto d : t.shape()) put<std::uint32_t>(out, d);
  auto raw = t.raw();
  auto first = reinterpret_cast<const std::uint8_t*>(raw.data());
  out.insert(out.end(), first, first + raw.size() * sizeof(float));
  return out;
}

Tensor decode_thzt(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "THZT", 4) != 0)
    throw ThztError(ThztError::Kind::BadMagic, "THZT: bad magic");
  std::size_t pos = 4;
  get<std::uint16_t>(bytes, pos); // version; only v1 exists
  auto code = get<std::uint16_t>(bytes, pos);
  if (code > 1) throw ThztError(ThztError::Kind::UnknownDtype, "THZT: unknown dtype code");
  auto ndim = get<std::uint16_t>(bytes, pos);
  if (ndim < 1 || ndim > 4) throw ThztError(ThztError::Kind::BadShape, "THZT: bad ndim");
  std::vector<std::uint32_t> shape(ndim);
  for (auto& d : shape) {
    d = get<std::uint32_t>(bytes, pos);
    if (d == 0) throw ThztError(ThztError::Kind::BadShape, "THZT: zero dimension");
  }
  auto dtype = static_cast<DType>(code);
  Tensor t(dtype, shape);
  const std::size_t payload = t.raw().size() * sizeof(float);
  if (bytes.size() - pos < payload) throw ThztError(ThztError::Kind::Truncated, "THZT: truncated payload");
  if (dtype == DType::Real32)
    std::memcpy(t.real().data(), bytes.data() + pos, payload);
  else
    std::memcpy(static_cast<void*>(t.complex().data()), bytes.data() + pos, payload);
  return t;
}

void write_thzt(const Tensor& t, const std::filesystem::path& path) {
  auto bytes = encode_thzt(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_thzt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ThztError(ThztError::Kind::Io, "cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_thzt(bytes);
}

// ---------------------------------------------------------------------------
// Working images

Image2D::Image2D(int rows_, int cols_, double pitch, double fill)
    : rows(rows_), cols(cols_), pitch_mm(pitch),
      data(static_cast<std::size_t>(rows_) * cols_, fill) {
  if (rows_ <= 0 || cols_ <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (!(pitch > 0)) throw std::invalid_argument("pitch_mm must be positive");
}

Tensor Image2D::to_tensor() const {
  std::vector<float> v(data.begin(), data.end());
  return Tensor({static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)}, std::move(v));
}

Image2D Image2D::from_tensor(const Tensor& t, double pitch) {
  if (t.dtype() != DType::Real32 || t.ndim() != 2) throw DataError("expected a 2-D real32 tensor");
  Image2D img(static_cast<int>(t.shape()[0]), static_cast<int>(t.shape()[1]), pitch);
  std::copy(t.real().begin(), t.real().end(), img.data.begin());
  return img;
}

Volume3D::Volume3D(int nz_, int ny_, int nx_, double pitch, double fill)
    : nz(nz_), ny(ny_), nx(nx_), pitch_mm(pitch),
      data(static_cast<std::size_t>(nz_) * ny_ * nx_, fill) {
  if (nz_ <= 0 || ny_ <= 0 || nx_ <= 0) throw std::invalid_argument("volume dimensions must be positive");
  if (!(pitch > 0)) throw std::invalid_argument("pitch_mm must be positive");
}

Image2D Volume3D::slice(int z) const {
  Image2D img(ny, nx, pitch_mm);
  auto first = data.begin() + static_cast<std::ptrdiff_t>(z) * ny * nx;
  std::copy(first, first + static_cast<std::ptrdiff_t>(ny) * nx, img.data.begin());
  return img;
}

void Volume3D::set_slice(int z, const Image2D& img) {
  if (img.rows != ny || img.cols != nx) throw std::invalid_argument("slice shape mismatch");
  std::copy(img.data.begin(), img.data.end(), data.begin() + static_cast<std::ptrdiff_t>(z) * ny * nx);
}

Tensor Volume3D::to_tensor() const {
  std::vector<float> v(data.begin(), data.end());
  return Tensor({static_cast<std::uint32_t>(nz), static_cast<std::uint32_t>(ny), static_cast<std::uint32_t>(nx)},
                std::move(v));
}

Volume3D Volume3D::from_tensor(const Tensor& t, double pitch) {
  if (t.dtype() != DType::Real32 || t.ndim() != 3) throw DataError("expected a 3-D real32 tensor");
  Volume3D v(static_cast<int>(t.shape()[0]), static_cast<int>(t.shape()[1]), static_cast<int>(t.shape()[2]), pitch);
  std::copy(t.real().begin(), t.real().end(), v.data.begin());
  return v;
}

// ---------------------------------------------------------------------------
// PGM / CSV

std::vector<std::uint16_t> pgm_levels(const Image2D& img) {
  for (double v : img.data)
    if (!std::isfinite(v)) throw std::invalid_argument("export_pgm: non-finite pixel value");
  std::vector<std::uint16_t> levels(img.size(), 0);
  if (img.data.empty()) return levels;
  auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  const double min = *lo, range = *hi - *lo;
  if (range <= 0.0) return levels;
  for (std::size_t i = 0; i < img.size(); ++i) {
    double scaled = (img.data[i] - min) / range * 65535.0;
    levels[i] = static_cast<std::uint16_t>(std::min(65535.0, std::floor(scaled + 0.5)));
  }
  return levels;
}

void export_pgm(const Image2D& img, const std::filesystem::path& path) {
  auto levels = pgm_levels(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "P5\n" << img.cols << ' ' << img.rows << "\n65535\n";
  for (auto v : levels) {
    // PGM stores 16-bit samples most significant byte first.
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    out.write(bytes, 2);
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}
} // namespace

std::string format_csv(std::span<const CsvRow> rows, const std::vector<std::string>& header) {
  std::ostringstream os;
  if (header.empty()) {
    os << "label,value\r\n";
  } else {
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << csv_field(header[i]);
    os << "\r\n";
  }
  for (const auto& row : rows) {
    os << csv_field(row.label);
    for (double v : row.values) os << ',' << format_number(v);
    os << "\r\n";
  }
  return os.str();
}

void export_csv(std::span<const CsvRow> rows, const std::filesystem::path& path,
                const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << format_csv(rows, header);
}

// ---------------------------------------------------------------------------
// Sidecars

std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p += ".meta";
  return p;
}

void write_sidecar(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

KeyValues read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing sidecar: " + path.string());
  KeyValues kv;
  std::string line;
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed sidecar line: " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

} // namespace thzlab
