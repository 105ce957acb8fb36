#include "thzlab/tensor.hpp"

#include <cstring>
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace thzlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "thzlab_test_tensorio";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void dump(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

} // namespace

TEST_CASE("2x2 real zeros is a 34 byte file") {
  const auto p = temp_file("zeros.thzt");
  write_thzt(Tensor({2, 2}, std::vector<float>(4, 0.f)), p);
  CHECK(fs::file_size(p) == 34);
  const auto b = slurp(p);
  CHECK(std::string(b.begin(), b.begin() + 4) == "THZT");
  CHECK(b[4] == kThztVersion);
  CHECK(b[6] == 0);
  CHECK(b[8] == 2);
}

TEST_CASE("complex64 1x3 payload is 24 bytes interleaved") {
  std::vector<std::complex<float>> v{{1, 2}, {3, 4}, {5, 6}};
  const auto bytes = encode_thzt(Tensor({1, 3}, std::span<const std::complex<float>>(v)));
  const std::size_t header = 10 + 4 * 2;
  REQUIRE(bytes.size() == header + 24);
  CHECK(bytes[6] == 1);
  float f[6];
  std::memcpy(f, bytes.data() + header, 24);
  for (int i = 0; i < 6; ++i) CHECK(f[i] == static_cast<float>(i + 1));
}

TEST_CASE("roundtrip is bitwise for random tensors of every rank") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dim(1, 5);
  std::uniform_real_distribution<float> val(-1e6f, 1e6f);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::uint32_t> shape;
    const int nd = 1 + trial % 4;
    std::size_t n = 1;
    for (int d = 0; d < nd; ++d) {
      shape.push_back(static_cast<std::uint32_t>(dim(rng)));
      n *= shape.back();
    }
    Tensor t;
    if (trial % 2) {
      std::vector<std::complex<float>> c(n);
      for (auto& x : c) x = {val(rng), val(rng)};
      t = Tensor(shape, std::span<const std::complex<float>>(c));
    } else {
      std::vector<float> r(n);
      for (auto& x : r) x = val(rng);
      t = Tensor(shape, std::move(r));
    }
    const auto bytes = encode_thzt(t);
    CHECK(bytes.size() == 10 + 4 * shape.size() + n * (trial % 2 ? 8 : 4));
    const Tensor back = decode_thzt(bytes);
    CHECK(back == t);
    CHECK(std::memcmp(back.raw().data(), t.raw().data(), t.raw().size() * sizeof(float)) == 0);
  }
}

TEST_CASE("read errors are distinct") {
  const auto good = encode_thzt(Tensor({3}, std::vector<float>{1, 2, 3}));

  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_thzt(b);
    } catch (const ThztError& e) {
      return e.kind();
    }
    FAIL("decode succeeded");
    return ThztError::Kind::Io;
  };

  auto bad = good;
  bad[0] = 'X';
  CHECK(kind_of(bad) == ThztError::Kind::BadMagic);

  auto trunc = good;
  trunc.pop_back();
  CHECK(kind_of(trunc) == ThztError::Kind::Truncated);

  auto dtype = good;
  dtype[6] = 7;
  CHECK(kind_of(dtype) == ThztError::Kind::UnknownDtype);

  CHECK_THROWS_AS(read_thzt(temp_file("does_not_exist.thzt")), ThztError);
  const auto p = temp_file("trunc.thzt");
  dump(p, trunc);
  CHECK_THROWS_AS(read_thzt(p), DataError);
}

TEST_CASE("tensor shape rules") {
  CHECK_THROWS(Tensor({2, 2}, std::vector<float>(3)));
  CHECK_THROWS(Tensor({1, 1, 1, 1, 1}, std::vector<float>(1)));
  CHECK_THROWS(Tensor({0}, std::vector<float>{}));
  CHECK_THROWS(Image2D(2, 2, 0.0));
  CHECK_THROWS(Volume3D(2, 2, 2, -1.0));
}

TEST_CASE("image and volume tensor conversion") {
  Image2D img(2, 3, 0.5);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<double>(i) * 0.25;
  const Image2D back = Image2D::from_tensor(img.to_tensor(), 0.5);
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  CHECK(back.data == img.data);

  Volume3D v(2, 3, 4, 0.25);
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = static_cast<double>(i);
  CHECK(v.to_tensor().shape() == std::vector<std::uint32_t>{2, 3, 4});
  CHECK(v.slice(1)(2, 3) == 23);
  Volume3D w(2, 3, 4, 0.25);
  w.set_slice(1, v.slice(1));
  CHECK(w(1, 0, 0) == 12);
  CHECK(w(0, 0, 0) == 0);
}

TEST_CASE("pgm levels") {
  Image2D a(1, 2, 1.0);
  a.data = {0, 1};
  CHECK(pgm_levels(a) == std::vector<std::uint16_t>{0, 65535});

  Image2D b(1, 3, 1.0);
  b.data = {0, 0.5, 1};
  CHECK(pgm_levels(b) == std::vector<std::uint16_t>{0, 32768, 65535});

  Image2D c(2, 2, 1.0, 3.7);
  CHECK(pgm_levels(c) == std::vector<std::uint16_t>(4, 0));

  Image2D d(1, 2, 1.0);
  d.data = {0, std::nan("")};
  CHECK_THROWS(pgm_levels(d));
  d.data = {0, INFINITY};
  CHECK_THROWS(pgm_levels(d));
}

TEST_CASE("pgm export is monotone and binary P5") {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  Image2D img(7, 9, 1.0);
  for (auto& x : img.data) x = nd(rng);
  const auto lv = pgm_levels(img);
  for (std::size_t i = 0; i < lv.size(); ++i)
    for (std::size_t j = 0; j < lv.size(); ++j)
      if (img.data[i] < img.data[j]) CHECK(lv[i] <= lv[j]);

  const auto p = temp_file("img.pgm");
  export_pgm(img, p);
  const auto b = slurp(p);
  const std::string head = "P5\n9 7\n65535\n";
  CHECK(std::string(b.begin(), b.begin() + static_cast<long>(head.size())) == head);
  CHECK(b.size() == head.size() + 2 * 63);
  const auto mx = std::max_element(img.data.begin(), img.data.end()) - img.data.begin();
  CHECK(b[head.size() + 2 * static_cast<std::size_t>(mx)] == 0xff);
}

TEST_CASE("csv formatting") {
  std::vector<CsvRow> rows{{"psnr", {22.98}}};
  CHECK(format_csv(rows).find("psnr,22.98") != std::string::npos);
  rows = {{"mse", {0.107}}};
  CHECK(format_csv(rows).find("mse,0.107") != std::string::npos);
  CHECK(format_number(1.0 / 3.0) == "0.333333");

  const auto p = temp_file("empty.csv");
  export_csv({}, p, {"label", "value"});
  const auto b = slurp(p);
  const std::string s(b.begin(), b.end());
  CHECK(s.rfind("label,value", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1);

  rows = {{"a,b", {1}}};
  CHECK(format_csv(rows).find("\"a,b\",1") != std::string::npos);
}

TEST_CASE("sidecar roundtrip") {
  const auto p = temp_file("x.thzt");
  KeyValues kv{{"pitch_mm", format_exact(0.1)}, {"name", "hips"}};
  write_sidecar(kv, sidecar_path(p));
  CHECK(read_sidecar(sidecar_path(p)) == kv);
  CHECK(std::stod(read_sidecar(sidecar_path(p)).at("pitch_mm")) == 0.1);
}
