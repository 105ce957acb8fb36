#include "thzlab/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace thzlab;
using doctest::Approx;

namespace {

Image2D noise_image(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image2D img(n, n, 1.0);
  for (auto& v : img.data) v = u(rng);
  return img;
}

} // namespace

TEST_CASE("psnr") {
  const auto a = noise_image(16, 1);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(kPsnrCap == 99.0);
  CHECK(psnr(Image2D(8, 8, 1.0, 0.0), Image2D(8, 8, 1.0, 1.0), 1.0) == Approx(0.0));
  CHECK_THROWS(psnr(a, noise_image(15, 1)));
  CHECK_THROWS(psnr(a, a, 0.0));
}

TEST_CASE("ssim") {
  const auto a = noise_image(24, 2);
  CHECK(ssim(a, a) == 1.0);
  Image2D bin(24, 24, 1.0);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c) bin(r, c) = (r / 4 + c / 6) % 2;
  Image2D inv = bin;
  for (auto& v : inv.data) v = 1 - v;
  CHECK(ssim(bin, inv) < 0);
  CHECK(ssim(bin, bin) == 1.0);
  CHECK_THROWS(ssim(noise_image(10, 1), noise_image(10, 2)));
}

TEST_CASE("psnr and ssim are symmetric and affine invariant") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto a = noise_image(20, s), b = noise_image(20, s + 100);
    CHECK(psnr(a, b) == Approx(psnr(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) == Approx(ssim(b, a)).epsilon(1e-12));
    const double scale = 0.5 + static_cast<double>(s), shift = -3.0 + static_cast<double>(s);
    Image2D as = a, bs = b;
    for (auto& v : as.data) v = scale * v + shift;
    for (auto& v : bs.data) v = scale * v + shift;
    CHECK(psnr(as, bs, scale) == Approx(psnr(a, b, 1.0)).epsilon(1e-9));
    CHECK(ssim(as, bs) == Approx(ssim(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("cross-section mse") {
  Volume3D a(4, 5, 6, 0.25);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : a.data) v = u(rng);
  CHECK(mse_cross_sections(a, a) == 0);
  CHECK(mse_cross_sections(Volume3D(3, 3, 3, 1.0, 0.0), Volume3D(3, 3, 3, 1.0, 1.0)) == Approx(1.0));
  CHECK_THROWS(mse_cross_sections(a, Volume3D(4, 5, 5, 0.25)));

  Volume3D b = a;
  for (auto& v : b.data) v = u(rng) * 3 + 1;
  // Flat voxel MSE after each volume's own min-max normalization.
  auto norm = [](Volume3D v) {
    auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
    const double l = *lo, r = *hi - *lo;
    for (auto& x : v.data) x = (x - l) / r;
    return v;
  };
  const auto na = norm(a), nb = norm(b);
  double flat = 0;
  for (std::size_t i = 0; i < na.size(); ++i) flat += std::pow(na.data[i] - nb.data[i], 2);
  flat /= static_cast<double>(na.size());
  CHECK(std::abs(mse_cross_sections(a, b) - flat) <= 1e-12);
}

TEST_CASE("plain mse") {
  Image2D a(1, 2, 1.0), b(1, 2, 1.0);
  a.data = {0, 1};
  b.data = {1, 1};
  CHECK(mse(a, b) == 0.5);
}
