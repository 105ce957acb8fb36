#include "thzlab/physics.hpp"
#include "thzlab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace thzlab;
using doctest::Approx;

TEST_CASE("reference pulse width, DC and peak") {
  const PulseModel m;
  const auto tr = reference_pulse(m);
  REQUIRE(tr.samples.size() == 1024);
  CHECK(std::abs(measure_abs_fwhm_fs(tr) - 516.0) <= m.dt_ps * 1e3);
  double peak = 0;
  for (double v : tr.samples) peak = std::max(peak, std::abs(v));
  // Continuous maximum is 1 but falls between samples.
  double oracle = 0;
  for (int i = 0; i < m.n_samples; ++i) {
    const double u = (i - m.n_samples / 4) * m.dt_ps / m.tau_ps();
    oracle = std::max(oracle, std::abs(u * std::exp(0.5 * (1 - u * u))));
  }
  CHECK(peak == Approx(oracle).epsilon(1e-12));
  CHECK(peak <= 1.0);
  const auto s = fft_trace(tr);
  CHECK(std::abs(s.bins[0]) < 1e-9);
  CHECK(m.nyquist_thz() == Approx(5.0));

  PulseModel bad;
  bad.n_samples = 1000;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("pulse scales with peak amplitude") {
  PulseModel a, b;
  b.peak_amplitude = 2.5;
  const auto ta = reference_pulse(a), tb = reference_pulse(b);
  for (std::size_t i = 0; i < ta.samples.size(); ++i) CHECK(tb.samples[i] == Approx(2.5 * ta.samples[i]));
}

TEST_CASE("pulse Parseval") {
  const auto tr = reference_pulse(PulseModel{});
  const double et = time_energy(tr), ef = spectral_energy(fft_trace(tr));
  CHECK(std::abs(et - ef) / et <= 1e-9);
}

TEST_CASE("absorption spectrum examples") {
  WaterVaporModel flat;
  flat.continuum = 0.3;
  const std::vector<double> f{0.1, 0.7, 2.0};
  for (double a : absorption_spectrum(flat, f)) CHECK(a == Approx(0.3));

  WaterVaporModel one;
  one.continuum = 0.01;
  one.lines = {{1.0, 2.0, 0.05}};
  CHECK(one.alpha(1.05) == Approx(0.01 + 1.0));
  CHECK(one.alpha(1.0) == Approx(2.01));

  WaterVaporModel bad;
  bad.lines = {{1.0, -1.0, 0.05}};
  CHECK_THROWS(bad.validate());
}

TEST_CASE("absorption is nonnegative and continuous on a fine grid") {
  const auto w = default_water_model();
  std::vector<double> f;
  for (int i = 0; i <= 50000; ++i) f.push_back(5.0 * i / 50000);
  const auto a = absorption_spectrum(w, f);
  double max_jump = 0, max_a = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::isfinite(a[i]));
    CHECK(a[i] >= 0);
    max_a = std::max(max_a, a[i]);
    if (i) max_jump = std::max(max_jump, std::abs(a[i] - a[i - 1]));
  }
  // Step 1e-4 THz against halfwidths of at least 5e-3 THz: no jump can exceed a few percent of the peak.
  CHECK(max_jump < 0.1 * max_a);
}

TEST_CASE("time of flight thickness") {
  CHECK(time_of_flight_thickness(10, 1.5) == Approx(0.99931).epsilon(1e-5));
  CHECK(time_of_flight_thickness(0, 1.5) == 0);
  CHECK(time_of_flight_thickness(10, 1.0) == Approx(1.49896).epsilon(1e-5));
  CHECK_THROWS_AS(time_of_flight_thickness(1, 0.9), std::invalid_argument);

  const double L = 1.0, n = 1.5;
  CHECK(transmission_delay_thickness((n - 1) * L / kLightMmPerPs, n) == Approx(L).epsilon(1e-12));
}

TEST_CASE("fresnel coefficients") {
  auto m = fresnel_transmission(1.3, 1.3);
  CHECK(m.t == 1.0);
  CHECK(m.r == 0.0);
  auto a = fresnel_transmission(1.0, 1.5);
  CHECK(a.t == Approx(0.8));
  CHECK(a.r == Approx(-0.2));
  CHECK_THROWS(fresnel_transmission(0.5, 1.0));
}

TEST_CASE("fresnel energy identity on random indices") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 4.0);
  for (int i = 0; i < 1000; ++i) {
    const double n1 = u(rng), n2 = u(rng);
    const auto c = fresnel_transmission(n1, n2);
    CHECK(std::abs((n2 / n1) * c.t * c.t + c.r * c.r - 1.0) <= 1e-12);
    CHECK(std::abs(c.t - (1.0 + c.r)) <= 1e-12);
  }
}

TEST_CASE("beer lambert") {
  CHECK(beer_lambert_field(0, 5) == 1.0);
  CHECK(beer_lambert_field(2 * std::log(2.0), 1.0) == Approx(0.5));
  CHECK(beer_lambert_field(1, 1) == Approx(std::exp(-0.5)));
}

TEST_CASE("gaussian beam radius and kernel") {
  const double f = 1.0, w0 = 0.5;
  const double lambda = kLightMmPerPs / f;
  const double zr = std::numbers::pi * w0 * w0 / lambda;
  CHECK(beam_radius_mm(f, w0, 0) == Approx(w0));
  CHECK(beam_radius_mm(f, w0, zr) == Approx(w0 * std::sqrt(2.0)));

  const auto k = gaussian_beam_psf(f, w0, 3.0, 0.25, 15);
  double sum = 0;
  for (double v : k.kernel.data) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-6);
  for (int r = 0; r < 15; ++r)
    for (int c = 0; c < 15; ++c) CHECK(k.kernel(r, c) == k.kernel(c, r));
  CHECK_FALSE(k.undersized);
  CHECK(gaussian_beam_psf(f, w0, 50.0, 0.25, 5).undersized);
  CHECK_THROWS(gaussian_beam_psf(f, w0, 1.0, 0.25, 4));
}

TEST_CASE("materials") {
  const auto h = hips();
  CHECK(h.index_at(0.7) == Approx(1.54));
  CHECK(h.alpha_at(0.7) == Approx(0.2));
  MaterialSpec bad = constant_material("x", 1.2, 0.1);
  bad.n[0] = 0.8;
  CHECK_THROWS(bad.validate());
}
