#include "thzlab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace thzlab;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

// rows x cols view built from explicit traces.
struct OwnedView {
  std::vector<float> data;
  ViewTraces view;
  OwnedView(int rows, int cols, const std::vector<TimeTrace>& traces) {
    for (const auto& t : traces) data.insert(data.end(), t.samples.begin(), t.samples.end());
    view = {rows, cols, static_cast<int>(traces.front().samples.size()), traces.front().dt_ps, 0.25, data};
  }
};

WaterVaporModel spaced_lines(const std::vector<double>& centers, double strength = 0.01) {
  WaterVaporModel w;
  for (std::size_t i = 0; i < centers.size(); ++i) w.lines.push_back({centers[i], strength * (1.0 + 0.01 * i), 0.002});
  return w;
}

} // namespace

TEST_CASE("fft of impulse and cosine") {
  TimeTrace d{std::vector<double>(64, 0.0), 0.1};
  d.samples[0] = 1;
  const auto s = fft_trace(d);
  CHECK(s.bins.size() == 33);
  for (const auto& b : s.bins) CHECK(std::abs(b) == Approx(1.0));

  TimeTrace c{std::vector<double>(64), 0.1};
  for (int t = 0; t < 64; ++t) c.samples[static_cast<std::size_t>(t)] = std::cos(2 * kPi * 5 * t / 64);
  const auto sc = fft_trace(c);
  for (std::size_t k = 0; k < sc.bins.size(); ++k)
    CHECK(std::abs(sc.bins[k]) == Approx(k == 5 ? 32.0 : 0.0).scale(1.0));
  CHECK(sc.df_thz == Approx(1.0 / 6.4));

  TimeTrace odd{std::vector<double>(100, 0.0), 0.1};
  CHECK_THROWS_AS(fft_trace(odd), std::invalid_argument);
}

TEST_CASE("fft roundtrip and Parseval on random traces") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (std::size_t n : {16u, 256u, 1024u}) {
    TimeTrace t{std::vector<double>(n), 0.1};
    for (auto& v : t.samples) v = nd(rng);
    const auto s = fft_trace(t);
    CHECK(s.bins.size() == n / 2 + 1);
    const auto back = inverse_fft_trace(s, 0.1);
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      err += std::pow(back.samples[i] - t.samples[i], 2);
      norm += t.samples[i] * t.samples[i];
    }
    CHECK(std::sqrt(err / norm) <= 1e-9);
    CHECK(std::abs(spectral_energy(s) - time_energy(t)) / time_energy(t) <= 1e-9);
  }
}

TEST_CASE("time max is signed and homogeneous") {
  const auto p = reference_pulse(PulseModel{});
  CHECK(time_max(p) == *std::max_element(p.samples.begin(), p.samples.end()));
  TimeTrace neg = p;
  for (auto& v : neg.samples) v = -v;
  CHECK(time_max(neg) == *std::max_element(neg.samples.begin(), neg.samples.end()));
  CHECK(time_max(neg) == Approx(-*std::min_element(p.samples.begin(), p.samples.end())));
  for (double c : {0.5, 2.0, 7.25}) {
    TimeTrace s = p;
    for (auto& v : s.samples) v *= c;
    CHECK(time_max(s) == Approx(c * time_max(p)));
  }
  std::vector<double> ties{0, 3, 1, 3};
  CHECK(time_max_index(ties) == 1);
  std::vector<double> para{0, 1, 4, 5, 4};
  CHECK(time_max_position(para) == Approx(3.0));
}

TEST_CASE("band image phase of air and delayed slab") {
  ScanConfig cfg;
  const PixelModel m(cfg);
  const double n = 1.5, L = 0.5;
  const auto slab = m.trace(constant_material("slab", n, 0.05), {L, 1});
  OwnedView v(1, 2, {m.air_trace, slab});
  const auto ref = fft_trace(m.air_trace);
  for (double f : {0.2, 0.3, 0.45}) {
    const auto [amp, phase] = band_image(v.view, f, ref);
    const double fk = ref.frequency(ref.nearest_bin(f));
    CHECK(std::abs(phase(0, 0)) <= 1e-5);
    CHECK(phase(0, 1) == Approx(-2 * kPi * fk * (n - 1) * L / kLightMmPerPs).epsilon(1e-4));
    CHECK(amp(0, 0) > 0);
  }
  CHECK_THROWS(band_image(v.view, 6.0, ref));
}

TEST_CASE("air amplitude is lower at a water line than beside it") {
  ScanConfig cfg;
  const PixelModel m(cfg);
  OwnedView v(1, 1, {m.air_trace});
  const auto ref = fft_trace(m.air_trace);
  const double f0 = 0.5570, df = ref.df_thz;
  const double on = band_image(v.view, f0, ref).first(0, 0);
  CHECK(on < band_image(v.view, f0 - 3 * df, ref).first(0, 0));
  CHECK(on < band_image(v.view, f0 + 3 * df, ref).first(0, 0));
}

TEST_CASE("water band selection") {
  std::vector<double> c12;
  for (int i = 0; i < 12; ++i) c12.push_back(0.35 + 0.08 * i);
  auto w = spaced_lines(c12);
  auto sel = select_water_bands(w);
  REQUIRE(sel.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK(sel[static_cast<std::size_t>(i)] == Approx(c12[static_cast<std::size_t>(i)]).epsilon(1e-4));

  auto outside = c12;
  outside.push_back(0.2);
  outside.push_back(1.5);
  w = spaced_lines(outside);
  w.lines.back().strength = w.lines[w.lines.size() - 2].strength = 1.0;
  sel = select_water_bands(w);
  for (double f : sel) CHECK((f >= 0.3 && f <= 1.3));

  std::vector<double> c15;
  for (int i = 0; i < 15; ++i) c15.push_back(0.32 + 0.065 * i);
  w = spaced_lines(c15);
  const std::vector<int> weak{1, 7, 11};
  for (int i : weak) w.lines[static_cast<std::size_t>(i)].strength = 0.001;
  sel = select_water_bands(w);
  REQUIRE(sel.size() == 12);
  for (int i : weak)
    for (double f : sel) CHECK(std::abs(f - c15[static_cast<std::size_t>(i)]) > 0.01);

  CHECK_THROWS(select_water_bands(spaced_lines({0.5, 0.6})));
}

TEST_CASE("default water model gives 12 ascending in-band frequencies") {
  const auto sel = select_water_bands(default_water_model());
  REQUIRE(sel.size() == 12);
  for (std::size_t i = 0; i < sel.size(); ++i) {
    CHECK(sel[i] >= 0.3);
    CHECK(sel[i] <= 1.3);
    if (i) CHECK(sel[i] > sel[i - 1]);
  }
}

TEST_CASE("feature stack contract") {
  PrimitiveParams pp;
  pp.grid_shape = {16, 16, 16};
  pp.center = {7.5, 7.5, 7.5};
  pp.half_extent = {6, 6, 6};
  const auto box = make_primitive(PrimitiveKind::Box, pp);
  ScanConfig cfg;
  cfg.n_views = 1;
  cfg.angular_range_deg = cfg.angle_step_deg = 180;
  cfg.x_range_mm = 4;
  cfg.rng_seed = 4;
  cfg.noise_dynamic_range_db = 200;
  ScanCube cube{Tensor({1, 16, 16, static_cast<std::uint32_t>(cfg.pulse.n_samples)}, simulate_view(box, cfg, 0)), cfg};
  const auto bands = select_water_bands(cfg.water);
  const PixelModel m(cfg);
  const auto ref = fft_trace(m.air_trace);
  const auto fs = feature_stack(view_of(cube, 0), bands, ref);
  CHECK(fs.data.size() == 25u * 16 * 16);
  CHECK(fs.band_freqs == bands);
  for (double v : fs.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS(feature_stack(view_of(cube, 0), std::vector<double>(bands.begin(), bands.begin() + 11), ref));
  auto unsorted = bands;
  std::swap(unsorted[0], unsorted[1]);
  CHECK_THROWS(feature_stack(view_of(cube, 0), unsorted, ref));

  // Uniform slab: the reference-relative phase is flat across the interior.
  const auto [amp, phase] = band_image(view_of(cube, 0), 0.5, ref);
  double lo = 1e9, hi = -1e9;
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 12; ++c) {
      lo = std::min(lo, phase(r, c));
      hi = std::max(hi, phase(r, c));
    }
  CHECK(hi - lo < 0.1);

  const auto path = std::filesystem::temp_directory_path() / "thzlab_test_features.thzt";
  save_features(fs, path);
  const auto back = load_features(path);
  CHECK(back.band_freqs == fs.band_freqs);
  for (std::size_t i = 0; i < fs.data.size(); ++i) CHECK(back.data[i] == Approx(fs.data[i]).epsilon(1e-6));
}

TEST_CASE("empty view has near-constant time max") {
  PrimitiveParams pp;
  pp.grid_shape = {8, 8, 8};
  pp.center = {3.5, 3.5, 3.5};
  pp.radius = 0;
  const auto empty = make_primitive(PrimitiveKind::Sphere, pp);
  ScanConfig cfg;
  cfg.n_views = 1;
  cfg.angular_range_deg = cfg.angle_step_deg = 180;
  cfg.x_range_mm = 2;
  ScanCube cube{Tensor({1, 8, 8, static_cast<std::uint32_t>(cfg.pulse.n_samples)}, simulate_view(empty, cfg, 0)), cfg};
  const auto tm = time_max_image(view_of(cube, 0));
  const double base = PixelModel(cfg).air_trace.samples.empty() ? 0 : time_max(PixelModel(cfg).air_trace);
  for (double v : tm.data) CHECK(std::abs(v - base) < 5 * noise_sigma(cfg.noise_dynamic_range_db));
}

TEST_CASE("min max normalization") {
  std::vector<double> v{2, 4, 6};
  normalize_min_max(v);
  CHECK(v == std::vector<double>{0, 0.5, 1});
  std::vector<double> c{3, 3};
  normalize_min_max(c);
  CHECK(c == std::vector<double>{0, 0});
}
