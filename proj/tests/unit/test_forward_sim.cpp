#include "thzlab/forward_sim.hpp"
#include "thzlab/parallel.hpp"
#include "thzlab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace thzlab;
using doctest::Approx;

namespace {

Phantom sphere(int n, double r) {
  PrimitiveParams pp;
  pp.grid_shape = {n, n, n};
  const double c = (n - 1) / 2.0;
  pp.center = {c, c, c};
  pp.radius = r;
  return make_primitive(PrimitiveKind::Sphere, pp);
}

ScanConfig small_config(const Phantom& p, int views = 4) {
  ScanConfig cfg;
  cfg.n_views = views;
  cfg.angle_step_deg = 180.0 / views;
  cfg.x_range_mm = p.grid.nx * p.pitch_mm();
  cfg.pulse.n_samples = 256;
  cfg.rng_seed = 9;
  return cfg;
}

double peak_position(const TimeTrace& t) { return time_max_position(t.samples); }

double peak(const TimeTrace& t) { return *std::max_element(t.samples.begin(), t.samples.end()); }

} // namespace

TEST_CASE("config validation") {
  ScanConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_views = 29;
  CHECK_THROWS(c.validate());
  c = ScanConfig{};
  c.x_step_mm = 0;
  CHECK_THROWS(c.validate());
  const auto kv = ScanConfig{}.to_kv();
  CHECK(ScanConfig::from_kv(kv).to_kv() == kv);
}

TEST_CASE("air pixel is the water-attenuated reference") {
  ScanConfig cfg;
  cfg.noise_dynamic_range_db = 400;
  const PixelModel m(cfg);
  const auto ref = reference_pulse(cfg.pulse);
  const auto air = m.trace(hips(), RayProfile{});
  CHECK(air.samples == m.air_trace.samples);

  ScanConfig dry = cfg;
  dry.water.lines.clear();
  dry.water.continuum = 0;
  const PixelModel md(dry);
  for (std::size_t i = 0; i < ref.samples.size(); ++i) CHECK(md.air_trace.samples[i] == Approx(ref.samples[i]).epsilon(1e-9).scale(1));
}

TEST_CASE("pure delay by (n-1)L/c without losses") {
  ScanConfig cfg;
  cfg.apply_fresnel = false;
  const PixelModel m(cfg);
  const auto mat = constant_material("lossless", 1.5, 0.0);
  for (double L : {0.5, 1.0, 2.5}) {
    const auto t = m.trace(mat, {L, 1});
    const double shift_ps = (peak_position(t) - peak_position(m.air_trace)) * cfg.pulse.dt_ps;
    CHECK(std::abs(shift_ps - 0.5 * L / kLightMmPerPs) <= cfg.pulse.dt_ps);
    CHECK(time_energy(t) == Approx(time_energy(m.air_trace)).epsilon(1e-6));
  }
}

TEST_CASE("peak ratio for a lossy slab") {
  ScanConfig cfg;
  const PixelModel m(cfg);
  const auto mat = hips();
  const double n = 1.54;
  const double tt = fresnel_transmission(1.0, n).t * fresnel_transmission(n, 1.0).t;
  const auto t = m.trace(mat, {4.0, 1});
  CHECK(peak(t) / peak(m.air_trace) == Approx(tt * std::exp(-0.4)).epsilon(0.01));
}

TEST_CASE("noiseless model is linear in the reference amplitude") {
  ScanConfig a;
  a.noise_dynamic_range_db = 400;
  ScanConfig b = a;
  b.pulse.peak_amplitude = 2.0;
  const PixelModel ma(a), mb(b);
  const auto ta = ma.trace(hips(), {2.0, 1}), tb = mb.trace(hips(), {2.0, 1});
  for (std::size_t i = 0; i < ta.samples.size(); ++i) CHECK(std::abs(tb.samples[i] - 2 * ta.samples[i]) <= 1e-12);
}

TEST_CASE("noise level") {
  CHECK(noise_sigma(41.7) == Approx(8.22e-3).epsilon(1e-3));
  CHECK(noise_sigma(400) == 0);
  TimeTrace z{std::vector<double>(1000000, 0.0), 0.1};
  Rng rng(1);
  const auto n = add_noise(z, 41.7, rng);
  double s2 = 0;
  for (double v : n.samples) s2 += v * v;
  CHECK(std::sqrt(s2 / 1e6) == Approx(noise_sigma(41.7)).epsilon(0.01));
  TimeTrace t{{1, 2, 3}, 0.1};
  CHECK(add_noise(t, 400, rng).samples == t.samples);
}

TEST_CASE("air spectrum dips at every configured line in band") {
  const ScanConfig cfg;
  const PixelModel m(cfg);
  const auto s = fft_trace(m.air_trace);
  for (double f0 : cfg.water.centers_in(0.3, 1.3)) {
    const auto k = s.nearest_bin(f0);
    CHECK_MESSAGE(std::abs(s.bins[k]) < std::abs(s.bins[k - 1]), "line " << f0);
    CHECK_MESSAGE(std::abs(s.bins[k]) < std::abs(s.bins[k + 1]), "line " << f0);
  }
}

TEST_CASE("scan shape, empty phantom and determinism across thread counts") {
  const auto p = sphere(16, 5);
  auto cfg = small_config(p);
  set_thread_count(1);
  const auto c1 = simulate_scan(p, cfg);
  set_thread_count(4);
  const auto c2 = simulate_scan(p, cfg);
  set_thread_count(0);
  CHECK(c1.traces.shape() == std::vector<std::uint32_t>{4, 16, 16, 256});
  CHECK(c1.traces == c2.traces);

  cfg.rng_seed = 10;
  CHECK_FALSE(simulate_scan(p, cfg).traces == c1.traces);

  const auto e = sphere(16, 0);
  cfg.noise_dynamic_range_db = 400;
  const auto ce = simulate_scan(e, cfg);
  const PixelModel m(cfg);
  for (int v = 0; v < ce.views(); v += 3)
    for (int r = 0; r < ce.rows(); r += 5)
      for (int c = 0; c < ce.cols(); c += 5) {
        auto tr = ce.trace(v, r, c);
        for (std::size_t i = 0; i < tr.size(); ++i) CHECK(tr[i] == static_cast<float>(m.air_trace.samples[i]));
      }

  ScanConfig narrow = small_config(p);
  narrow.x_range_mm = 2.0;
  CHECK_THROWS(simulate_scan(p, narrow));
}

TEST_CASE("default scan has 30 views and flips to 60") {
  const auto p = sphere(16, 5);
  auto cfg = small_config(p, 30);
  cfg.angle_step_deg = 6;
  cfg.pulse.n_samples = 64;
  const auto c = simulate_scan(p, cfg);
  CHECK(c.views() == 30);
  const auto f = augment_flip(c);
  CHECK(f.views() == 60);
  CHECK(f.angle_deg(30) == Approx(180.0));
  CHECK(f.angle_deg(59) == Approx(354.0));
  for (int r = 0; r < c.rows(); ++r)
    for (int col = 0; col < c.cols(); ++col) {
      const auto a = c.trace(2, r, col), b = f.trace(32, r, c.cols() - 1 - col), o = f.trace(2, r, col);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
      CHECK(std::equal(a.begin(), a.end(), o.begin()));
    }
}

TEST_CASE("symmetric phantom view equals its flip without noise") {
  const auto p = sphere(16, 5);
  auto cfg = small_config(p, 2);
  cfg.noise_dynamic_range_db = 400;
  const auto f = augment_flip(simulate_scan(p, cfg));
  for (int r = 0; r < f.rows(); ++r)
    for (int c = 0; c < f.cols(); ++c) {
      const auto a = f.trace(0, r, c), b = f.trace(2, r, c);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST_CASE("cs measure") {
  Image2D img(2, 3, 1.0);
  img.data = {1, 2, 3, 4, 5, 6};
  const auto id = explicit_sensing_matrix(Eigen::MatrixXd::Identity(6, 6));
  CHECK(cs_measure(id, img, 400) == img.data);
  const auto ones = explicit_sensing_matrix(Eigen::MatrixXd::Ones(1, 6));
  CHECK(cs_measure(ones, img, 400)[0] == Approx(21.0));
  const auto bern = make_sensing_matrix(SensingKind::BernoulliPm1, 4, 6, 1);
  Image2D zero(2, 3, 1.0);
  for (double v : cs_measure(bern, zero, 400)) CHECK(v == 0);
  const auto wrong = make_sensing_matrix(SensingKind::BernoulliPm1, 4, 5, 1);
  CHECK_THROWS(cs_measure(wrong, img, 400));
}

TEST_CASE("cube save and load") {
  const auto p = sphere(16, 5);
  auto cfg = small_config(p, 2);
  cfg.pulse.n_samples = 64;
  const auto c = augment_flip(simulate_scan(p, cfg));
  const auto path = std::filesystem::temp_directory_path() / "thzlab_test_cube.thzt";
  save_cube(c, path);
  const auto back = load_cube(path);
  CHECK(back.traces == c.traces);
  CHECK(back.flipped);
  CHECK(back.config.to_kv() == c.config.to_kv());
}
