#include "thzlab/nn.hpp"
#include "thzlab/parallel.hpp"

#include <doctest.h>

#include <span>

#include <cmath>

using namespace thzlab;
using namespace thzlab::nn;
using doctest::Approx;

namespace {

NnTensor randn(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  NnTensor t(n, c, h, w);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.data) v = nd(rng);
  return t;
}

NnTensor like(const NnTensor& t, Rng& rng) { return randn(t.n, t.c, t.h, t.w, rng); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<GradTarget> param_targets(const std::vector<Param*>& ps) {
  std::vector<GradTarget> t;
  for (auto* p : ps) t.push_back({p->name, &p->value, &p->grad});
  return t;
}

void zero(const std::vector<Param*>& ps) {
  for (auto* p : ps) p->zero_grad();
}

// Checks a single-input module whose backward(r) is the gradient of <r, forward(x)>.
template <class M>
GradCheckReport check_module(M& m, NnTensor& x, Rng& rng, double eps = 1e-3) {
  std::vector<Param*> ps;
  if constexpr (requires { m.collect(ps); }) m.collect(ps);
  zero(ps);
  const auto y = m.forward(x);
  const auto r = like(y, rng);
  const auto dx = m.backward(r);
  auto targets = param_targets(ps);
  targets.push_back({"x", &x.data, &dx.data});
  return grad_check([&] { return dot(m.forward(x).data, r.data); }, targets, eps);
}

} // namespace

TEST_CASE("conv2d examples") {
  Rng rng(1);
  Conv2d id("c", 3, 3, 1, true);
  for (auto& v : id.weight.value) v = 0;
  for (int i = 0; i < 3; ++i) id.weight.value[static_cast<std::size_t>(i * 3 + i)] = 1;
  for (auto& v : id.bias.value) v = 0;
  const auto x = randn(2, 3, 5, 5, rng);
  CHECK(id.forward(x).data == x.data);

  Conv2d z("z", 3, 2, 3, true);
  for (auto& v : z.weight.value) v = 0;
  z.bias.value = {0.5, -1.5};
  const auto y = z.forward(x);
  for (int b = 0; b < 2; ++b)
    for (int o = 0; o < 2; ++o)
      for (std::size_t i = 0; i < y.plane(); ++i) CHECK(y.at(b, o)[i] == z.bias.value[static_cast<std::size_t>(o)]);

  CHECK_THROWS(z.forward(randn(1, 4, 5, 5, rng)));
  CHECK_THROWS(Conv2d("even", 1, 1, 2, false));
}

TEST_CASE("conv2d gradients") {
  Rng rng(2);
  for (int k : {1, 3}) {
    Conv2d c("c", 3, 4, k, true);
    he_init(c.weight, 3 * k * k, rng);
    auto x = randn(2, 3, 5, 5, rng);
    const auto rep = check_module(c, x, rng);
    CHECK(rep.max_rel_error <= 1e-6);
    CHECK(rep.checked > 100);
  }
}

TEST_CASE("batchnorm statistics and gradients") {
  Rng rng(3);
  BatchNorm2d bn("bn", 3);
  auto x = randn(4, 3, 6, 6, rng, 3.0);
  for (auto& v : x.data) v += 2;
  const auto y = bn.forward(x);
  for (int ch = 0; ch < 3; ++ch) {
    double m = 0, s = 0;
    for (int b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < y.plane(); ++i) m += y.at(b, ch)[i];
    m /= 4 * 36.0;
    for (int b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < y.plane(); ++i) s += std::pow(y.at(b, ch)[i] - m, 2);
    s /= 4 * 36.0;
    CHECK(std::abs(m) <= 1e-5);
    CHECK(std::abs(s - 1) <= 1e-5 * 10 + 1e-4 * 0);
  }

  NnTensor flat(2, 1, 3, 3, 4.2);
  BatchNorm2d bc("bc", 1);
  for (double v : bc.forward(flat).data) CHECK(std::abs(v) <= 1e-9);
  CHECK_THROWS(bc.forward(NnTensor(1, 1, 1, 1, 1.0)));

  for (bool train : {true, false}) {
    BatchNorm2d g("g", 3);
    for (auto& v : g.gamma.value) v = 0.5 + std::abs(std::normal_distribution<double>()(rng));
    for (auto& v : g.beta.value) v = std::normal_distribution<double>()(rng);
    g.running_mean.value = {0.1, -0.2, 0.3};
    g.running_var.value = {1.5, 0.7, 2.0};
    g.training = train;
    auto xi = randn(2, 3, 4, 4, rng);
    CHECK(check_module(g, xi, rng).max_rel_error <= 1e-3);
  }
}

TEST_CASE("running statistics update") {
  BatchNorm2d bn("bn", 1);
  NnTensor x(1, 1, 1, 4);
  x.data = {1, 2, 3, 4};
  bn.forward(x);
  CHECK(bn.running_mean.value[0] == Approx(0.1 * 2.5));
  CHECK(bn.running_var.value[0] == Approx(0.9 + 0.1 * (5.0 / 3.0)));
}

TEST_CASE("relu and sigmoid") {
  ReLU r;
  NnTensor x(1, 1, 1, 3);
  x.data = {-1, 0, 2};
  CHECK(r.forward(x).data == Vec{0, 0, 2});

  Rng rng(4);
  ReLU rl;
  auto xr = randn(2, 3, 4, 4, rng);
  CHECK(check_module(rl, xr, rng).max_rel_error <= 1e-3);

  Sigmoid s;
  auto xs = randn(2, 3, 4, 4, rng, 2.0);
  for (double v : s.forward(xs).data) CHECK((v > 0 && v < 1));
  CHECK(check_module(s, xs, rng).max_rel_error <= 1e-3);
}

TEST_CASE("points exactly on a relu kink are excluded") {
  Rng rng(5);
  ReLU r;
  NnTensor x(1, 1, 4, 4);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = i % 2 ? 0.0 : std::normal_distribution<double>()(rng);
  const auto y = r.forward(x);
  NnTensor ones(1, 1, 4, 4, 1.0);
  const auto dx = r.backward(ones);
  const auto rep = grad_check([&] {
    double s = 0;
    for (double v : r.forward(x).data) s += v;
    return s;
  }, {{"x", &x.data, &dx.data}}, 1e-3);
  CHECK(rep.skipped_kinks == 8);
  CHECK(rep.max_rel_error <= 1e-9);
  CHECK_THROWS(grad_check([] { return 0.0; }, {}, 1e-5));
  CHECK_THROWS(grad_check([] { return 0.0; }, {}, 0.1));
}

TEST_CASE("softmax") {
  const auto u = softmax({2, 2, 2, 2}, 1, 4, 1);
  for (double v : u) CHECK(v == Approx(0.25));

  Rng rng(6);
  std::normal_distribution<double> nd;
  Vec x(2 * 5 * 3);
  for (auto& v : x) v = 3 * nd(rng);
  const auto y = softmax(x, 2, 5, 3);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i) {
      double s = 0;
      for (int l = 0; l < 5; ++l) s += y[static_cast<std::size_t>((o * 5 + l) * 3 + i)];
      CHECK(s == Approx(1.0));
    }
  Vec r(x.size());
  for (auto& v : r) v = nd(rng);
  const auto dx = softmax_backward(y, r, 2, 5, 3);
  const auto rep = grad_check([&] { return dot(softmax(x, 2, 5, 3), r); }, {{"x", &x, &dx}}, 1e-3);
  CHECK(rep.max_rel_error <= 1e-3);
}

TEST_CASE("resampling") {
  NnTensor c(1, 2, 4, 6, 0.75);
  const auto d = downsample_half(c);
  CHECK((d.h == 2 && d.w == 3));
  for (double v : d.data) CHECK(v == 0.75);
  const auto u = upsample_double(c);
  CHECK((u.h == 8 && u.w == 12));
  for (double v : u.data) CHECK(v == Approx(0.75));
  for (double v : upsample_double(downsample_half(c)).data) CHECK(v == Approx(0.75));

  NnTensor cb(1, 1, 4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) cb.data[static_cast<std::size_t>(i * 4 + j)] = (i + j) % 2;
  for (double v : downsample_half(cb).data) CHECK(v == 0.5);
  CHECK_THROWS(downsample_half(NnTensor(1, 1, 3, 4)));

  Rng rng(7);
  for (int pass = 0; pass < 2; ++pass) {
    auto x = randn(2, 3, 6, 4, rng);
    const auto y = pass ? upsample_double(x) : downsample_half(x);
    const auto r = like(y, rng);
    const auto dx = pass ? upsample_double_backward(r) : downsample_half_backward(r);
    REQUIRE(dx.same_shape(x));
    const auto rep = grad_check([&] { return dot((pass ? upsample_double(x) : downsample_half(x)).data, r.data); },
                                {{"x", &x.data, &dx.data}}, 1e-3);
    CHECK(rep.max_rel_error <= 1e-3);
  }
}

TEST_CASE("channel plumbing") {
  Rng rng(8);
  const auto a = randn(2, 2, 3, 3, rng), b = randn(2, 3, 3, 3, rng);
  const auto ab = concat_channels(a, b);
  CHECK(ab.c == 5);
  CHECK(slice_channels(ab, 0, 2).data == a.data);
  CHECK(slice_channels(ab, 2, 3).data == b.data);
  CHECK(concat_channels({&a, &b}).data == ab.data);
  CHECK_THROWS(concat_channels(a, randn(2, 1, 4, 3, rng)));
  NnTensor acc = a;
  add_into(acc, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(acc.data[i] == 2 * a.data[i]);
}

TEST_CASE("conv block gradients") {
  Rng rng(9);
  for (bool train : {true, false}) {
    ConvBlock cb("cb", 3, 4, 3);
    std::vector<Param*> ps;
    cb.collect(ps);
    for (auto* p : ps)
      if (p->name.find("weight") != std::string::npos) he_init(*p, 27, rng);
    cb.set_training(train);
    auto x = randn(2, 3, 6, 6, rng);
    CHECK(check_module(cb, x, rng).max_rel_error <= 1e-3);
  }
}

TEST_CASE("channel attention") {
  Rng rng(10);
  Cam cam("cam", 8, 4);
  he_init(cam.fc1.weight, 8, rng);
  he_init(cam.fc2.weight, 2, rng);
  auto x = randn(2, 8, 4, 4, rng);
  cam.forward(x);
  for (double g : cam.gates().data) CHECK((g > 0 && g < 1));
  CHECK(check_module(cam, x, rng).max_rel_error <= 1e-3);

  for (double v : cam.forward(NnTensor(2, 8, 4, 4)).data) CHECK(v == 0);

  Cam open("open", 8, 4);
  for (auto& v : open.fc2.bias.value) v = 50;
  const auto y = open.forward(x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data[i] == Approx(x.data[i]).epsilon(1e-12));

  CHECK_THROWS(Cam("bad", 6, 4));
}

TEST_CASE("modified Gram-Schmidt") {
  Rng rng(11);
  const int k = 4, len = 30;
  Vec b(static_cast<std::size_t>(k * len));
  std::normal_distribution<double> nd;
  for (auto& v : b) v = nd(rng);
  Vec store, norms;
  const auto q = mgs_forward(b, k, len, store, norms);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double s = 0;
      for (int t = 0; t < len; ++t) s += q[static_cast<std::size_t>(i * len + t)] * q[static_cast<std::size_t>(j * len + t)];
      CHECK(std::abs(s - (i == j ? 1.0 : 0.0)) <= 1e-5);
    }
  Vec r(q.size());
  for (auto& v : r) v = nd(rng);
  const auto db = mgs_backward(q, r, k, len, store, norms);
  const auto rep = grad_check([&] {
    Vec st, nr;
    return dot(mgs_forward(b, k, len, st, nr), r);
  }, {{"b", &b, &db}}, 1e-4);
  CHECK(rep.max_rel_error <= 1e-3);
}

TEST_CASE("subspace attention fusion") {
  Rng rng(12);
  Safm s("safm", 4, 4, 4, 4, 2);
  std::vector<Param*> ps;
  s.collect(ps);
  for (auto* p : ps)
    if (p->name.find("logits") == std::string::npos) he_init(*p, p->shape.size() > 1 ? p->shape[1] : 4, rng);
  for (auto& v : s.logits.value) v = std::normal_distribution<double>(0, 0.5)(rng);

  auto a = randn(2, 4, 8, 8, rng), p = randn(2, 4, 8, 8, rng), u = randn(2, 4, 8, 8, rng);
  const auto y = s.forward(a, p, u);
  CHECK((y.n == 2 && y.c == 4 && y.h == 8 && y.w == 8));
  REQUIRE(s.basis().size() == 2);
  for (const auto& q : s.basis())
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double d = 0;
        for (int t = 0; t < 64; ++t) d += q[static_cast<std::size_t>(i * 64 + t)] * q[static_cast<std::size_t>(j * 64 + t)];
        CHECK(std::abs(d - (i == j ? 1.0 : 0.0)) <= 1e-5);
      }

  zero(ps);
  const auto r = like(y, rng);
  const auto g = s.backward(r);
  auto targets = param_targets(ps);
  targets.push_back({"amp", &a.data, &g.amp.data});
  targets.push_back({"phase", &p.data, &g.phase.data});
  targets.push_back({"upper", &u.data, &g.upper.data});
  const auto rep = grad_check([&] { return dot(s.forward(a, p, u).data, r.data); }, targets, 1e-4);
  CHECK(rep.max_rel_error <= 2e-3);

  const NnTensor z(2, 4, 8, 8);
  for (double v : s.forward(z, z, z).data) CHECK(v == 0);
  CHECK_THROWS(s.forward(a, randn(2, 4, 4, 4, rng), u));
}

TEST_CASE("parameters and adam") {
  Param p("w", {2, 3});
  CHECK(p.size() == 6);
  for (double v : p.m) CHECK(v == 0);
  for (double v : p.v) CHECK(v == 0);
  CHECK(p.grad.size() == p.value.size());

  p.value = {1, 2, 3, 4, 5, 6};
  p.grad = {0.5, -2, 0, 1e-3, -1e-3, 10};
  Adam opt({0.1, 0.9, 0.999, 1e-8});
  opt.step({&p});
  const std::vector<double> expect{0.9, 2.1, 3, 3.9, 5.1, 5.9};
  for (std::size_t i = 0; i < 6; ++i) CHECK(p.value[i] == Approx(expect[i]).epsilon(1e-5));
  CHECK(opt.steps() == 1);

  Param q("q", {4});
  q.value = {1, 2, 3, 4};
  q.grad = {1, 1, 1, 1};
  Adam frozen({0.0});
  frozen.step({&q});
  CHECK(q.value == Vec{1, 2, 3, 4});
}

TEST_CASE("he init is seeded") {
  Param a("a", {8, 4}), b("b", {8, 4});
  Rng r1(5), r2(5);
  he_init(a, 4, r1);
  he_init(b, 4, r2);
  CHECK(a.value == b.value);
  double s2 = 0;
  for (double v : a.value) s2 += v * v;
  CHECK(s2 > 0);
}
