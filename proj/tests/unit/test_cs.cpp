#include "thzlab/cs.hpp"
#include "thzlab/holo.hpp"
#include "thzlab/parallel.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

using namespace thzlab;
using doctest::Approx;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double nrm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double rel_err(std::span<const double> x, std::span<const double> ref) {
  double e = 0;
  for (std::size_t i = 0; i < x.size(); ++i) e += std::pow(x[i] - ref[i], 2);
  return std::sqrt(e) / nrm(ref);
}

std::vector<double> sparse_vector(int n, int k, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution sign;
  for (int i = 0; i < k; ++i) x[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = (sign(rng) ? 1 : -1) * (1.0 + std::abs(nd(rng)));
  return x;
}

} // namespace

TEST_CASE("sensing matrices") {
  const auto h = make_sensing_matrix(SensingKind::HadamardSubsampled, 16, 16, 3);
  const Eigen::MatrixXd g = h.dense() * h.dense().transpose();
  CHECK((g - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS(make_sensing_matrix(SensingKind::HadamardSubsampled, 4, 12, 1));
  CHECK_THROWS(make_sensing_matrix(SensingKind::BernoulliPm1, 0, 12, 1));

  for (auto k : {SensingKind::BernoulliPm1, SensingKind::Binary01, SensingKind::HadamardSubsampled}) {
    const auto a = make_sensing_matrix(k, 8, 32, 42), b = make_sensing_matrix(k, 8, 32, 42);
    CHECK(a.dense() == b.dense());
    for (int r = 0; r < 8; ++r) CHECK(a.dense().row(r).norm() == Approx(1.0));
    CHECK(parse_sensing_kind(to_string(k)) == k);
  }
  const auto bin = make_sensing_matrix(SensingKind::Binary01, 10, 40, 7);
  for (int r = 0; r < 10; ++r) {
    double c = 0;
    for (int j = 0; j < 40; ++j) c = std::max(c, bin.dense()(r, j));
    for (int j = 0; j < 40; ++j) CHECK((bin.dense()(r, j) == 0.0 || bin.dense()(r, j) == c));
  }
}

TEST_CASE("soft threshold and objective") {
  CHECK(soft_threshold(std::vector<double>{3}, 1)[0] == 2);
  CHECK(soft_threshold(std::vector<double>{-0.5}, 1)[0] == 0);
  CHECK(soft_threshold(std::vector<double>{-4}, 1)[0] == -3);
  const std::vector<double> v{1.5, -2, 0.1};
  CHECK(soft_threshold(v, 0) == v);
  CHECK_THROWS(soft_threshold(v, -1));

  const auto I1 = explicit_sensing_matrix(Eigen::MatrixXd::Identity(1, 1));
  CHECK(objective(I1, std::vector<double>{2}, std::vector<double>{1}, 1) == Approx(1.5));
  const auto A = make_sensing_matrix(SensingKind::BernoulliPm1, 5, 8, 1);
  std::vector<double> x(8, 0.3);
  const auto s = A.apply(x);
  CHECK(objective(A, s, x, 0) == Approx(0.0).scale(1));
  CHECK(objective(A, s, std::vector<double>(8, 0.0), 0.7) == Approx(0.5 * dot(s, s)));
  CHECK_THROWS(objective(A, s, std::vector<double>(7, 0.0), 0.1));
}

TEST_CASE("closed form solver cases") {
  const auto I = explicit_sensing_matrix(Eigen::MatrixXd::Identity(6, 6));
  const std::vector<double> s{3, -0.2, 0.5, -4, 1.1, 0};
  const auto expect = soft_threshold(s, 0.6);
  for (auto solve : {ista, fista}) {
    SolveOptions o;
    o.lambda = 0.6;
    o.iters = 200;
    o.tol = 0;
    const auto r = solve(I, s, o);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(r.x[i] - expect[i]) <= 1e-8);

    const auto H = make_sensing_matrix(SensingKind::HadamardSubsampled, 16, 16, 2);
    std::vector<double> y(16);
    for (int i = 0; i < 16; ++i) y[static_cast<std::size_t>(i)] = std::sin(i);
    o.lambda = 0;
    o.iters = 300;
    const auto ls = solve(H, y, o);
    const auto aty = H.adjoint(y);
    for (std::size_t i = 0; i < 16; ++i) CHECK(ls.x[i] == Approx(aty[i]).epsilon(1e-6).scale(1));

    double big = 0;
    for (double v : aty) big = std::max(big, std::abs(v));
    o.lambda = 1.01 * big;
    for (double v : solve(H, y, o).x) CHECK(v == 0);

    o.lambda = -1;
    CHECK_THROWS(solve(H, y, o));
  }
}

TEST_CASE("ista objective never increases") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto A = make_sensing_matrix(seed % 2 ? SensingKind::BernoulliPm1 : SensingKind::Binary01, 40, 100, seed);
    const auto x = sparse_vector(100, 6, rng);
    auto s = A.apply(x);
    std::normal_distribution<double> nd(0, 0.01);
    for (auto& v : s) v += nd(rng);
    SolveOptions o;
    o.lambda = 0.01 * seed;
    o.iters = 300;
    o.tol = 0;
    const auto r = ista(A, s, o);
    for (std::size_t k = 1; k < r.objective.size(); ++k) CHECK(r.objective[k] <= r.objective[k - 1] + 1e-12);
    const auto f = fista(A, s, o);
    CHECK(f.objective.back() <= r.objective.back() + 1e-12);
  }
}

TEST_CASE("ista fixed point") {
  Rng rng(8);
  const auto A = make_sensing_matrix(SensingKind::HadamardSubsampled, 64, 64, 8);
  const auto s = A.apply(sparse_vector(64, 6, rng));
  SolveOptions o;
  o.lambda = 0.05;
  o.iters = 1;
  o.tol = 0;
  o.lipschitz = 1.0;
  // Orthonormal A: the minimiser is soft_threshold(A^T s, lambda).
  o.x0 = soft_threshold(A.adjoint(s), o.lambda);
  const auto one = ista(A, s, o);
  for (std::size_t i = 0; i < o.x0.size(); ++i) CHECK(std::abs(one.x[i] - o.x0[i]) <= 1e-12);
}

TEST_CASE("scaling covariance on the identity operator") {
  const std::vector<double> s{1.0, -0.3, 2.2, 0.05};
  const double lam = 0.4;
  for (double c : {0.5, 3.0}) {
    Eigen::MatrixXd M = c * Eigen::MatrixXd::Identity(4, 4);
    const auto cA = explicit_sensing_matrix(M);
    std::vector<double> cs = s;
    for (auto& v : cs) v *= c;
    SolveOptions o;
    o.lambda = lam * c * c;
    o.iters = 500;
    o.tol = 0;
    const auto r = fista(cA, cs, o);
    const auto ref = soft_threshold(s, lam);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(r.x[i] - ref[i]) <= 1e-9);
  }
}

TEST_CASE("fista momentum sequence") {
  const auto t = fista_momentum(4);
  CHECK(t[0] == 1.0);
  CHECK(std::abs(t[1] - (1 + std::sqrt(5.0)) / 2) <= 1e-12);
  CHECK(std::abs(t[2] - (1 + std::sqrt(1 + 4 * t[1] * t[1])) / 2) <= 1e-12);
  CHECK(t[2] == Approx(0.5 * (1 + std::sqrt(1 + 4 * t[1] * t[1]))).epsilon(1e-12));
  CHECK(t[2] == Approx(2.1935).epsilon(1e-4));
}

TEST_CASE("power iteration") {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
  D(0, 0) = 1;
  D(1, 1) = 3;
  D(2, 2) = 2;
  CHECK(power_iteration(explicit_sensing_matrix(D), 200, 1e-12) == Approx(9.0).epsilon(1e-6));
}

TEST_CASE("fresnel composite operator") {
  auto base = std::make_shared<SensingMatrix>(make_sensing_matrix(SensingKind::BernoulliPm1, 64, 256, 5));
  const FresnelOperator z0(base, 0.0, 1.0, 16, 16, 0.25);
  Rng rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> x(256);
  for (auto& v : x) v = nd(rng);
  const auto y0 = z0.apply(x), ax = base->apply(x);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(y0[i] == Approx(ax[i]));
    CHECK(y0[64 + i] == 0);
  }
  CHECK_THROWS(FresnelOperator(base, 1.0, 1.0, 16, 8, 0.25));

  const FresnelOperator op(base, 3.0, 1.0, 16, 16, 0.25);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(256), b(128);
    for (auto& v : a) v = nd(rng);
    for (auto& v : b) v = nd(rng);
    const auto Aa = op.apply(a), ATb = op.adjoint(b);
    CHECK(std::abs(dot(Aa, b) - dot(a, ATb)) / (nrm(Aa) * nrm(b)) <= 1e-6);
  }
}

TEST_CASE("diffraction-aware operator beats the plain one on diffracted data") {
  double improvement = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(stream_seed(seed, 77));
    auto base = std::make_shared<SensingMatrix>(make_sensing_matrix(SensingKind::BernoulliPm1, 160, 256, seed));
    const FresnelOperator op(base, 2.0, 1.0, 16, 16, 0.25);
    auto x = sparse_vector(256, 10, rng);
    for (auto& v : x) v = std::abs(v);
    const auto s = op.apply(x);
    const std::vector<double> s_real(s.begin(), s.begin() + 160);
    SolveOptions o;
    o.lambda = 1e-3;
    o.iters = 3000;
    o.tol = 1e-12;
    const double aware = rel_err(fista(op, s, o).x, x);
    const double plain = rel_err(fista(*base, s_real, o).x, x);
    improvement += plain - aware;
  }
  CHECK(improvement / 10 > 0);
}
