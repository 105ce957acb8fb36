#include "thzlab/cs.hpp"

#include "thzlab/holo.hpp"
#include "thzlab/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace thzlab {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double l1(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n == 0) throw std::invalid_argument("sensing matrix row has zero norm");
    m.row(r) /= n;
  }
}

void check_lambda(double lambda) {
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
}

} // namespace

SensingKind parse_sensing_kind(const std::string& name) {
  if (name == "bernoulli" || name == "bernoulli_pm1") return SensingKind::BernoulliPm1;
  if (name == "binary" || name == "binary01") return SensingKind::Binary01;
  if (name == "hadamard" || name == "hadamard_subsampled") return SensingKind::HadamardSubsampled;
  if (name == "explicit") return SensingKind::Explicit;
  throw std::invalid_argument("unknown sensing matrix kind: " + name);
}

std::string to_string(SensingKind kind) {
  switch (kind) {
  case SensingKind::BernoulliPm1: return "bernoulli_pm1";
  case SensingKind::Binary01: return "binary01";
  case SensingKind::HadamardSubsampled: return "hadamard_subsampled";
  case SensingKind::Explicit: return "explicit";
  }
  return "?";
}

SensingMatrix::SensingMatrix(SensingKind kind, Eigen::MatrixXd data, std::uint64_t seed)
    : kind_(kind), data_(std::move(data)), seed_(seed) {}

std::vector<double> SensingMatrix::apply(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != data_.cols()) throw std::invalid_argument("SensingMatrix::apply: dimension mismatch");
  return to_std(data_ * as_vec(x));
}

std::vector<double> SensingMatrix::adjoint(std::span<const double> y) const {
  if (static_cast<Eigen::Index>(y.size()) != data_.rows()) throw std::invalid_argument("SensingMatrix::adjoint: dimension mismatch");
  return to_std(data_.transpose() * as_vec(y));
}

SensingMatrix make_sensing_matrix(SensingKind kind, int m, int n, std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("sensing matrix needs m >= 1 and n >= 1");
  Rng rng(stream_seed(seed, 0x5e45));
  Eigen::MatrixXd a(m, n);
  switch (kind) {
  case SensingKind::BernoulliPm1: {
    std::bernoulli_distribution coin(0.5);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) a(r, c) = coin(rng) ? 1.0 : -1.0;
    break;
  }
  case SensingKind::Binary01: {
    std::bernoulli_distribution coin(0.5);
    for (int r = 0; r < m; ++r) {
      do {
        for (int c = 0; c < n; ++c) a(r, c) = coin(rng) ? 1.0 : 0.0;
      } while (a.row(r).sum() == 0);
    }
    break;
  }
  case SensingKind::HadamardSubsampled: {
    if (!std::has_single_bit(static_cast<unsigned>(n))) throw std::invalid_argument("hadamard sensing needs n a power of two");
    if (m > n) throw std::invalid_argument("hadamard sensing needs m <= n");
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    if (m < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(static_cast<std::size_t>(m));
      std::sort(rows.begin(), rows.end());
    }
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c)
        a(r, c) = (std::popcount(static_cast<unsigned>(rows[static_cast<std::size_t>(r)] & c)) % 2) ? -1.0 : 1.0;
    break;
  }
  case SensingKind::Explicit: throw std::invalid_argument("explicit sensing matrices need data; use explicit_sensing_matrix");
  }
  normalize_rows(a);
  return {kind, std::move(a), seed};
}

SensingMatrix explicit_sensing_matrix(Eigen::MatrixXd data) {
  if (data.rows() < 1 || data.cols() < 1) throw std::invalid_argument("explicit sensing matrix must be non-empty");
  return {SensingKind::Explicit, std::move(data), 0};
}

std::vector<double> soft_threshold(std::span<const double> v, double tau) {
  if (tau < 0) throw std::invalid_argument("soft_threshold: tau must be >= 0");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]) - tau;
    out[i] = mag > 0 ? std::copysign(mag, v[i]) : 0.0;
  }
  return out;
}

double objective(const LinearOperator& A, std::span<const double> s, std::span<const double> x, double lambda) {
  if (static_cast<int>(x.size()) != A.cols() || static_cast<int>(s.size()) != A.rows())
    throw std::invalid_argument("objective: dimension mismatch");
  auto ax = A.apply(x);
  double r2 = 0;
  for (std::size_t i = 0; i < ax.size(); ++i) r2 += (s[i] - ax[i]) * (s[i] - ax[i]);
  return 0.5 * r2 + lambda * l1(x);
}

double power_iteration(const LinearOperator& A, int iters, double tol) {
  std::vector<double> v(static_cast<std::size_t>(A.cols()));
  // Fixed pseudo-random start so the estimate is reproducible.
  Rng rng(0x1234abcdull);
  std::normal_distribution<double> gauss;
  for (auto& x : v) x = gauss(rng);
  double norm = std::sqrt(dot(v, v));
  for (auto& x : v) x /= norm;
  double lambda = 0;
  for (int k = 0; k < iters; ++k) {
    auto w = A.adjoint(A.apply(v));
    const double next = dot(v, w);
    norm = std::sqrt(dot(w, w));
    if (norm == 0) return 0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / norm;
    const bool converged = k > 0 && std::abs(next - lambda) <= tol * std::abs(next);
    lambda = next;
    if (converged) break;
  }
  return lambda;
}

namespace {

struct ProxGradient {
  const LinearOperator& A;
  std::span<const double> s;
  double L;

  // soft_threshold(y - A^T(Ay - s)/L, lambda/L)
  std::vector<double> step(std::span<const double> y, double lambda) const {
    auto r = A.apply(y);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= s[i];
    auto g = A.adjoint(r);
    std::vector<double> z(y.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = y[i] - g[i] / L;
    return soft_threshold(z, lambda / L);
  }
};

SolveResult setup(const LinearOperator& A, std::span<const double> s, const SolveOptions& opt) {
  check_lambda(opt.lambda);
  if (static_cast<int>(s.size()) != A.rows()) throw std::invalid_argument("solver: measurement length mismatch");
  if (opt.iters < 0) throw std::invalid_argument("solver: iters must be >= 0");
  SolveResult res;
  res.x = opt.x0.empty() ? std::vector<double>(static_cast<std::size_t>(A.cols()), 0.0) : opt.x0;
  if (static_cast<int>(res.x.size()) != A.cols()) throw std::invalid_argument("solver: x0 length mismatch");
  res.lipschitz = opt.lipschitz > 0 ? opt.lipschitz : 1.02 * power_iteration(A);
  if (res.lipschitz <= 0) res.lipschitz = 1.0;
  res.objective.push_back(objective(A, s, res.x, opt.lambda));
  return res;
}

bool converged(const std::vector<double>& hist, double tol) {
  const double prev = hist[hist.size() - 2], cur = hist.back();
  return std::abs(prev - cur) <= tol * std::max(std::abs(prev), 1e-300);
}

} // namespace

SolveResult ista(const LinearOperator& A, std::span<const double> s, const SolveOptions& opt) {
  auto res = setup(A, s, opt);
  ProxGradient pg{A, s, res.lipschitz};
  for (int k = 0; k < opt.iters; ++k) {
    res.x = pg.step(res.x, opt.lambda);
    res.objective.push_back(objective(A, s, res.x, opt.lambda));
    res.iterations = k + 1;
    if (converged(res.objective, opt.tol)) break;
  }
  return res;
}

SolveResult fista(const LinearOperator& A, std::span<const double> s, const SolveOptions& opt) {
  auto res = setup(A, s, opt);
  ProxGradient pg{A, s, res.lipschitz};
  std::vector<double> y = res.x, x_prev = res.x;
  double t = 1.0;
  for (int k = 0; k < opt.iters; ++k) {
    auto x = pg.step(y, opt.lambda);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + beta * (x[i] - x_prev[i]);
    x_prev = x;
    t = t_next;
    res.x = std::move(x);
    res.objective.push_back(objective(A, s, res.x, opt.lambda));
    res.iterations = k + 1;
    if (converged(res.objective, opt.tol)) break;
  }
  return res;
}

std::vector<double> fista_momentum(int count) {
  std::vector<double> t;
  if (count <= 0) return t;
  t.push_back(1.0);
  while (static_cast<int>(t.size()) < count) t.push_back(0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t.back() * t.back())));
  return t;
}

SolveResult fista_continuation(const LinearOperator& A, std::span<const double> s, double lambda_final,
                               int iters_per_stage, double tol, double shrink) {
  check_lambda(lambda_final);
  if (!(shrink > 0 && shrink < 1)) throw std::invalid_argument("fista_continuation: shrink must be in (0, 1)");
  auto ats = A.adjoint(s);
  double lambda_max = 0;
  for (double v : ats) lambda_max = std::max(lambda_max, std::abs(v));
  SolveOptions opt;
  opt.iters = iters_per_stage;
  opt.tol = tol;
  opt.lipschitz = 1.02 * power_iteration(A);
  SolveResult res;
  double lambda = std::max(lambda_final, 0.5 * lambda_max);
  for (;;) {
    opt.lambda = lambda;
    auto stage = fista(A, s, opt);
    opt.x0 = stage.x;
    const int done = res.iterations + stage.iterations;
    if (res.objective.empty())
      res.objective = stage.objective;
    else
      res.objective.insert(res.objective.end(), stage.objective.begin() + 1, stage.objective.end());
    res.x = std::move(stage.x);
    res.iterations = done;
    res.lipschitz = stage.lipschitz;
    if (lambda <= lambda_final) break;
    lambda = std::max(lambda_final, lambda * shrink);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Diffraction-aware operator

FresnelOperator::FresnelOperator(std::shared_ptr<const SensingMatrix> base, double z_mm, double freq_thz, int grid_rows,
                                 int grid_cols, double pitch_mm)
    : base_(std::move(base)), z_mm_(z_mm), freq_thz_(freq_thz), pitch_mm_(pitch_mm), grid_rows_(grid_rows),
      grid_cols_(grid_cols) {
  if (!base_) throw std::invalid_argument("fresnel_operator: missing base matrix");
  if (grid_rows != grid_cols) throw std::invalid_argument("fresnel_operator: pixel grid must be square");
  if (base_->cols() != grid_rows * grid_cols) throw std::invalid_argument("fresnel_operator: grid does not match operator");
}

std::vector<double> FresnelOperator::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cols()) throw std::invalid_argument("FresnelOperator::apply: dimension mismatch");
  std::vector<cplx> field(x.begin(), x.end());
  if (z_mm_ != 0.0) field = angular_spectrum_propagate(field, grid_rows_, grid_cols_, pitch_mm_, freq_thz_, z_mm_);
  std::vector<double> re(field.size()), im(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    re[i] = field[i].real();
    im[i] = field[i].imag();
  }
  auto yr = base_->apply(re), yi = base_->apply(im);
  yr.insert(yr.end(), yi.begin(), yi.end());
  return yr;
}

std::vector<double> FresnelOperator::adjoint(std::span<const double> y) const {
  if (static_cast<int>(y.size()) != rows()) throw std::invalid_argument("FresnelOperator::adjoint: dimension mismatch");
  const auto m = static_cast<std::size_t>(base_->rows());
  auto cr = base_->adjoint(y.subspan(0, m));
  auto ci = base_->adjoint(y.subspan(m, m));
  std::vector<cplx> field(cr.size());
  for (std::size_t i = 0; i < field.size(); ++i) field[i] = {cr[i], ci[i]};
  // The transfer function is unit-modulus or zero, so its adjoint is propagation by -z.
  if (z_mm_ != 0.0) field = angular_spectrum_propagate(field, grid_rows_, grid_cols_, pitch_mm_, freq_thz_, -z_mm_);
  std::vector<double> out(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) out[i] = field[i].real();
  return out;
}

FresnelOperator fresnel_operator(std::shared_ptr<const SensingMatrix> base, double z_mm, double freq_thz, int grid_rows,
                                 int grid_cols, double pitch_mm) {
  return {std::move(base), z_mm, freq_thz, grid_rows, grid_cols, pitch_mm};
}

} // namespace thzlab
