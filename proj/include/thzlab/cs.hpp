#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace thzlab {

/// Real-linear map R^cols -> R^rows with its adjoint under the real inner product.
class LinearOperator {
public:
  virtual ~LinearOperator() = default;
  virtual int rows() const = 0;
  virtual int cols() const = 0;
  virtual std::vector<double> apply(std::span<const double> x) const = 0;
  virtual std::vector<double> adjoint(std::span<const double> y) const = 0;
};

enum class SensingKind { BernoulliPm1, Binary01, HadamardSubsampled, Explicit };
SensingKind parse_sensing_kind(const std::string& name);
std::string to_string(SensingKind kind);

/// Illumination-pattern matrix; every row has unit L2 norm.
class SensingMatrix : public LinearOperator {
public:
  SensingMatrix(SensingKind kind, Eigen::MatrixXd data, std::uint64_t seed);

  SensingKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& dense() const { return data_; }

  int rows() const override { return static_cast<int>(data_.rows()); }
  int cols() const override { return static_cast<int>(data_.cols()); }
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> adjoint(std::span<const double> y) const override;

private:
  SensingKind kind_;
  Eigen::MatrixXd data_;
  std::uint64_t seed_;
};

/// Deterministic from seed. Hadamard rows are drawn without replacement from
/// the Sylvester matrix (all rows, in order, when m == n).
SensingMatrix make_sensing_matrix(SensingKind kind, int m, int n, std::uint64_t seed);
/// Rows are normalized to unit norm; zero rows are rejected.
SensingMatrix explicit_sensing_matrix(Eigen::MatrixXd data);

std::vector<double> soft_threshold(std::span<const double> v, double tau);

/// 1/2 ||s - A x||^2 + lambda ||x||_1.
double objective(const LinearOperator& A, std::span<const double> s, std::span<const double> x, double lambda);

/// Largest eigenvalue of A^T A by power iteration (deterministic start).
double power_iteration(const LinearOperator& A, int iters = 30, double tol = 1e-6);

struct SolveOptions {
  double lambda = 0.01;
  int iters = 500;
  double tol = 1e-8; ///< stop when |F_k - F_{k-1}| <= tol * F_{k-1}
  std::vector<double> x0;
  double lipschitz = 0; ///< 0: estimate with power iteration and a 2% margin
};

struct SolveResult {
  std::vector<double> x;
  std::vector<double> objective; ///< F(x0), F(x1), ...
  int iterations = 0;
  double lipschitz = 0;
};

SolveResult ista(const LinearOperator& A, std::span<const double> s, const SolveOptions& opt);
SolveResult fista(const LinearOperator& A, std::span<const double> s, const SolveOptions& opt);

/// FISTA momentum sequence t_0 = 1, t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
std::vector<double> fista_momentum(int count);

/// Warm-started FISTA over a geometric lambda path from lambda_max/2 down to
/// `lambda_final`, where lambda_max = ||A^T s||_inf.
SolveResult fista_continuation(const LinearOperator& A, std::span<const double> s, double lambda_final,
                               int iters_per_stage, double tol, double shrink = 0.5);

/// s = A vec(Propagate_z(x)) on a rows x cols grid, split into real and
/// imaginary halves so the operator stays real-linear: R^n -> R^{2m}.
class FresnelOperator : public LinearOperator {
public:
  FresnelOperator(std::shared_ptr<const SensingMatrix> base, double z_mm, double freq_thz, int grid_rows,
                  int grid_cols, double pitch_mm);

  int rows() const override { return 2 * base_->rows(); }
  int cols() const override { return base_->cols(); }
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> adjoint(std::span<const double> y) const override;

private:
  std::shared_ptr<const SensingMatrix> base_;
  double z_mm_, freq_thz_, pitch_mm_;
  int grid_rows_, grid_cols_;
};

FresnelOperator fresnel_operator(std::shared_ptr<const SensingMatrix> base, double z_mm, double freq_thz, int grid_rows,
                                 int grid_cols, double pitch_mm);

} // namespace thzlab
