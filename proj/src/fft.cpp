#include "thzlab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace thzlab::fft {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are created once per (kind, shape) and kept for the process lifetime.
enum class Kind { C2CForward, C2CBackward, R2C, C2R, C2CForward2, C2CBackward2 };

struct PlanCache {
  std::mutex mu;
  std::map<std::tuple<Kind, int, int>, fftw_plan> plans;

  fftw_plan get(Kind kind, int n0, int n1 = 0) {
    std::lock_guard lock(mu);
    auto key = std::make_tuple(kind, n0, n1);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const std::size_t total = static_cast<std::size_t>(n0) * (n1 ? n1 : 1);
    auto* in = fftw_alloc_complex(total);
    auto* out = fftw_alloc_complex(total);
    auto* rbuf = fftw_alloc_real(2 * total);
    fftw_plan p = nullptr;
    switch (kind) {
    case Kind::C2CForward: p = fftw_plan_dft_1d(n0, in, out, FFTW_FORWARD, flags); break;
    case Kind::C2CBackward: p = fftw_plan_dft_1d(n0, in, out, FFTW_BACKWARD, flags); break;
    case Kind::R2C: p = fftw_plan_dft_r2c_1d(n0, rbuf, out, flags); break;
    case Kind::C2R: p = fftw_plan_dft_c2r_1d(n0, in, rbuf, flags); break;
    case Kind::C2CForward2: p = fftw_plan_dft_2d(n0, n1, in, out, FFTW_FORWARD, flags); break;
    case Kind::C2CBackward2: p = fftw_plan_dft_2d(n0, n1, in, out, FFTW_BACKWARD, flags); break;
    }
    fftw_free(in);
    fftw_free(out);
    fftw_free(rbuf);
    if (!p) throw std::runtime_error("FFTW planning failed");
    plans.emplace(key, p);
    return p;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

} // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<cplx> forward(std::span<const cplx> x) {
  std::vector<cplx> in(x.begin(), x.end()), out(x.size());
  if (x.empty()) return out;
  fftw_execute_dft(cache().get(Kind::C2CForward, static_cast<int>(x.size())), as_fftw(in.data()), as_fftw(out.data()));
  return out;
}

std::vector<cplx> inverse(std::span<const cplx> X) {
  std::vector<cplx> in(X.begin(), X.end()), out(X.size());
  if (X.empty()) return out;
  fftw_execute_dft(cache().get(Kind::C2CBackward, static_cast<int>(X.size())), as_fftw(in.data()), as_fftw(out.data()));
  const double scale = 1.0 / static_cast<double>(X.size());
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<cplx> rfft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.begin(), x.end());
  std::vector<cplx> out(static_cast<std::size_t>(n / 2 + 1));
  if (n == 0) return {};
  fftw_execute_dft_r2c(cache().get(Kind::R2C, n), in.data(), as_fftw(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const cplx> X, std::size_t n) {
  if (X.size() != n / 2 + 1) throw std::invalid_argument("irfft: spectrum length must be n/2 + 1");
  // c2r transforms overwrite their input.
  std::vector<cplx> in(X.begin(), X.end());
  in.front().imag(0.0);
  if (n % 2 == 0) in.back().imag(0.0);
  std::vector<double> out(n);
  fftw_execute_dft_c2r(cache().get(Kind::C2R, static_cast<int>(n)), as_fftw(in.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<cplx> forward2(std::span<const cplx> x, int rows, int cols) {
  if (x.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("forward2: size mismatch");
  std::vector<cplx> in(x.begin(), x.end()), out(x.size());
  fftw_execute_dft(cache().get(Kind::C2CForward2, rows, cols), as_fftw(in.data()), as_fftw(out.data()));
  return out;
}

std::vector<cplx> inverse2(std::span<const cplx> X, int rows, int cols) {
  if (X.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("inverse2: size mismatch");
  std::vector<cplx> in(X.begin(), X.end()), out(X.size());
  fftw_execute_dft(cache().get(Kind::C2CBackward2, rows, cols), as_fftw(in.data()), as_fftw(out.data()));
  const double scale = 1.0 / static_cast<double>(X.size());
  for (auto& v : out) v *= scale;
  return out;
}

} // namespace thzlab::fft
