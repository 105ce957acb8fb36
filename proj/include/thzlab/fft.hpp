#pragma once

#include <complex>
#include <span>
#include <vector>

namespace thzlab {

using cplx = std::complex<double>;

/// Thin FFTW wrappers. Forward transforms are unnormalized
/// (X_k = sum_n x_n e^{-2 pi i k n / N}); inverse transforms divide by N.
namespace fft {

std::vector<cplx> forward(std::span<const cplx> x);
std::vector<cplx> inverse(std::span<const cplx> X);

/// One-sided transform of a real sequence: N/2 + 1 bins.
std::vector<cplx> rfft(std::span<const double> x);
/// Inverse of rfft for an output length n; imaginary parts of the DC and
/// Nyquist bins are ignored.
std::vector<double> irfft(std::span<const cplx> X, std::size_t n);

/// Row-major rows x cols 2-D transforms.
std::vector<cplx> forward2(std::span<const cplx> x, int rows, int cols);
std::vector<cplx> inverse2(std::span<const cplx> X, int rows, int cols);

/// Signed frequency index of bin k for an n-point transform (k or k - n).
inline int signed_index(int k, int n) { return k <= n / 2 ? k : k - n; }

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }
std::size_t next_pow2(std::size_t n);

} // namespace fft
} // namespace thzlab
