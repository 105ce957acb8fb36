#pragma once

#include "thzlab/parallel.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <new>
#include <string>
#include <vector>

namespace thzlab::nn {

/// Cache-line aligned storage. Vectorized kernels peel a scalar head whose
/// length depends on the start address, so results would otherwise vary in
/// the last bit with heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Vec = std::vector<double, AlignedAllocator<double>>;

/// Dense batch x channels x H x W activation buffer.
struct NnTensor {
  int n = 0, c = 0, h = 0, w = 0;
  Vec data;

  NnTensor() = default;
  NnTensor(int n, int c, int h, int w, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  double* at(int b, int ch) { return data.data() + (static_cast<std::size_t>(b) * c + ch) * plane(); }
  const double* at(int b, int ch) const { return data.data() + (static_cast<std::size_t>(b) * c + ch) * plane(); }
  bool same_shape(const NnTensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Trainable tensor plus Adam moments.
struct Param {
  std::string name;
  std::vector<int> shape;
  Vec value, grad, m, v;

  Param() = default;
  Param(std::string name, std::vector<int> shape);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// Non-trainable persistent state (batch-norm running statistics).
struct Buffer {
  std::string name;
  Vec value;
};

void he_init(Param& p, int fan_in, Rng& rng);

/// Sign pattern digest of every ReLU evaluated since the last reset. Two
/// forward passes with equal digests took the same branch at every kink.
void reset_kink_digest();
std::uint64_t kink_digest();

class Conv2d {
public:
  Conv2d() = default;
  Conv2d(const std::string& name, int cin, int cout, int kernel, bool bias);

  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy);
  void collect(std::vector<Param*>& out);
  int cin() const { return cin_; }
  int cout() const { return cout_; }

  Param weight, bias;

private:
  int cin_ = 0, cout_ = 0, k_ = 1;
  bool has_bias_ = false;
  NnTensor x_;
  Vec cols_;
};

class BatchNorm2d {
public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy);
  void collect(std::vector<Param*>& out);
  void collect(std::vector<Buffer*>& out);

  bool training = true;
  double eps = 1e-5;
  double momentum = 0.1;
  Param gamma, beta;
  Buffer running_mean, running_var;

private:
  Vec xhat_, invstd_;
  bool cached_training_ = true;
};

class ReLU {
public:
  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy) const;

private:
  std::vector<std::uint8_t> mask_;
};

class Sigmoid {
public:
  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy) const;

private:
  NnTensor y_;
};

/// Softmax over the middle axis of an (outer, len, inner) layout.
Vec softmax(const Vec& x, int outer, int len, int inner);
Vec softmax_backward(const Vec& y, const Vec& dy, int outer, int len,
                                     int inner);

/// 2x2 average pool; H and W must be even.
NnTensor downsample_half(const NnTensor& x);
NnTensor downsample_half_backward(const NnTensor& dy);
/// Bilinear 2x upsampling with half-pixel centers and edge clamping.
NnTensor upsample_double(const NnTensor& x);
NnTensor upsample_double_backward(const NnTensor& dy);

NnTensor concat_channels(const NnTensor& a, const NnTensor& b);
NnTensor concat_channels(const std::vector<const NnTensor*>& parts);
/// Channels [first, first + count).
NnTensor slice_channels(const NnTensor& x, int first, int count);
void add_into(NnTensor& acc, const NnTensor& x);

/// [conv(no bias) -> BN -> ReLU] x 2.
class ConvBlock {
public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int cin, int cout, int kernel);
  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy);
  void collect(std::vector<Param*>& out);
  void collect(std::vector<Buffer*>& out);
  void set_training(bool t);

  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;

private:
  ReLU relu1_, relu2_;
};

/// Channel attention: y = sigmoid(W2 relu(W1 gap(x) + b1) + b2) * x.
class Cam {
public:
  Cam() = default;
  Cam(const std::string& name, int channels, int reduction);
  NnTensor forward(const NnTensor& x);
  NnTensor backward(const NnTensor& dy);
  void collect(std::vector<Param*>& out);
  const NnTensor& gates() const { return g_; }

  Conv2d fc1, fc2;

private:
  ReLU relu_;
  Sigmoid sig_;
  NnTensor x_, g_;
};

/// Subspace-attention fusion of amplitude, phase and coarser-scale features.
///
/// Embeddings E_a, E_p, E_u (bias-free 1x1, c channels each) are projected on
/// k orthonormal basis maps Q built from concat(E_a, E_p) by modified
/// Gram-Schmidt. The three coefficient sets C_s = E_s Q^T are mixed with
/// per-channel softmax weights and lifted back through Q; a bias-free 1x1
/// residual over the raw inputs is added.
class Safm {
public:
  Safm() = default;
  Safm(const std::string& name, int c_amp, int c_phase, int c_upper, int c_out, int k);

  NnTensor forward(const NnTensor& amp, const NnTensor& phase, const NnTensor& upper);
  struct Grads {
    NnTensor amp, phase, upper;
  };
  Grads backward(const NnTensor& dy);
  void collect(std::vector<Param*>& out);

  /// k x HW orthonormal basis per batch item from the last forward pass.
  const std::vector<Vec>& basis() const { return q_; }
  int k() const { return k_; }

  Conv2d embed_amp, embed_phase, embed_upper, basis_conv, residual;
  Param logits; ///< 3 x c_out, softmax over the source axis

private:
  int c_ = 0, k_ = 0, ca_ = 0, cp_ = 0, cu_ = 0;
  NnTensor e_[3];
  std::vector<Vec> q_, coef_[3], mix_, v_store_, norms_;
  Vec alpha_;
  int hw_ = 0;
};

/// Modified Gram-Schmidt on the rows of b (k x len). Intermediate vectors are
/// kept in `store` (k(k+1)/2 rows) and the norms in `norms` for the backward pass.
Vec mgs_forward(const Vec& b, int k, int len, Vec& store,
                                Vec& norms, double eps = 1e-12);
Vec mgs_backward(const Vec& q, const Vec& dq, int k, int len,
                                 const Vec& store, const Vec& norms);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  explicit Adam(AdamOptions opt) : opt_(opt) {}
  void step(const std::vector<Param*>& params);
  long steps() const { return t_; }

private:
  AdamOptions opt_;
  long t_ = 0;
};

/// One tensor taking part in a finite-difference check: the value buffer is
/// perturbed in place; `grad` holds the analytic gradient of the loss.
struct GradTarget {
  std::string name;
  Vec* value = nullptr;
  const Vec* grad = nullptr;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Central differences on up to `max_coords` seed-chosen coordinates per
/// target. Relative error |a - n| / max(|a|, |n|, 1e-7). Coordinates whose
/// +-eps evaluations change any ReLU branch are skipped.
GradCheckReport grad_check(const std::function<double()>& loss, const std::vector<GradTarget>& targets, double eps,
                           std::size_t max_coords = 512, std::uint64_t seed = 1);

} // namespace thzlab::nn
