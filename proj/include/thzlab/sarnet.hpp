#pragma once

#include "thzlab/nn.hpp"
#include "thzlab/spectral.hpp"
#include "thzlab/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace thzlab {

struct SarnetConfig {
  int base_channels = 16;
  int subspace_dim = 4;
  int stem_kernel = 3;
  int kernel = 1;
  int cam_reduction = 4;

  void validate() const;
  int width(int scale) const { return base_channels << (scale - 1); } ///< scale 1..5
  KeyValues to_kv() const;
  static SarnetConfig from_kv(const KeyValues& kv);
};

/// Closed-form trainable parameter count for a configuration.
std::size_t sarnet_param_count(const SarnetConfig& cfg);

/// Five-scale encoder/decoder. Input is the 25-channel feature stack
/// (Time-max, 12 amplitudes, 12 phases); band triplets in ascending
/// frequency feed scales 2..5 through SAFM. Output is one sigmoid channel.
class Sarnet {
public:
  explicit Sarnet(const SarnetConfig& cfg = {}, std::uint64_t seed = 0);

  nn::NnTensor forward(const nn::NnTensor& x);
  /// Gradient with respect to the input; parameter gradients accumulate.
  nn::NnTensor backward(const nn::NnTensor& dy);

  void set_training(bool t);
  void zero_grad();
  std::vector<nn::Param*> params();
  std::vector<nn::Buffer*> buffers();
  std::size_t param_count();
  const SarnetConfig& config() const { return cfg_; }

  /// SAFM modules of scales 2..5.
  std::array<nn::Safm, 4>& safm() { return safm_; }
  std::array<nn::Cam, 5>& cam() { return cam_; }

private:
  SarnetConfig cfg_;
  nn::ConvBlock stem_;
  std::array<nn::Safm, 4> safm_;
  std::array<nn::ConvBlock, 4> enc_;
  std::array<nn::Cam, 5> cam_;
  std::array<nn::ConvBlock, 5> dec_;
  nn::Conv2d head_;
  nn::Sigmoid sigmoid_;
  int h_ = 0, w_ = 0;
};

nn::NnTensor to_nn(const std::vector<const FeatureStack*>& batch);
nn::NnTensor to_nn(const std::vector<const Image2D*>& batch);

struct TrainSample {
  FeatureStack features;
  Image2D target;
};

struct TrainOptions {
  int epochs = 200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int batch_size = 4; ///< used only when the set is larger than 8 samples
};

struct TrainResult {
  std::vector<double> loss_history; ///< mean training-mode MSE per epoch
};

TrainResult train(Sarnet& net, const std::vector<TrainSample>& data, const TrainOptions& opt);

/// Eval-mode restoration of one feature stack.
Image2D infer(Sarnet& net, const FeatureStack& fs);

/// Directory with manifest.txt and one THZT file per parameter and buffer.
void save_sarnet(Sarnet& net, const std::filesystem::path& dir);
Sarnet load_sarnet(const std::filesystem::path& dir);

} // namespace thzlab
