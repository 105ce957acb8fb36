#include "thzlab/sarnet.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace thzlab {

using nn::NnTensor;

namespace {

constexpr int kBranches = 5;

void add_channels(NnTensor& acc, const NnTensor& part, int first) {
  for (int b = 0; b < acc.n; ++b) {
    double* dst = acc.at(b, first);
    const double* src = part.at(b, 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(part.c) * part.plane(); ++i) dst[i] += src[i];
  }
}

std::size_t conv_count(int cin, int cout, int k, bool bias) {
  return static_cast<std::size_t>(cout) * cin * k * k + (bias ? cout : 0);
}

std::size_t block_count(int cin, int cout, int k) {
  return conv_count(cin, cout, k, false) + conv_count(cout, cout, k, false) + 4 * static_cast<std::size_t>(cout);
}

} // namespace

void SarnetConfig::validate() const {
  if (subspace_dim < 1 || base_channels < subspace_dim) throw std::invalid_argument("sarnet: need base_channels >= subspace_dim >= 1");
  if (stem_kernel < 1 || stem_kernel % 2 == 0 || kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("sarnet: kernel sizes must be odd");
  if (cam_reduction < 1 || base_channels % cam_reduction != 0)
    throw std::invalid_argument("sarnet: base_channels must be divisible by cam_reduction");
}

KeyValues SarnetConfig::to_kv() const {
  return {{"base_channels", std::to_string(base_channels)},
          {"subspace_dim", std::to_string(subspace_dim)},
          {"stem_kernel", std::to_string(stem_kernel)},
          {"kernel", std::to_string(kernel)},
          {"cam_reduction", std::to_string(cam_reduction)}};
}

SarnetConfig SarnetConfig::from_kv(const KeyValues& kv) {
  SarnetConfig c;
  auto get = [&](const char* key, int& dst) {
    auto it = kv.find(key);
    if (it != kv.end()) dst = std::stoi(it->second);
  };
  get("base_channels", c.base_channels);
  get("subspace_dim", c.subspace_dim);
  get("stem_kernel", c.stem_kernel);
  get("kernel", c.kernel);
  get("cam_reduction", c.cam_reduction);
  c.validate();
  return c;
}

std::size_t sarnet_param_count(const SarnetConfig& cfg) {
  cfg.validate();
  const int k = cfg.subspace_dim, L = cfg.kernel, r = cfg.cam_reduction;
  std::size_t n = block_count(1, cfg.width(1), cfg.stem_kernel);
  for (int s = 2; s <= kBranches; ++s) {
    const int c = cfg.width(s), cu = cfg.width(s - 1);
    n += conv_count(3, c, 1, false) * 2 + conv_count(cu, c, 1, false) + conv_count(2 * c, k, 1, false) +
         conv_count(6 + cu, c, 1, false) + 3 * static_cast<std::size_t>(c);
    n += block_count(c, c, L);
  }
  auto cam = [&](int C) { return conv_count(C, C / r, 1, true) + conv_count(C / r, C, 1, true); };
  n += cam(cfg.width(5)) + block_count(cfg.width(5), cfg.width(5), L);
  for (int s = 1; s <= 4; ++s) n += cam(3 * cfg.width(s)) + block_count(3 * cfg.width(s), cfg.width(s), L);
  n += conv_count(cfg.width(1), 1, 1, true);
  return n;
}

Sarnet::Sarnet(const SarnetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int L = cfg_.kernel;
  stem_ = nn::ConvBlock("stem", 1, cfg_.width(1), cfg_.stem_kernel);
  for (int s = 2; s <= kBranches; ++s) {
    const auto i = static_cast<std::size_t>(s - 2);
    const std::string tag = std::to_string(s);
    safm_[i] = nn::Safm("safm" + tag, 3, 3, cfg_.width(s - 1), cfg_.width(s), cfg_.subspace_dim);
    enc_[i] = nn::ConvBlock("enc" + tag, cfg_.width(s), cfg_.width(s), L);
  }
  cam_[4] = nn::Cam("cam5", cfg_.width(5), cfg_.cam_reduction);
  dec_[4] = nn::ConvBlock("dec5", cfg_.width(5), cfg_.width(5), L);
  for (int s = 1; s <= 4; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    cam_[i] = nn::Cam("cam" + std::to_string(s), 3 * cfg_.width(s), cfg_.cam_reduction);
    dec_[i] = nn::ConvBlock("dec" + std::to_string(s), 3 * cfg_.width(s), cfg_.width(s), L);
  }
  head_ = nn::Conv2d("head", cfg_.width(1), 1, 1, true);

  Rng rng(stream_seed(seed, 0x5a52));
  for (auto* p : params())
    if (p->shape.size() == 4) nn::he_init(*p, p->shape[1] * p->shape[2] * p->shape[3], rng);
}

std::vector<nn::Param*> Sarnet::params() {
  std::vector<nn::Param*> out;
  stem_.collect(out);
  for (std::size_t i = 0; i < 4; ++i) {
    safm_[i].collect(out);
    enc_[i].collect(out);
  }
  for (std::size_t i = 0; i < 5; ++i) {
    cam_[i].collect(out);
    dec_[i].collect(out);
  }
  head_.collect(out);
  return out;
}

std::vector<nn::Buffer*> Sarnet::buffers() {
  std::vector<nn::Buffer*> out;
  stem_.collect(out);
  for (auto& e : enc_) e.collect(out);
  for (auto& d : dec_) d.collect(out);
  return out;
}

std::size_t Sarnet::param_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->size();
  return n;
}

void Sarnet::set_training(bool t) {
  stem_.set_training(t);
  for (auto& e : enc_) e.set_training(t);
  for (auto& d : dec_) d.set_training(t);
}

void Sarnet::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

NnTensor Sarnet::forward(const NnTensor& x) {
  if (x.c != kFeatureChannels) throw std::invalid_argument("sarnet: input must have 25 channels");
  if (x.h % 16 || x.w % 16 || x.h == 0 || x.w == 0) throw std::invalid_argument("sarnet: H and W must be divisible by 16");
  h_ = x.h;
  w_ = x.w;
  std::array<NnTensor, kBranches> e;
  e[0] = stem_.forward(nn::slice_channels(x, 0, 1));
  NnTensor down = nn::downsample_half(e[0]);
  NnTensor amp = nn::downsample_half(nn::slice_channels(x, 1, kBandCount));
  NnTensor phase = nn::downsample_half(nn::slice_channels(x, 1 + kBandCount, kBandCount));
  for (int s = 2; s <= kBranches; ++s) {
    const auto i = static_cast<std::size_t>(s - 2);
    const int first = 3 * (s - 2);
    const NnTensor f = safm_[i].forward(nn::slice_channels(amp, first, 3), nn::slice_channels(phase, first, 3), down);
    e[i + 1] = enc_[i].forward(f);
    if (s < kBranches) {
      down = nn::downsample_half(e[i + 1]);
      amp = nn::downsample_half(amp);
      phase = nn::downsample_half(phase);
    }
  }
  NnTensor h = dec_[4].forward(cam_[4].forward(e[4]));
  for (int s = 4; s >= 1; --s) {
    const auto i = static_cast<std::size_t>(s - 1);
    h = dec_[i].forward(cam_[i].forward(nn::concat_channels(e[i], nn::upsample_double(h))));
  }
  return sigmoid_.forward(head_.forward(h));
}

NnTensor Sarnet::backward(const NnTensor& dy) {
  std::array<NnTensor, kBranches> de;
  NnTensor dh = head_.backward(sigmoid_.backward(dy));
  for (int s = 1; s <= 4; ++s) {
    const auto i = static_cast<std::size_t>(s - 1);
    const NnTensor dcat = cam_[i].backward(dec_[i].backward(dh));
    de[i] = nn::slice_channels(dcat, 0, cfg_.width(s));
    dh = nn::upsample_double_backward(nn::slice_channels(dcat, cfg_.width(s), cfg_.width(s + 1)));
  }
  de[4] = cam_[4].backward(dec_[4].backward(dh));

  const int N = dy.n;
  NnTensor damp(N, kBandCount, h_ >> 4, w_ >> 4), dphase(N, kBandCount, h_ >> 4, w_ >> 4);
  for (int s = kBranches; s >= 2; --s) {
    const auto i = static_cast<std::size_t>(s - 2);
    const auto g = safm_[i].backward(enc_[i].backward(de[i + 1]));
    add_channels(damp, g.amp, 3 * (s - 2));
    add_channels(dphase, g.phase, 3 * (s - 2));
    nn::add_into(de[i], nn::downsample_half_backward(g.upper));
    damp = nn::downsample_half_backward(damp);
    dphase = nn::downsample_half_backward(dphase);
  }
  const NnTensor dtm = stem_.backward(de[0]);
  return nn::concat_channels({&dtm, &damp, &dphase});
}

nn::NnTensor to_nn(const std::vector<const FeatureStack*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int H = batch[0]->rows, W = batch[0]->cols;
  NnTensor x(static_cast<int>(batch.size()), kFeatureChannels, H, W);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->rows != H || batch[b]->cols != W) throw std::invalid_argument("feature stacks differ in size");
    std::copy(batch[b]->data.begin(), batch[b]->data.end(), x.at(static_cast<int>(b), 0));
  }
  return x;
}

nn::NnTensor to_nn(const std::vector<const Image2D*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  NnTensor x(static_cast<int>(batch.size()), 1, batch[0]->rows, batch[0]->cols);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->rows != x.h || batch[b]->cols != x.w) throw std::invalid_argument("images differ in size");
    std::copy(batch[b]->data.begin(), batch[b]->data.end(), x.at(static_cast<int>(b), 0));
  }
  return x;
}

TrainResult train(Sarnet& net, const std::vector<TrainSample>& data, const TrainOptions& opt) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (opt.epochs < 0 || !(opt.lr >= 0)) throw std::invalid_argument("train: bad epochs or learning rate");
  for (const auto& s : data)
    if (s.target.rows != s.features.rows || s.target.cols != s.features.cols)
      throw std::invalid_argument("train: target and features differ in size");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool full_batch = data.size() <= 8;
  const std::size_t bs = full_batch ? data.size() : static_cast<std::size_t>(std::max(1, opt.batch_size));
  Rng rng(stream_seed(opt.seed, 0x7261696e));
  nn::Adam adam({opt.lr});
  auto params = net.params();
  net.set_training(true);

  TrainResult res;
  for (int ep = 0; ep < opt.epochs; ++ep) {
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const FeatureStack*> xs;
      std::vector<const Image2D*> ts;
      for (std::size_t j = start; j < std::min(order.size(), start + bs); ++j) {
        xs.push_back(&data[order[j]].features);
        ts.push_back(&data[order[j]].target);
      }
      const NnTensor x = to_nn(xs), t = to_nn(ts);
      net.zero_grad();
      const NnTensor y = net.forward(x);
      NnTensor dy(y.n, y.c, y.h, y.w);
      double sse = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y.data[i] - t.data[i];
        sse += d * d;
        dy.data[i] = 2 * d / static_cast<double>(y.size());
      }
      net.backward(dy);
      adam.step(params);
      total += sse;
      count += y.size();
    }
    res.loss_history.push_back(total / static_cast<double>(count));
  }
  return res;
}

Image2D infer(Sarnet& net, const FeatureStack& fs) {
  net.set_training(false);
  const NnTensor y = net.forward(to_nn(std::vector<const FeatureStack*>{&fs}));
  Image2D out(fs.rows, fs.cols, fs.pitch_mm);
  std::copy(y.data.begin(), y.data.end(), out.data.begin());
  return out;
}

void save_sarnet(Sarnet& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  KeyValues manifest = net.config().to_kv();
  manifest["kind"] = "sarnet";
  std::ostringstream names;
  auto put = [&](const std::string& name, const std::vector<int>& shape, const nn::Vec& v) {
    std::vector<std::uint32_t> dims;
    for (int d : shape) dims.push_back(static_cast<std::uint32_t>(d));
    write_thzt(Tensor(dims, std::vector<float>(v.begin(), v.end())), dir / (name + ".thzt"));
    names << (names.tellp() > 0 ? "," : "") << name;
  };
  for (auto* p : net.params()) put(p->name, p->shape, p->value);
  for (auto* b : net.buffers()) put(b->name, {static_cast<int>(b->value.size())}, b->value);
  manifest["tensors"] = names.str();
  write_sidecar(manifest, dir / "manifest.txt");
}

Sarnet load_sarnet(const std::filesystem::path& dir) {
  const auto manifest = read_sidecar(dir / "manifest.txt");
  if (!manifest.count("kind") || manifest.at("kind") != "sarnet") throw DataError("not a sarnet parameter directory");
  SarnetConfig cfg;
  try {
    cfg = SarnetConfig::from_kv(manifest);
  } catch (const std::exception& e) {
    throw DataError(std::string("bad sarnet manifest: ") + e.what());
  }
  Sarnet net(cfg, 0);
  auto get = [&](const std::string& name, nn::Vec& dst) {
    const auto t = read_thzt(dir / (name + ".thzt"));
    if (t.dtype() != DType::Real32 || t.numel() != dst.size()) throw DataError("parameter " + name + " has the wrong size");
    std::copy(t.real().begin(), t.real().end(), dst.begin());
  };
  for (auto* p : net.params()) get(p->name, p->value);
  for (auto* b : net.buffers()) get(b->name, b->value);
  return net;
}

} // namespace thzlab
