#pragma once

#include "thzlab/forward_sim.hpp"
#include "thzlab/phantom.hpp"
#include "thzlab/sarnet.hpp"
#include "thzlab/spectral.hpp"
#include "thzlab/tomo.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace thzlab {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Per-view projections with their acquisition angles; stored as a
/// views x H x W THZT tensor plus sidecar.
struct ProjectionStack {
  std::vector<Image2D> images;
  std::vector<double> angles_deg;
};

void save_stack(const ProjectionStack& s, const std::filesystem::path& path);
ProjectionStack load_stack(const std::filesystem::path& path);
/// Views with angle below 180 degrees; flipped views mirror these.
ProjectionStack half_turn(const ProjectionStack& s);

/// Writes `manifest.<command>.txt` in `dir` with the version, the given
/// settings and an FNV-1a hash of every input file.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, KeyValues settings,
                        const std::vector<std::filesystem::path>& inputs);

/// Seeded union of a sphere, a box and a cylinder inside a size^3 grid.
Phantom random_object(int size, double pitch_mm, std::uint64_t seed);

struct DemoOptions {
  std::uint64_t seed = 0;
  int size = 32;
  double pitch_mm = 0.25;
  int n_views = 30;
  double angle_step_deg = 6;
  int train_every = 3; ///< views 0, k, 2k, ... form the training set
  int epochs = 150;
  double lr = 2e-3;
  SarnetConfig net;
  double noise_db = 41.7;
};

struct DemoViews {
  ScanConfig scan;
  std::vector<double> angles_deg;
  std::vector<FeatureStack> features;
  std::vector<Image2D> ground_truth; ///< binary silhouettes
  std::vector<Image2D> raw;          ///< 1 - normalized Time-max
};

/// Simulates every view of `p` and extracts features, silhouettes and raw projections.
DemoViews simulate_views(const Phantom& p, const DemoOptions& opt);

struct MethodScores {
  std::string method;
  double psnr_db = 0;          ///< mean over views against the silhouettes
  double ssim = 0;             ///< mean over views
  double mse_cross_section = 0;
};

struct DemoResult {
  Phantom phantom;
  DemoViews views;
  std::vector<Image2D> restored;
  Volume3D reference, raw_volume, restored_volume;
  std::vector<double> loss_history;
  std::vector<MethodScores> scores; ///< time-max, sarnet
};

DemoResult run_demo(const DemoOptions& opt);

/// CSV rows: method, object, psnr_db, ssim, mse_cross_section.
std::string demo_metrics_csv(const DemoResult& r, const std::string& object = "random");

/// Writes volumes, projections, metrics.csv and the run manifest under `dir`.
void write_demo_outputs(const DemoResult& r, const DemoOptions& opt, const std::filesystem::path& dir);

} // namespace thzlab
