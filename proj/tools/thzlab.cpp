#include "thzlab/cs.hpp"
#include "thzlab/forward_sim.hpp"
#include "thzlab/holo.hpp"
#include "thzlab/metrics.hpp"
#include "thzlab/parallel.hpp"
#include "thzlab/phantom.hpp"
#include "thzlab/pipeline.hpp"
#include "thzlab/sarnet.hpp"
#include "thzlab/spectral.hpp"
#include "thzlab/tomo.hpp"
#include "thzlab/version.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace thzlab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Common {
  int threads = 0;
  std::string run_dir = ".";
  std::string config;
};

std::string view_name(const std::string& stem, int v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_v%03d.thzt", stem.c_str(), v);
  return buf;
}

CLI::App* leaf(CLI::App* parent, const std::string& name, const std::string& desc) {
  auto* s = parent->add_subcommand(name, desc);
  s->fallthrough();
  return s;
}

std::vector<double> evenly_spaced_angles(int n) {
  std::vector<double> a;
  for (int i = 0; i < n; ++i) a.push_back(180.0 * i / n);
  return a;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns after writing its outputs into the run directory.

struct PhantomGen {
  std::string kind = "sphere";
  int size = 64;
  double pitch = 0.25;
  double radius = 10;
  double half = 8;
  double height = 32;
  std::string text = "Y";
  int glyph_scale = 2;
  int glyph_depth = 6;
  std::uint64_t seed = 0;
  std::string out = "phantom.thzt";
  bool mid_slice = false;

  void attach(CLI::App* s) {
    s->add_option("--kind", kind, "sphere, box, cylinder, glyph or random")->capture_default_str();
    s->add_option("--size", size, "Grid side in voxels")->capture_default_str();
    s->add_option("--pitch", pitch, "Voxel pitch (mm)")->capture_default_str();
    s->add_option("--radius", radius, "Sphere/cylinder radius (voxels)")->capture_default_str();
    s->add_option("--half-extent", half, "Box half extent (voxels)")->capture_default_str();
    s->add_option("--height", height, "Cylinder height (voxels)")->capture_default_str();
    s->add_option("--text", text, "Glyph text")->capture_default_str();
    s->add_option("--glyph-scale", glyph_scale, "Voxels per font cell")->capture_default_str();
    s->add_option("--glyph-depth", glyph_depth, "Glyph extrusion depth (voxels)")->capture_default_str();
    s->add_option("--seed", seed, "Seed for --kind random")->capture_default_str();
    s->add_option("--out", out, "Output file name inside the run directory")->capture_default_str();
    s->add_flag("--mid-slice", mid_slice, "Also write the middle z slice as a 2-D image (phantom_mid.thzt)");
  }

  void run(const Common& c) {
    Phantom p;
    if (kind == "random") {
      p = random_object(size, pitch, seed);
    } else {
      PrimitiveParams pp;
      pp.grid_shape = {size, size, size};
      pp.pitch_mm = pitch;
      const double mid = (size - 1) / 2.0;
      pp.center = {mid, mid, mid};
      pp.radius = radius;
      pp.half_extent = {half, half, half};
      pp.height = height;
      pp.text = text;
      pp.glyph_scale = glyph_scale;
      pp.glyph_depth = glyph_depth;
      p = make_primitive(parse_primitive_kind(kind == "glyph" ? "extruded_glyph" : kind), pp);
    }
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    save_phantom(p, dir / out);
    if (mid_slice) {
      const Image2D mid = p.grid.slice(p.grid.nz / 2);
      write_thzt(mid.to_tensor(), dir / "phantom_mid.thzt");
      export_pgm(mid, dir / "phantom_mid.pgm");
    }
    write_run_manifest(dir, "phantom gen",
                       {{"kind", kind}, {"size", std::to_string(size)}, {"pitch_mm", format_exact(pitch)},
                        {"seed", std::to_string(seed)}, {"text", text}},
                       {});
  }
};

struct SimulateCt {
  std::string phantom;
  std::uint64_t seed = 0;
  int views = 30;
  double step = 6;
  double x_range = 0;
  int samples = 1024;
  double noise_db = 41.7;
  bool flip = false;
  bool no_fresnel = false;
  bool psf = false;
  std::string out = "cube.thzt";

  void attach(CLI::App* s) {
    s->add_option("--phantom", phantom, "Phantom THZT file")->required();
    s->add_option("--seed", seed, "Noise seed")->required();
    s->add_option("--views", views, "Number of views")->capture_default_str();
    s->add_option("--step", step, "Angular step (deg)")->capture_default_str();
    s->add_option("--x-range", x_range, "Horizontal scan range (mm); 0 = phantom width")->capture_default_str();
    s->add_option("--samples", samples, "Samples per trace (power of two)")->capture_default_str();
    s->add_option("--noise-db", noise_db, "Dynamic range (dB)")->capture_default_str();
    s->add_flag("--flip", flip, "Append width-reversed views");
    s->add_flag("--no-fresnel", no_fresnel, "Skip interface transmission losses");
    s->add_flag("--psf", psf, "Apply the Gaussian-beam blur");
    s->add_option("--out", out, "Output cube name")->capture_default_str();
  }

  void run(const Common& c) {
    const Phantom p = load_phantom(phantom);
    ScanConfig cfg;
    cfg.n_views = views;
    cfg.angle_step_deg = step;
    cfg.angular_range_deg = views * step;
    cfg.x_step_mm = cfg.z_step_mm = p.pitch_mm();
    cfg.x_range_mm = x_range > 0 ? x_range : p.grid.nx * p.pitch_mm();
    cfg.pulse.n_samples = samples;
    cfg.noise_dynamic_range_db = noise_db;
    cfg.rng_seed = seed;
    cfg.apply_fresnel = !no_fresnel;
    cfg.psf.enabled = psf;
    ScanCube cube = simulate_scan(p, cfg);
    if (flip) cube = augment_flip(cube);
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    save_cube(cube, dir / out);

    ProjectionStack truth;
    const auto g = cfg.geometry(p);
    for (int v = 0; v < cube.views(); ++v) {
      const double a = cube.angle_deg(v);
      truth.images.push_back(ground_truth_projection(p, g, a));
      truth.angles_deg.push_back(a);
    }
    save_stack(truth, dir / "truth_stack.thzt");
    auto kv = cfg.to_kv();
    kv["flip"] = flip ? "1" : "0";
    write_run_manifest(dir, "simulate ct", kv, {phantom});
  }
};

struct ExtractFeatures {
  std::string cube;
  std::vector<int> views;

  void attach(CLI::App* s) {
    s->add_option("--cube", cube, "Scan cube THZT file")->required();
    s->add_option("--views", views, "View indices (default: all)");
  }

  void run(const Common& c) {
    const ScanCube sc = load_cube(cube);
    const PixelModel model(sc.config);
    const Spectrum reference = fft_trace(model.air_trace);
    const auto bands = select_water_bands(sc.config.water);
    if (views.empty())
      for (int v = 0; v < sc.views(); ++v) views.push_back(v);
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    ProjectionStack raw;
    for (int v : views) {
      const auto fsx = feature_stack(view_of(sc, v), bands, reference);
      save_features(fsx, dir / view_name("features", v));
      Image2D img = fsx.channel_image(0);
      for (auto& x : img.data) x = 1.0 - x;
      raw.images.push_back(std::move(img));
      raw.angles_deg.push_back(sc.angle_deg(v));
    }
    save_stack(raw, dir / "timemax_stack.thzt");
    export_pgm(raw.images.front(), dir / "timemax_first.pgm");
    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < bands.size(); ++i) rows.push_back({std::to_string(i), {bands[i]}});
    export_csv(rows, dir / "bands.csv", {"band", "freq_thz"});
    write_run_manifest(dir, "extract features", {{"views", std::to_string(views.size())}}, {cube});
  }
};

struct Reconstruct {
  std::string sino, image, filter = "ram-lak", out = "reconstruction.thzt";
  int angles = 180;
  int iters = 10;
  double relax = 0.25;

  void attach(CLI::App* s, bool is_sart) {
    auto* g = s->add_option_group("input");
    g->add_option("--sino", sino, "Sinogram THZT file");
    g->add_option("--from-image", image, "Square image THZT; its radon transform is reconstructed");
    g->require_option(1);
    s->add_option("--angles", angles, "Angle count for --from-image")->capture_default_str();
    if (is_sart) {
      s->add_option("--iters", iters, "SART iterations")->capture_default_str();
      s->add_option("--relax", relax, "Relaxation in (0, 1]")->capture_default_str();
    } else {
      s->add_option("--filter", filter, "ram-lak, shepp-logan or hann")->capture_default_str();
    }
    s->add_option("--out", out, "Output image name")->capture_default_str();
  }

  void run(const Common& c, bool is_sart) {
    Sinogram s;
    fs::path input;
    if (!image.empty()) {
      input = image;
      const Image2D img = Image2D::from_tensor(read_thzt(image), 1.0);
      s = radon(img, evenly_spaced_angles(angles));
    } else {
      input = sino;
      s = load_sinogram(sino);
    }
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    Image2D rec;
    KeyValues kv;
    if (is_sart) {
      auto r = sart(s, iters, relax);
      rec = std::move(r.image);
      std::vector<CsvRow> rows;
      for (std::size_t i = 0; i < r.residuals.size(); ++i) rows.push_back({std::to_string(i), {r.residuals[i]}});
      export_csv(rows, dir / "sart_residuals.csv", {"iteration", "residual"});
      kv = {{"iters", std::to_string(iters)}, {"relax", format_exact(relax)}};
    } else {
      rec = fbp(s, parse_fbp_filter(filter));
      kv = {{"filter", filter}};
    }
    if (!image.empty()) save_sinogram(s, dir / "sinogram.thzt");
    write_thzt(rec.to_tensor(), dir / out);
    export_pgm(rec, fs::path(dir / out).replace_extension(".pgm"));
    write_run_manifest(dir, is_sart ? "reconstruct sart" : "reconstruct fbp", kv, {input});
  }
};

struct VolumeCmd {
  std::string stack, filter = "ram-lak", out = "volume.thzt";
  bool binarize = false;

  void attach(CLI::App* s) {
    s->add_option("--stack", stack, "Projection stack THZT file")->required();
    s->add_option("--filter", filter, "ram-lak, shepp-logan or hann")->capture_default_str();
    s->add_flag("--binarize", binarize, "Threshold at 0.5 after min-max normalization");
    s->add_option("--out", out, "Output volume name")->capture_default_str();
  }

  void run(const Common& c) {
    const FbpFilter f = parse_fbp_filter(filter);
    const auto st = load_stack(stack);
    const auto half = half_turn(st);
    if (half.images.size() < st.images.size())
      std::cout << "volume: using " << half.images.size() << " of " << st.images.size() << " views (angles below 180)\n";
    const Volume3D vol = reconstruct_volume(half.images, half.angles_deg, {f, binarize, 0.5});
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    write_thzt(vol.to_tensor(), dir / out);
    export_pgm(vol.slice(vol.nz / 2), fs::path(dir / out).replace_extension(".mid.pgm"));
    write_run_manifest(dir, "volume", {{"filter", filter}, {"binarize", binarize ? "1" : "0"}}, {stack});
  }
};

struct CsSolve {
  std::string image, kind = "bernoulli", solver = "fista", out = "cs_recovery.thzt";
  int m = 0;
  std::uint64_t seed = 0;
  double lambda = 0.01, noise_db = 400, z = 0, freq = 1.0;
  int iters = 500;

  void attach(CLI::App* s) {
    s->add_option("--image", image, "Scene image THZT (measured, then recovered)")->required();
    s->add_option("--m", m, "Number of patterns (default n/2)");
    s->add_option("--kind", kind, "bernoulli, binary01 or hadamard")->capture_default_str();
    s->add_option("--solver", solver, "ista or fista")->capture_default_str();
    s->add_option("--lambda", lambda, "L1 weight")->capture_default_str();
    s->add_option("--iters", iters, "Iterations")->capture_default_str();
    s->add_option("--seed", seed, "Pattern and noise seed")->capture_default_str();
    s->add_option("--noise-db", noise_db, "Measurement dynamic range (dB); >= 300 is noiseless")->capture_default_str();
    s->add_option("--z", z, "Mask-to-object distance (mm); nonzero enables the diffraction-aware operator")
        ->capture_default_str();
    s->add_option("--freq", freq, "Frequency for --z (THz)")->capture_default_str();
    s->add_option("--out", out, "Output image name")->capture_default_str();
  }

  void run(const Common& c) {
    const Image2D img = Image2D::from_tensor(read_thzt(image), 1.0);
    const int n = static_cast<int>(img.size());
    if (m <= 0) m = n / 2;
    auto masks = std::make_shared<SensingMatrix>(make_sensing_matrix(parse_sensing_kind(kind), m, n, seed));
    Rng rng(stream_seed(seed, 0x6373));
    std::vector<double> s;
    std::unique_ptr<LinearOperator> op;
    if (z != 0) {
      auto fr = std::make_unique<FresnelOperator>(masks, z, freq, img.rows, img.cols, img.pitch_mm);
      s = fr->apply(img.data);
      if (noise_db < 300) {
        double peak = 0;
        for (double v : s) peak = std::max(peak, std::abs(v));
        std::normal_distribution<double> nd(0.0, peak / std::pow(10.0, noise_db / 20.0));
        for (auto& v : s) v += nd(rng);
      }
      op = std::move(fr);
    } else {
      s = cs_measure(*masks, img, noise_db, &rng);
    }
    const LinearOperator& A = op ? *op : static_cast<const LinearOperator&>(*masks);
    SolveOptions so;
    so.lambda = lambda;
    so.iters = iters;
    SolveResult r;
    if (solver == "ista")
      r = ista(A, s, so);
    else if (solver == "fista")
      r = fista(A, s, so);
    else
      throw std::invalid_argument("unknown solver '" + solver + "' (expected ista or fista)");
    Image2D rec(img.rows, img.cols, img.pitch_mm);
    rec.data = r.x;
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    write_thzt(rec.to_tensor(), dir / out);
    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < r.objective.size(); ++i) rows.push_back({std::to_string(i), {r.objective[i]}});
    export_csv(rows, dir / "cs_objective.csv", {"iteration", "objective"});
    write_run_manifest(dir, "cs solve",
                       {{"kind", kind}, {"solver", solver}, {"m", std::to_string(m)}, {"lambda", format_exact(lambda)},
                        {"iters", std::to_string(iters)}, {"seed", std::to_string(seed)},
                        {"noise_db", format_exact(noise_db)}, {"z_mm", format_exact(z)}},
                       {image});
  }
};

struct HoloSim {
  std::string field, amplitude, out = "hologram.thzt";
  double tilt = 10, ref_amp = 1, z = 0, freq = 1, pitch = 0.25;

  void attach(CLI::App* s) {
    auto* g = s->add_option_group("object");
    g->add_option("--field", field, "Complex object field THZT (with sidecar)");
    g->add_option("--amplitude", amplitude, "Real amplitude image THZT (zero phase)");
    g->require_option(1);
    s->add_option("--tilt", tilt, "Reference tilt (deg)")->capture_default_str();
    s->add_option("--ref-amp", ref_amp, "Reference amplitude")->capture_default_str();
    s->add_option("--z", z, "Object-to-sensor distance (mm)")->capture_default_str();
    s->add_option("--freq", freq, "Frequency (THz) for --amplitude input")->capture_default_str();
    s->add_option("--pitch", pitch, "Pixel pitch (mm) for --amplitude input")->capture_default_str();
    s->add_option("--out", out, "Output hologram name")->capture_default_str();
  }

  void run(const Common& c) {
    ComplexField2D obj;
    fs::path input;
    if (!field.empty()) {
      input = field;
      obj = load_field(field);
    } else {
      input = amplitude;
      const Image2D a = Image2D::from_tensor(read_thzt(amplitude), pitch);
      obj = ComplexField2D(a.rows, a.cols, pitch, freq);
      for (std::size_t i = 0; i < a.size(); ++i) obj.data[i] = a.data[i];
    }
    const ComplexField2D at_sensor = z != 0 ? angular_spectrum_propagate(obj, z) : obj;
    const Image2D h = synthesize_hologram(at_sensor, tilt, ref_amp);
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    write_thzt(h.to_tensor(), dir / out);
    write_sidecar({{"kind", "hologram"},
                   {"pitch_mm", format_exact(obj.pitch_mm)},
                   {"freq_thz", format_exact(obj.freq_thz)},
                   {"tilt_deg", format_exact(tilt)},
                   {"ref_amp", format_exact(ref_amp)},
                   {"z_mm", format_exact(z)}},
                  sidecar_path(dir / out));
    export_pgm(h, fs::path(dir / out).replace_extension(".pgm"));
    write_run_manifest(dir, "holo sim",
                       {{"tilt_deg", format_exact(tilt)}, {"ref_amp", format_exact(ref_amp)}, {"z_mm", format_exact(z)}},
                       {input});
  }
};

struct HoloReconstruct {
  std::string hologram, out = "field.thzt";
  double tilt = 10, ref_amp = 1, z = 0, freq = 1;
  std::string window = "rect";

  void attach(CLI::App* s) {
    s->add_option("--hologram", hologram, "Hologram THZT (with sidecar)")->required();
    s->add_option("--tilt", tilt, "Reference tilt (deg)")->capture_default_str();
    s->add_option("--ref-amp", ref_amp, "Reference amplitude")->capture_default_str();
    s->add_option("--z", z, "Back-propagation distance (mm)")->capture_default_str();
    s->add_option("--freq", freq, "Frequency (THz)")->capture_default_str();
    s->add_option("--window", window, "rect or circle")->capture_default_str();
    s->add_option("--out", out, "Output field name")->capture_default_str();
  }

  void run(const Common& c) {
    const auto kv = read_sidecar(sidecar_path(hologram));
    if (!kv.count("pitch_mm")) throw DataError("hologram sidecar needs pitch_mm");
    const Image2D h = Image2D::from_tensor(read_thzt(hologram), std::stod(kv.at("pitch_mm")));
    OffaxisOptions opt;
    if (window == "circle")
      opt.window = OrderWindow::Circular;
    else if (window != "rect")
      throw std::invalid_argument("unknown window '" + window + "' (expected rect or circle)");
    const ComplexField2D u = reconstruct_offaxis(h, tilt, ref_amp, z, freq, opt);
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    save_field(u, dir / out);
    Image2D amp(u.rows, u.cols, u.pitch_mm), phase(u.rows, u.cols, u.pitch_mm);
    for (std::size_t i = 0; i < u.data.size(); ++i) {
      amp.data[i] = std::abs(u.data[i]);
      phase.data[i] = std::arg(u.data[i]);
    }
    export_pgm(amp, fs::path(dir / out).replace_extension(".amp.pgm"));
    export_pgm(phase, fs::path(dir / out).replace_extension(".phase.pgm"));
    write_run_manifest(dir, "holo reconstruct",
                       {{"tilt_deg", format_exact(tilt)}, {"ref_amp", format_exact(ref_amp)}, {"z_mm", format_exact(z)},
                        {"freq_thz", format_exact(freq)}, {"window", window}},
                       {hologram});
  }
};

std::vector<fs::path> feature_files(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".thzt" && e.path().filename().string().rfind("features_v", 0) == 0)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no features_v*.thzt files in " + dir);
  return files;
}

struct RestoreTrain {
  std::string features, truth, out = "model";
  int epochs = 200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  SarnetConfig net;

  void attach(CLI::App* s) {
    s->add_option("--features", features, "Directory of features_vNNN.thzt files")->required();
    s->add_option("--truth", truth, "Ground-truth projection stack (one image per feature file)")->required();
    s->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    s->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    s->add_option("--seed", seed, "Initialization seed")->capture_default_str();
    s->add_option("--base-channels", net.base_channels, "Channels at the finest scale")->capture_default_str();
    s->add_option("--subspace-dim", net.subspace_dim, "SAFM basis size")->capture_default_str();
    s->add_option("--out", out, "Model directory name")->capture_default_str();
  }

  void run(const Common& c) {
    const auto files = feature_files(features);
    const auto gt = load_stack(truth);
    if (gt.images.size() != files.size()) throw DataError("truth stack and feature files differ in count");
    std::vector<TrainSample> data;
    for (std::size_t i = 0; i < files.size(); ++i) data.push_back({load_features(files[i]), gt.images[i]});
    Sarnet model(net, seed);
    const auto r = train(model, data, {epochs, lr, seed, 4});
    const fs::path dir(c.run_dir);
    save_sarnet(model, dir / out);
    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < r.loss_history.size(); ++i) rows.push_back({std::to_string(i), {r.loss_history[i]}});
    export_csv(rows, dir / "train_loss.csv", {"epoch", "mse"});
    std::vector<fs::path> inputs(files.begin(), files.end());
    inputs.push_back(truth);
    write_run_manifest(dir, "restore train",
                       {{"epochs", std::to_string(epochs)}, {"lr", format_exact(lr)}, {"seed", std::to_string(seed)}},
                       inputs);
  }
};

struct RestoreInfer {
  std::string model, features, stack, out = "restored_stack.thzt";

  void attach(CLI::App* s) {
    s->add_option("--model", model, "Model directory")->required();
    s->add_option("--features", features, "Directory of features_vNNN.thzt files")->required();
    s->add_option("--angles-from", stack, "Projection stack whose angles label the output")->required();
    s->add_option("--out", out, "Output stack name")->capture_default_str();
  }

  void run(const Common& c) {
    Sarnet net = load_sarnet(model);
    const auto files = feature_files(features);
    const auto ref = load_stack(stack);
    if (ref.angles_deg.size() != files.size()) throw DataError("angle stack and feature files differ in count");
    ProjectionStack outs;
    for (std::size_t i = 0; i < files.size(); ++i) {
      outs.images.push_back(infer(net, load_features(files[i])));
      outs.angles_deg.push_back(ref.angles_deg[i]);
    }
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    save_stack(outs, dir / out);
    export_pgm(outs.images.front(), fs::path(dir / out).replace_extension(".first.pgm"));
    std::vector<fs::path> inputs(files.begin(), files.end());
    inputs.push_back(stack);
    inputs.push_back(fs::path(model) / "manifest.txt");
    write_run_manifest(dir, "restore infer", {}, inputs);
  }
};

struct MetricsCmd {
  std::string a, b, method = "method", object = "object", out = "metrics.csv", kind = "stack";

  void attach(CLI::App* s) {
    s->add_option("--a", a, "Estimate (stack, image or volume THZT)")->required();
    s->add_option("--b", b, "Reference of the same kind")->required();
    s->add_option("--kind", kind, "stack, image or volume")->capture_default_str();
    s->add_option("--method", method, "Method label")->capture_default_str();
    s->add_option("--object", object, "Object label")->capture_default_str();
    s->add_option("--out", out, "CSV name")->capture_default_str();
  }

  void run(const Common& c) {
    double p = NAN, s = NAN, m = NAN;
    if (kind == "volume") {
      m = mse_cross_sections(Volume3D::from_tensor(read_thzt(a), 1.0), Volume3D::from_tensor(read_thzt(b), 1.0));
    } else if (kind == "image") {
      const auto x = Image2D::from_tensor(read_thzt(a), 1.0), y = Image2D::from_tensor(read_thzt(b), 1.0);
      p = psnr(x, y, 1.0);
      s = ssim(x, y);
    } else if (kind == "stack") {
      const auto x = load_stack(a), y = load_stack(b);
      if (x.images.size() != y.images.size()) throw DataError("stacks differ in view count");
      p = s = 0;
      for (std::size_t i = 0; i < x.images.size(); ++i) {
        p += psnr(x.images[i], y.images[i], 1.0);
        s += ssim(x.images[i], y.images[i]);
      }
      p /= static_cast<double>(x.images.size());
      s /= static_cast<double>(x.images.size());
      const auto hx = half_turn(x), hy = half_turn(y);
      m = mse_cross_sections(reconstruct_volume(hx.images, hx.angles_deg), reconstruct_volume(hy.images, hy.angles_deg));
    } else {
      throw std::invalid_argument("unknown metrics kind '" + kind + "'");
    }
    auto cell = [](double v) { return std::isnan(v) ? std::string() : format_number(v); };
    const fs::path dir(c.run_dir);
    fs::create_directories(dir);
    std::ofstream f(dir / out, std::ios::binary);
    f << "method,object,psnr_db,ssim,mse_cross_section\r\n"
      << method << ',' << object << ',' << cell(p) << ',' << cell(s) << ',' << cell(m) << "\r\n";
    if (!f) throw DataError("cannot write " + (dir / out).string());
    std::cout << method << ',' << object << ',' << cell(p) << ',' << cell(s) << ',' << cell(m) << '\n';
    write_run_manifest(dir, "metrics", {{"kind", kind}, {"method", method}, {"object", object}}, {a, b});
  }
};

struct PipelineDemo {
  DemoOptions opt;

  void attach(CLI::App* s) {
    s->add_option("--seed", opt.seed, "Experiment seed")->required();
    s->add_option("--size", opt.size, "Phantom side in voxels (multiple of 16)")->capture_default_str();
    s->add_option("--views", opt.n_views, "Number of views")->capture_default_str();
    s->add_option("--step", opt.angle_step_deg, "Angular step (deg)")->capture_default_str();
    s->add_option("--train-every", opt.train_every, "Train on every k-th view")->capture_default_str();
    s->add_option("--epochs", opt.epochs, "Training epochs")->capture_default_str();
    s->add_option("--lr", opt.lr, "Adam learning rate")->capture_default_str();
    s->add_option("--noise-db", opt.noise_db, "Dynamic range (dB)")->capture_default_str();
    s->add_option("--base-channels", opt.net.base_channels, "Channels at the finest scale")->capture_default_str();
  }

  void run(const Common& c) {
    const auto r = run_demo(opt);
    write_demo_outputs(r, opt, c.run_dir);
    std::cout << demo_metrics_csv(r);
  }
};

// Options present in the config file but absent from the command line are
// appended as --key=value for the selected subcommand chain.
std::vector<std::string> with_config(CLI::App& app, std::vector<std::string> args) {
  std::string cfg;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
  }
  if (cfg.empty()) return args;
  KeyValues kv;
  try {
    kv = read_sidecar(cfg);
  } catch (const DataError&) {
    throw CLI::ValidationError("--config", "cannot read config file " + cfg);
  }

  std::set<std::string> known;
  CLI::App* cur = &app;
  auto add_known = [&](CLI::App* a) {
    for (const auto* o : a->get_options())
      for (const auto& n : o->get_lnames()) known.insert(n);
  };
  add_known(cur);
  for (const auto& a : args) {
    if (a.rfind("-", 0) == 0) continue;
    for (auto* s : cur->get_subcommands({}))
      if (s->get_name() == a) {
        cur = s;
        add_known(cur);
        break;
      }
  }
  for (const auto& [key0, value] : kv) {
    const std::string key = key0.rfind("--", 0) == 0 ? key0.substr(2) : key0;
    if (key == "config") continue;
    if (!known.count(key)) {
      std::cerr << "config: ignoring '" << key << "' (not an option of this command)\n";
      continue;
    }
    bool given = false;
    for (const auto& a : args) given = given || a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    if (!given) args.push_back("--" + key + "=" + value);
  }
  return args;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale THz computational imaging lab", "thzlab"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker cap (default: THZLAB_THREADS or all cores)");
  app.add_option("--run-dir", common.run_dir, "Directory receiving outputs and the run manifest")->capture_default_str();
  app.add_option("--config", common.config, "key = value file; command-line flags take precedence");

  PhantomGen phantom_gen;
  SimulateCt simulate_ct;
  ExtractFeatures extract_features;
  Reconstruct rec_fbp, rec_sart;
  VolumeCmd volume;
  CsSolve cs_solve;
  HoloSim holo_sim;
  HoloReconstruct holo_rec;
  RestoreTrain restore_train;
  RestoreInfer restore_infer;
  MetricsCmd metrics;
  PipelineDemo demo;

  auto* phantom = leaf(&app, "phantom", "Phantom construction");
  phantom->require_subcommand(1);
  auto* s_phantom_gen = leaf(phantom, "gen", "Build a voxel phantom");
  phantom_gen.attach(s_phantom_gen);

  auto* simulate = leaf(&app, "simulate", "Forward simulation");
  simulate->require_subcommand(1);
  auto* s_ct = leaf(simulate, "ct", "Simulate a THz-TDS CT scan of a phantom");
  simulate_ct.attach(s_ct);

  auto* extract = leaf(&app, "extract", "Feature extraction");
  extract->require_subcommand(1);
  auto* s_features = leaf(extract, "features", "Time-max and water-band features per view");
  extract_features.attach(s_features);

  auto* reconstruct = leaf(&app, "reconstruct", "2-D tomographic reconstruction");
  reconstruct->require_subcommand(1);
  auto* s_fbp = leaf(reconstruct, "fbp", "Filtered back-projection");
  rec_fbp.attach(s_fbp, false);
  auto* s_sart = leaf(reconstruct, "sart", "SART iterations");
  rec_sart.attach(s_sart, true);

  auto* s_volume = leaf(&app, "volume", "Per-row FBP volume from a projection stack");
  volume.attach(s_volume);

  auto* cs = leaf(&app, "cs", "Compressive sensing");
  cs->require_subcommand(1);
  auto* s_cs = leaf(cs, "solve", "Measure an image with patterns and recover it");
  cs_solve.attach(s_cs);

  auto* holo = leaf(&app, "holo", "Off-axis holography");
  holo->require_subcommand(1);
  auto* s_hsim = leaf(holo, "sim", "Synthesize a hologram");
  holo_sim.attach(s_hsim);
  auto* s_hrec = leaf(holo, "reconstruct", "Reconstruct the object field");
  holo_rec.attach(s_hrec);

  auto* restore = leaf(&app, "restore", "SARNet restoration");
  restore->require_subcommand(1);
  auto* s_train = leaf(restore, "train", "Train on feature stacks and silhouettes");
  restore_train.attach(s_train);
  auto* s_infer = leaf(restore, "infer", "Restore projections with a trained model");
  restore_infer.attach(s_infer);

  auto* s_metrics = leaf(&app, "metrics", "PSNR, SSIM and cross-section MSE table");
  metrics.attach(s_metrics);

  auto* pipeline = leaf(&app, "pipeline", "End-to-end experiments");
  pipeline->require_subcommand(1);
  auto* s_demo = leaf(pipeline, "demo", "phantom -> scan -> features -> SARNet -> volumes -> metrics");
  demo.attach(s_demo);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = with_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    CLI::App* sub = &app;
    while (!sub->get_subcommands().empty()) sub = sub->get_subcommands().front();
    std::cerr << sub->help();
    return kExitUsage;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);
    if (s_phantom_gen->parsed()) phantom_gen.run(common);
    else if (s_ct->parsed()) simulate_ct.run(common);
    else if (s_features->parsed()) extract_features.run(common);
    else if (s_fbp->parsed()) rec_fbp.run(common, false);
    else if (s_sart->parsed()) rec_sart.run(common, true);
    else if (s_volume->parsed()) volume.run(common);
    else if (s_cs->parsed()) cs_solve.run(common);
    else if (s_hsim->parsed()) holo_sim.run(common);
    else if (s_hrec->parsed()) holo_rec.run(common);
    else if (s_train->parsed()) restore_train.run(common);
    else if (s_infer->parsed()) restore_infer.run(common);
    else if (s_metrics->parsed()) metrics.run(common);
    else if (s_demo->parsed()) demo.run(common);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
