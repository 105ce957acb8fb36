#include "thzlab/pipeline.hpp"

#include "thzlab/metrics.hpp"
#include "thzlab/parallel.hpp"
#include "thzlab/version.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace thzlab {

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto b : bytes) h = (h ^ b) * 0x100000001b3ull;
  return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void save_stack(const ProjectionStack& s, const std::filesystem::path& path) {
  if (s.images.empty() || s.images.size() != s.angles_deg.size()) throw std::invalid_argument("save_stack: need one angle per image");
  const auto& first = s.images.front();
  std::vector<float> v;
  v.reserve(s.images.size() * first.size());
  for (const auto& img : s.images) {
    if (img.rows != first.rows || img.cols != first.cols) throw std::invalid_argument("save_stack: images differ in shape");
    v.insert(v.end(), img.data.begin(), img.data.end());
  }
  write_thzt(Tensor({static_cast<std::uint32_t>(s.images.size()), static_cast<std::uint32_t>(first.rows),
                     static_cast<std::uint32_t>(first.cols)},
                    std::move(v)),
             path);
  std::ostringstream a;
  for (std::size_t i = 0; i < s.angles_deg.size(); ++i) a << (i ? "," : "") << format_exact(s.angles_deg[i]);
  write_sidecar({{"kind", "projection_stack"}, {"pitch_mm", format_exact(first.pitch_mm)}, {"angles_deg", a.str()}},
                sidecar_path(path));
}

ProjectionStack half_turn(const ProjectionStack& s) {
  ProjectionStack out;
  for (std::size_t v = 0; v < s.images.size(); ++v)
    if (s.angles_deg[v] < 180) {
      out.images.push_back(s.images[v]);
      out.angles_deg.push_back(s.angles_deg[v]);
    }
  return out;
}

ProjectionStack load_stack(const std::filesystem::path& path) {
  const auto t = read_thzt(path);
  if (t.dtype() != DType::Real32 || t.ndim() != 3) throw DataError("projection stack must be a 3-D real32 tensor");
  auto kv = read_sidecar(sidecar_path(path));
  if (!kv.count("angles_deg") || !kv.count("pitch_mm")) throw DataError("stack sidecar needs angles_deg and pitch_mm");
  ProjectionStack s;
  try {
    std::stringstream ss(kv["angles_deg"]);
    std::string item;
    while (std::getline(ss, item, ',')) s.angles_deg.push_back(std::stod(item));
    const double pitch = std::stod(kv["pitch_mm"]);
    const int rows = static_cast<int>(t.shape()[1]), cols = static_cast<int>(t.shape()[2]);
    const std::size_t plane = static_cast<std::size_t>(rows) * cols;
    for (std::uint32_t v = 0; v < t.shape()[0]; ++v) {
      Image2D img(rows, cols, pitch);
      std::copy_n(t.real().begin() + static_cast<std::ptrdiff_t>(v * plane), plane, img.data.begin());
      s.images.push_back(std::move(img));
    }
  } catch (const std::logic_error&) {
    throw DataError("malformed projection stack sidecar");
  }
  if (s.angles_deg.size() != s.images.size()) throw DataError("stack angle count does not match the tensor");
  return s;
}

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, KeyValues settings,
                        const std::vector<std::filesystem::path>& inputs) {
  std::filesystem::create_directories(dir);
  settings["command"] = command;
  settings["version"] = kVersion;
  for (const auto& in : inputs) settings["input_hash." + in.filename().string()] = hex64(fnv1a_file(in));
  std::string name = command;
  std::replace(name.begin(), name.end(), ' ', '_');
  write_sidecar(settings, dir / ("manifest." + name + ".txt"));
}

Phantom random_object(int size, double pitch, std::uint64_t seed) {
  if (size < 16) throw std::invalid_argument("random_object: size must be >= 16");
  Rng rng(stream_seed(seed, 0x6f626a));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mid = (size - 1) / 2.0;
  PrimitiveParams base;
  base.grid_shape = {size, size, size};
  base.pitch_mm = pitch;
  auto jitter = [&](double spread) { return mid + (u(rng) - 0.5) * spread * size; };

  PrimitiveParams sphere = base;
  sphere.radius = size * (0.12 + 0.06 * u(rng));
  sphere.center = {jitter(0.3), jitter(0.3), jitter(0.3)};
  PrimitiveParams box = base;
  box.half_extent = {size * (0.1 + 0.1 * u(rng)), size * (0.06 + 0.06 * u(rng)), size * (0.06 + 0.06 * u(rng))};
  box.center = {jitter(0.2), jitter(0.3), jitter(0.3)};
  PrimitiveParams cyl = base;
  cyl.radius = size * (0.06 + 0.04 * u(rng));
  cyl.height = size * (0.4 + 0.3 * u(rng));
  cyl.center = {mid, jitter(0.35), jitter(0.35)};

  Phantom p = make_primitive(PrimitiveKind::Sphere, sphere);
  p = csg_union(p, make_primitive(PrimitiveKind::Box, box));
  return csg_union(p, make_primitive(PrimitiveKind::Cylinder, cyl));
}

DemoViews simulate_views(const Phantom& p, const DemoOptions& opt) {
  DemoViews v;
  v.scan.n_views = opt.n_views;
  v.scan.angle_step_deg = opt.angle_step_deg;
  v.scan.angular_range_deg = opt.n_views * opt.angle_step_deg;
  v.scan.x_step_mm = v.scan.z_step_mm = p.pitch_mm();
  v.scan.x_range_mm = p.grid.nx * p.pitch_mm();
  v.scan.noise_dynamic_range_db = opt.noise_db;
  v.scan.rng_seed = opt.seed;
  v.scan.validate();

  const PixelModel model(v.scan);
  const Spectrum reference = fft_trace(model.air_trace);
  const auto bands = select_water_bands(v.scan.water);
  const ScanGeometry g = v.scan.geometry(p);
  for (int view = 0; view < opt.n_views; ++view) {
    const double angle = v.scan.angle_deg(view);
    v.angles_deg.push_back(angle);
    const auto traces = simulate_view(p, v.scan, view);
    const ViewTraces vt{g.rows, g.cols, v.scan.pulse.n_samples, v.scan.pulse.dt_ps, p.pitch_mm(), traces};
    v.features.push_back(feature_stack(vt, bands, reference));
    Image2D raw = v.features.back().channel_image(0);
    for (auto& x : raw.data) x = 1.0 - x;
    v.raw.push_back(std::move(raw));
    v.ground_truth.push_back(ground_truth_projection(p, g, angle));
  }
  return v;
}

namespace {

MethodScores score(const std::string& name, const std::vector<Image2D>& proj, const std::vector<Image2D>& truth,
                   const Volume3D& vol, const Volume3D& ref) {
  MethodScores s{name, 0, 0, mse_cross_sections(vol, ref)};
  for (std::size_t i = 0; i < proj.size(); ++i) {
    s.psnr_db += psnr(proj[i], truth[i], 1.0);
    s.ssim += ssim(proj[i], truth[i]);
  }
  s.psnr_db /= static_cast<double>(proj.size());
  s.ssim /= static_cast<double>(proj.size());
  return s;
}

} // namespace

DemoResult run_demo(const DemoOptions& opt) {
  if (opt.size % 16 != 0) throw std::invalid_argument("pipeline demo: size must be a multiple of 16");
  if (opt.train_every < 1) throw std::invalid_argument("pipeline demo: train_every must be >= 1");
  DemoResult r;
  r.phantom = random_object(opt.size, opt.pitch_mm, opt.seed);
  r.views = simulate_views(r.phantom, opt);

  std::vector<TrainSample> data;
  for (int v = 0; v < opt.n_views; v += opt.train_every)
    data.push_back({r.views.features[static_cast<std::size_t>(v)], r.views.ground_truth[static_cast<std::size_t>(v)]});
  Sarnet net(opt.net, stream_seed(opt.seed, 0x6e6574));
  r.loss_history = train(net, data, {opt.epochs, opt.lr, opt.seed, 4}).loss_history;
  for (const auto& fs : r.views.features) r.restored.push_back(infer(net, fs));

  const auto& angles = r.views.angles_deg;
  r.reference = reconstruct_volume(r.views.ground_truth, angles);
  r.raw_volume = reconstruct_volume(r.views.raw, angles);
  r.restored_volume = reconstruct_volume(r.restored, angles);
  r.scores.push_back(score("time-max", r.views.raw, r.views.ground_truth, r.raw_volume, r.reference));
  r.scores.push_back(score("sarnet", r.restored, r.views.ground_truth, r.restored_volume, r.reference));
  return r;
}

std::string demo_metrics_csv(const DemoResult& r, const std::string& object) {
  std::ostringstream os;
  os << "method,object,psnr_db,ssim,mse_cross_section\r\n";
  for (const auto& s : r.scores)
    os << s.method << ',' << object << ',' << format_number(s.psnr_db) << ',' << format_number(s.ssim) << ','
       << format_number(s.mse_cross_section) << "\r\n";
  return os.str();
}

void write_demo_outputs(const DemoResult& r, const DemoOptions& opt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_phantom(r.phantom, dir / "phantom.thzt");
  write_thzt(r.reference.to_tensor(), dir / "volume_reference.thzt");
  write_thzt(r.raw_volume.to_tensor(), dir / "volume_timemax.thzt");
  write_thzt(r.restored_volume.to_tensor(), dir / "volume_sarnet.thzt");
  export_pgm(r.views.raw.front(), dir / "view000_timemax.pgm");
  export_pgm(r.restored.front(), dir / "view000_sarnet.pgm");
  export_pgm(r.views.ground_truth.front(), dir / "view000_truth.pgm");
  export_pgm(r.restored_volume.slice(r.restored_volume.nz / 2), dir / "slice_mid_sarnet.pgm");
  {
    std::ofstream out(dir / "metrics.csv", std::ios::binary);
    out << demo_metrics_csv(r);
    if (!out) throw DataError("cannot write metrics.csv");
  }
  std::vector<CsvRow> losses;
  for (std::size_t i = 0; i < r.loss_history.size(); ++i) losses.push_back({std::to_string(i), {r.loss_history[i]}});
  export_csv(losses, dir / "loss.csv", {"epoch", "mse"});

  KeyValues m{{"seed", std::to_string(opt.seed)},
              {"size", std::to_string(opt.size)},
              {"n_views", std::to_string(opt.n_views)},
              {"angle_step_deg", format_exact(opt.angle_step_deg)},
              {"train_every", std::to_string(opt.train_every)},
              {"epochs", std::to_string(opt.epochs)},
              {"lr", format_exact(opt.lr)},
              {"noise_db", format_exact(opt.noise_db)},
              {"threads", std::to_string(thread_count())}};
  for (const auto& [k, v] : opt.net.to_kv()) m["net_" + k] = v;
  for (const char* f : {"phantom.thzt", "volume_sarnet.thzt", "metrics.csv"})
    m[std::string("output_hash.") + f] = hex64(fnv1a_file(dir / f));
  write_run_manifest(dir, "pipeline demo", m, {});
}

} // namespace thzlab
