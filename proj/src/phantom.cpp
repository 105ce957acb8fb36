#include "thzlab/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace thzlab {

namespace {

struct GlyphEntry {
  char c;
  std::array<std::uint8_t, 7> rows;
};

constexpr GlyphEntry kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
};

void require_inside(double lo, double hi, int n, const char* axis) {
  if (lo < -0.5 || hi > n - 0.5)
    throw std::out_of_range(std::string("primitive exceeds grid along ") + axis);
}

int start_index(double center, int extent) {
  return static_cast<int>(std::lround(center - (extent - 1) / 2.0));
}

} // namespace

std::array<std::uint8_t, 7> glyph_bitmap(char c) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont)
    if (g.c == up) return g.rows;
  return {0x1F, 0x1F, 0x1F, 0x1F, 0x1F, 0x1F, 0x1F};
}

PrimitiveKind parse_primitive_kind(const std::string& name) {
  if (name == "sphere") return PrimitiveKind::Sphere;
  if (name == "box") return PrimitiveKind::Box;
  if (name == "cylinder") return PrimitiveKind::Cylinder;
  if (name == "glyph" || name == "extruded_glyph") return PrimitiveKind::ExtrudedGlyph;
  throw std::invalid_argument("unknown primitive kind: " + name);
}

Phantom make_primitive(PrimitiveKind kind, const PrimitiveParams& prm, MaterialSpec material) {
  material.validate();
  const auto [nz, ny, nx] = prm.grid_shape;
  Phantom p{Volume3D(nz, ny, nx, prm.pitch_mm), std::move(material)};
  const auto [cz, cy, cx] = prm.center;

  switch (kind) {
  case PrimitiveKind::Sphere: {
    const double r = prm.radius;
    if (r < 0) throw std::invalid_argument("sphere radius must be >= 0");
    if (r == 0) break;
    require_inside(cz - r, cz + r, nz, "z");
    require_inside(cy - r, cy + r, ny, "y");
    require_inside(cx - r, cx + r, nx, "x");
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double dz = z - cz, dy = y - cy, dx = x - cx;
          if (dz * dz + dy * dy + dx * dx < r * r) p.grid(z, y, x) = 1.0;
        }
    break;
  }
  case PrimitiveKind::Box: {
    const auto [hz, hy, hx] = prm.half_extent;
    if (hz < 0 || hy < 0 || hx < 0) throw std::invalid_argument("box half extents must be >= 0");
    require_inside(cz - hz, cz + hz, nz, "z");
    require_inside(cy - hy, cy + hy, ny, "y");
    require_inside(cx - hx, cx + hx, nx, "x");
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
          if (std::abs(z - cz) < hz && std::abs(y - cy) < hy && std::abs(x - cx) < hx) p.grid(z, y, x) = 1.0;
    break;
  }
  case PrimitiveKind::Cylinder: {
    const double r = prm.radius, hh = prm.height / 2;
    if (r < 0 || hh < 0) throw std::invalid_argument("cylinder radius and height must be >= 0");
    require_inside(cz - hh, cz + hh, nz, "z");
    require_inside(cy - r, cy + r, ny, "y");
    require_inside(cx - r, cx + r, nx, "x");
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double dy = y - cy, dx = x - cx;
          if (std::abs(z - cz) < hh && dy * dy + dx * dx < r * r) p.grid(z, y, x) = 1.0;
        }
    break;
  }
  case PrimitiveKind::ExtrudedGlyph: {
    const int s = prm.glyph_scale;
    const int len = static_cast<int>(prm.text.size());
    if (s < 1 || prm.glyph_depth < 1 || len == 0) throw std::invalid_argument("glyph needs text, scale >= 1 and depth >= 1");
    const int width = (6 * len - 1) * s, height = 7 * s;
    const int x0 = start_index(cx, width), z0 = start_index(cz, height), y0 = start_index(cy, prm.glyph_depth);
    if (x0 < 0 || x0 + width > nx) throw std::out_of_range("glyph exceeds grid along x");
    if (z0 < 0 || z0 + height > nz) throw std::out_of_range("glyph exceeds grid along z");
    if (y0 < 0 || y0 + prm.glyph_depth > ny) throw std::out_of_range("glyph exceeds grid along y");
    for (int ch = 0; ch < len; ++ch) {
      const auto rows = glyph_bitmap(prm.text[static_cast<std::size_t>(ch)]);
      for (int fr = 0; fr < 7; ++fr)
        for (int fc = 0; fc < 5; ++fc) {
          if (!(rows[static_cast<std::size_t>(fr)] & (0x10 >> fc))) continue;
          for (int dz = 0; dz < s; ++dz)
            for (int dx = 0; dx < s; ++dx)
              for (int y = y0; y < y0 + prm.glyph_depth; ++y)
                p.grid(z0 + fr * s + dz, y, x0 + (ch * 6 + fc) * s + dx) = 1.0;
        }
    }
    break;
  }
  }
  return p;
}

Phantom csg_union(const Phantom& a, const Phantom& b) {
  if (a.grid.nz != b.grid.nz || a.grid.ny != b.grid.ny || a.grid.nx != b.grid.nx)
    throw std::invalid_argument("csg_union: grid shape mismatch");
  if (a.material.name != b.material.name) throw std::invalid_argument("csg_union: material mismatch");
  Phantom out = a;
  for (std::size_t i = 0; i < out.grid.size(); ++i) out.grid.data[i] = std::max(a.grid.data[i], b.grid.data[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Rays

ScanGeometry ScanGeometry::matching(const Phantom& p) {
  return {p.grid.nz, p.grid.nx, p.pitch_mm(), p.pitch_mm()};
}

RayProfile ray_profile(const Phantom& p, const ScanGeometry& g, double angle_deg, int row, int col) {
  if (row < 0 || row >= g.rows || col < 0 || col >= g.cols) throw std::out_of_range("ray_profile: pixel outside scan grid");
  const auto& v = p.grid;
  const double pitch = v.pitch_mm;
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double s = (col - (g.cols - 1) / 2.0) * g.col_pitch_mm;

  // Row centers map onto voxel slices by height.
  const double zmm = (row + 0.5) * g.row_pitch_mm;
  const int iz = static_cast<int>(std::floor(zmm / pitch));
  RayProfile out;
  if (iz < 0 || iz >= v.nz) return out;

  const double step = pitch / 2;
  const double half_diag = 0.5 * pitch * std::hypot(v.nx, v.ny) + pitch;
  const int n_steps = 2 * static_cast<int>(std::ceil(half_diag / step));
  const double cx = (v.nx - 1) / 2.0, cy = (v.ny - 1) / 2.0;
  bool inside = false;
  for (int k = 0; k < n_steps; ++k) {
    const double t = (k - (n_steps - 1) / 2.0) * step;
    const double x = s * ct - t * st, y = s * st + t * ct;
    const int ix = static_cast<int>(std::lround(x / pitch + cx));
    const int iy = static_cast<int>(std::lround(y / pitch + cy));
    double occ = 0;
    if (ix >= 0 && ix < v.nx && iy >= 0 && iy < v.ny) occ = v(iz, iy, ix);
    out.length_mm += occ * step;
    const bool now = occ >= 0.5;
    if (now && !inside) ++out.entries;
    inside = now;
  }
  if (out.length_mm > 0 && out.entries == 0) out.entries = 1;
  return out;
}

double path_length(const Phantom& p, const ScanGeometry& g, double angle_deg, int row, int col) {
  return ray_profile(p, g, angle_deg, row, col).length_mm;
}

Image2D ground_truth_projection(const Phantom& p, const ScanGeometry& g, double angle_deg) {
  Image2D img(g.rows, g.cols, g.col_pitch_mm);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) img(r, c) = ray_profile(p, g, angle_deg, r, c).length_mm > 0 ? 1.0 : 0.0;
  return img;
}

Image2D ground_truth_projection(const Phantom& p, double angle_deg) {
  return ground_truth_projection(p, ScanGeometry::matching(p), angle_deg);
}

// ---------------------------------------------------------------------------
// Persistence

void save_phantom(const Phantom& p, const std::filesystem::path& path) {
  write_thzt(p.grid.to_tensor(), path);
  KeyValues kv{{"kind", "phantom"}, {"pitch_mm", format_exact(p.pitch_mm())}, {"material", p.material.name}};
  if (p.material.freq_thz.size() == 1) {
    kv["material_n"] = format_exact(p.material.n[0]);
    kv["material_alpha"] = format_exact(p.material.alpha[0]);
  }
  write_sidecar(kv, sidecar_path(path));
}

Phantom load_phantom(const std::filesystem::path& path) {
  auto t = read_thzt(path);
  auto kv = read_sidecar(sidecar_path(path));
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("phantom sidecar missing key: " + k);
    return it->second;
  };
  Phantom p{Volume3D::from_tensor(t, std::stod(get("pitch_mm"))), hips()};
  const auto& name = get("material");
  if (kv.count("material_n") && kv.count("material_alpha"))
    p.material = constant_material(name, std::stod(kv["material_n"]), std::stod(kv["material_alpha"]));
  else if (name != "HIPS")
    throw DataError("phantom material '" + name + "' has no table in the sidecar");
  for (double o : p.grid.data)
    if (!(o >= 0.0 && o <= 1.0)) throw DataError("phantom occupancy outside [0, 1]");
  return p;
}

} // namespace thzlab
