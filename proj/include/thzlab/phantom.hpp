#pragma once

#include "thzlab/physics.hpp"
#include "thzlab/tensor.hpp"

#include <array>
#include <filesystem>
#include <string>

namespace thzlab {

/// Voxel occupancy in [0, 1] on a (z, y, x) grid. The rotation axis is
/// vertical (z) through the grid center.
struct Phantom {
  Volume3D grid;
  MaterialSpec material = hips();

  double pitch_mm() const { return grid.pitch_mm; }
};

enum class PrimitiveKind { Sphere, Box, Cylinder, ExtrudedGlyph };

/// Primitive parameters in voxel units. Centers are continuous voxel
/// coordinates, so (n - 1) / 2 is the middle of an axis of length n.
struct PrimitiveParams {
  std::array<int, 3> grid_shape{64, 64, 64}; ///< nz, ny, nx
  double pitch_mm = 0.25;
  std::array<double, 3> center{31.5, 31.5, 31.5}; ///< z, y, x
  double radius = 10;                             ///< sphere / cylinder
  std::array<double, 3> half_extent{8, 8, 8};     ///< box, z/y/x
  double height = 32;                             ///< cylinder, along z
  std::string text = "Y";                         ///< glyph
  int glyph_scale = 2;                            ///< voxels per font cell
  int glyph_depth = 6;                            ///< extrusion along y
};

/// Binary primitive (1 where the voxel center is inside, 0 elsewhere).
/// Throws std::out_of_range when the primitive does not fit in the grid.
Phantom make_primitive(PrimitiveKind kind, const PrimitiveParams& params, MaterialSpec material = hips());
PrimitiveKind parse_primitive_kind(const std::string& name);

/// 5x7 bitmap (row-major, top row first, bit 4 = leftmost column). Unknown
/// characters render as a filled block.
std::array<std::uint8_t, 7> glyph_bitmap(char c);

/// Voxel-wise max.
Phantom csg_union(const Phantom& a, const Phantom& b);

/// Detector grid of one view: rows along z, columns along the horizontal
/// axis perpendicular to the beam.
struct ScanGeometry {
  int rows = 0;
  int cols = 0;
  double row_pitch_mm = 0.25;
  double col_pitch_mm = 0.25;

  static ScanGeometry matching(const Phantom& p);
};

struct RayProfile {
  double length_mm = 0; ///< occupancy-weighted material path
  int entries = 0;      ///< air-to-material transitions along the ray
};

/// Ray-march (step pitch/2, nearest-voxel occupancy) along the parallel ray at
/// `angle_deg` through detector pixel (row, col). Direction is
/// (-sin t, cos t) in the (x, y) plane; the column axis is (cos t, sin t).
RayProfile ray_profile(const Phantom& p, const ScanGeometry& g, double angle_deg, int row, int col);
double path_length(const Phantom& p, const ScanGeometry& g, double angle_deg, int row, int col);

/// Binary silhouette: 1 where the ray meets any occupied voxel.
Image2D ground_truth_projection(const Phantom& p, const ScanGeometry& g, double angle_deg);
Image2D ground_truth_projection(const Phantom& p, double angle_deg);

void save_phantom(const Phantom& p, const std::filesystem::path& path);
Phantom load_phantom(const std::filesystem::path& path);

} // namespace thzlab
