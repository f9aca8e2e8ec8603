#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "mct/image.hpp"

namespace mct {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

// Parallel-beam scan. At rotation theta the Tx->Rx axis points along
// (cos theta, sin theta) and the displacement axis along (-sin theta, cos theta),
// so a line at displacement r satisfies -x sin theta + y cos theta = r.
struct ScanGeometry {
  int n_rot = 72;
  double rot_step = 5.0 * kPi / 180.0;
  int n_disp = 120;
  double disp_step = 2.5e-3;
  double disp_offset = 0.0;  // shift of the displacement axis center, meters
  double aperture_width = 0.06;     // z, meters
  double subray_halfwidth = 1.25e-3;  // delta, meters
  std::vector<double> frequencies = default_frequencies();
  double antenna_distance = 0.25;  // z0, meters
  GridSpec grid;
  // Set by decimated(): sweeps deliberately probe under-determined scans.
  bool allow_underdetermined = false;

  static std::vector<double> default_frequencies();

  // N_z: number of sub-rays per physical ray.
  int subrays_per_ray() const;
  double rotation(int t) const { return t * rot_step; }
  double displacement(int i) const { return (i - 0.5 * (n_disp - 1)) * disp_step + disp_offset; }
  std::size_t n_rays() const { return static_cast<std::size_t>(n_disp) * n_rot; }

  // Throws InvalidArgument when an invariant is violated. The solvability
  // check N_x*N_y <= N_r*N_theta is skipped when allow_underdetermined is set.
  void validate() const;

  // Stable 64-bit FNV-1a hash of the canonical text form; hex encoded.
  std::string hash() const;
  std::string canonical() const;

  // Keep every factor-th displacement (step grows by factor) or rotation.
  ScanGeometry decimated(int disp_factor, int rot_factor) const;
};

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct Line {
  Vec2 point;
  Vec2 direction;
};

// Sparse row: (flat pixel index, intersection length in pixel-length units).
using PixelRow = std::vector<std::pair<int, double>>;

// Siddon traversal of an infinite line through the grid. Entries appear in
// traversal order. Throws InvalidArgument for a zero direction.
PixelRow ray_pixel_lengths(const Line& line, const GridSpec& grid);

// Length (pixel units) of the line inside the grid bounding box; 0 on a miss.
double chord_length(const Line& line, const GridSpec& grid);

// Line at displacement offset u for rotation angle theta.
Line ray_line(double theta, double offset);

struct SparseSystem {
  GridSpec grid;
  int n_rot = 0;
  int n_disp = 0;
  int n_subrays = 0;  // N_z
  int n_virtual = 0;  // N_vr, virtual rays per rotation
  // Sub-ray projector (N_vr*N_rot x N_x*N_y), rows ordered rotation-major.
  SparseMatrix subray_projector;
  // Ray aggregation (N_disp*N_rot x N_vr*N_rot), entries 1/N_z.
  SparseMatrix ray_aggregation;
  // Virtual ray displacement offsets, shared by all rotations.
  std::vector<double> virtual_offsets;
  std::vector<double> rotations;
  std::string geometry_hash;

  std::size_t ray_row(int disp, int rot) const {
    return static_cast<std::size_t>(rot) * n_disp + disp;
  }
  std::size_t virtual_row(int v, int rot) const {
    return static_cast<std::size_t>(rot) * n_virtual + v;
  }
};

// Throws InvalidArgument before allocating anything when geom is invalid.
SparseSystem build_system(const ScanGeometry& geom);

// Whole-ray projector R_x * R_r (aperture-averaged Siddon lengths).
SparseMatrix whole_ray_projector(const SparseSystem& sys);

}  // namespace mct
