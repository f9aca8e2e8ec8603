#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mct/baselines.hpp"
#include "mct/forward.hpp"
#include "mct/geometry.hpp"
#include "mct/recon.hpp"

namespace mct {

struct SweepConfig {
  std::vector<double> alphas = {1.0, 0.98, 0.96, 0.94, 0.92, 0.90};
  std::vector<int> factors = {1, 2, 4};  // decimation of rays and of rotations
  int n_phantoms = 20;
  std::uint64_t first_seed = 1000;
};

struct DatasetConfig {
  int n_phantoms = 10;
  std::uint64_t first_seed = 0;
};

// Everything a command needs, read from a sectioned key = value file:
//
//   [geometry]   n_rot n_disp disp_step aperture_width subray_halfwidth
//                antenna_distance f_min f_max n_freq grid_size pixel_size
//   [scan]       alpha snr_db seed threshold object_height receiver_aperture
//                receiver_samples step_fraction extent_factor exterior
//   [phantom]    preset (forearm | two_disc | solid_disc) or file, radius
//   [recon]      mu_rel max_iterations tolerance weighted weight_floor
//                magnitude_floor frequencies
//   [calibration] size seed energy_retained noise_snr_db
//   [baseline]   method iterations damping inner_iterations mu_rel backtracking
//   [sweep]      alphas factors n_phantoms first_seed
//   [dataset]    n_phantoms first_seed
struct RunConfig {
  std::string source = "<defaults>";
  ScanGeometry geometry;
  ScanOptions scan;
  std::string phantom_preset = "two_disc";
  std::string phantom_file;
  double phantom_radius = 0.05;
  ReconConfig recon;
  std::vector<int> freq_indices;  // empty: all frequencies
  std::uint64_t calibration_seed = 7;
  CalibrationOptions calibration;
  BaselineConfig baseline;
  SweepConfig sweep;
  DatasetConfig dataset;

  // Applies to every invariant; throws ConfigError naming the field.
  void validate() const;
};

RunConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
RunConfig load_config(const std::string& path);

// "0,5,10" or "5.0e9,5.5e9" style lists.
std::vector<double> parse_number_list(const std::string& text, const std::string& field);

}  // namespace mct
