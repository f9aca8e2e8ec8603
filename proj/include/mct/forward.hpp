#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mct/geometry.hpp"
#include "mct/image.hpp"

namespace mct {

// Complex received signal P(r, theta, f), stored row-major over the axes
// ("displacement", "rotation", "frequency").
struct MeasurementCube {
  int n_disp = 0;
  int n_rot = 0;
  std::vector<double> frequencies;
  std::vector<cdouble> data;
  double alpha = 1.0;
  double snr_db = std::numeric_limits<double>::infinity();  // inf: noiseless
  std::uint64_t seed = 0;
  std::string geometry_hash;

  MeasurementCube() = default;
  MeasurementCube(int n_disp, int n_rot, std::vector<double> freqs);

  int n_freq() const { return static_cast<int>(frequencies.size()); }
  std::size_t index(int disp, int rot, int freq) const {
    return (static_cast<std::size_t>(disp) * n_rot + rot) * frequencies.size() + freq;
  }
  cdouble& at(int disp, int rot, int freq) { return data[index(disp, rot, freq)]; }
  cdouble at(int disp, int rot, int freq) const { return data[index(disp, rot, freq)]; }

  // One frequency as a vector in SparseSystem ray-row order (rotation-major).
  Eigen::VectorXcd slice(int freq) const;
  void set_slice(int freq, const Eigen::VectorXcd& rays);

  // Keep every disp_factor-th displacement and rot_factor-th rotation.
  MeasurementCube decimated(int disp_factor, int rot_factor) const;
};

// S with the phase channel scaled to frequency f: im * f / f_ref.
ComplexImage at_frequency(const ComplexImage& s, double f);

// R_x * exp(-R_r * vec(S)), in ray-row order.
Eigen::VectorXcd forward_ray(const ComplexImage& s, const SparseSystem& sys);

// exp(-R_r * vec(S)): the sub-ray signals C.
Eigen::VectorXcd subray_signals(const ComplexImage& s, const SparseSystem& sys);

// ---- Diffraction -----------------------------------------------------------

struct Interval {
  double lo = 0.0, hi = 0.0;
};

// Shadow of the object on the displacement axis at one rotation.
struct Occlusion {
  std::vector<Interval> intervals;  // merged, sorted, meters
  double height = 0.10;             // vertical cross-section, meters
  std::vector<double> profile_offsets;  // sample positions, meters
  std::vector<double> profile_widths;   // chord through the object, meters

  bool empty() const { return intervals.empty(); }
  double extent() const {
    return empty() ? 0.0 : intervals.back().hi - intervals.front().lo;
  }
  // Thickness of the object along the ray at displacement r (nearest sample).
  double width_at(double r) const;
};

// Pixels with |S| > threshold, projected onto the displacement axis at theta.
Occlusion silhouette(const ComplexImage& s, double theta, double threshold, double height = 0.10);

struct Rect {
  double x0, x1, y0, y1;
};
struct Disc {
  double cx, cy, radius;
};

// Blocked set on the curtain plane. Shapes are assumed disjoint.
struct Occluder {
  std::vector<Rect> rects;
  std::vector<Disc> discs;

  bool empty() const { return rects.empty() && discs.empty(); }
  bool contains(double x, double y) const;
  // Largest |x| and |y| reached by any shape.
  double reach_x() const;
  double reach_y() const;
  double extent() const;
};

// Occluder seen by the antenna pair at displacement r: the object's shadow
// intervals shifted into antenna coordinates, times the vertical cross-section.
Occluder occluder_for_ray(const Occlusion& occ, double r);

// Open: the plane continues unobstructed beyond its sampled extent (the exact
// free-space contribution of the unblocked plane is used). Closed: nothing
// outside the sampled plane radiates.
enum class Exterior { kOpen, kClosed };

struct CurtainOptions {
  double step_fraction = 1.0 / 8.0;  // sampling step as a fraction of lambda
  double extent_factor = 3.0;        // plane half-extent / occluder reach
  Exterior exterior = Exterior::kOpen;
};

// Field on the curtain plane z = 0 radiated by a point source at (0, 0, -z0);
// zero on the blocked set.
struct CurtainField {
  double wavelength = 0.0;
  double z0 = 0.0;
  double e0 = 1.0;
  double step = 0.0;
  double half_x = 0.0, half_y = 0.0;
  Occluder blocked;
  Exterior exterior = Exterior::kOpen;

  cdouble incident(double x, double y) const;
  cdouble value(double x, double y) const;
  // Midpoint samples of the plane, row-major (ny rows of nx).
  std::vector<cdouble> sample_plane(int& nx, int& ny) const;
};

// Throws InvalidArgument when the sampling step exceeds lambda / 2.
CurtainField curtain_field(const Occluder& blocked, double wavelength, double z0, double e0,
                           const CurtainOptions& opt = {});

// Rayleigh-Sommerfeld (first kind) quadrature of the curtain to the receiver
// plane point (x, y, z0). Throws NumericalError when the plane is too small
// relative to the occluder.
cdouble receiver_field(const CurtainField& cf, double x, double y);

// Free-space field at (x, y, z0) from the source at (0, 0, -z0).
cdouble free_space_field(double x, double y, double z0, double wavelength, double e0);

struct DiffractionConfig {
  double threshold = 0.01;         // silhouette threshold on |S| per pixel length
  double object_height = 0.10;     // meters
  double receiver_aperture = 0.06; // side of the square receiving aperture, meters
  int receiver_samples = 3;        // per side
  CurtainOptions curtain;
};

// Normalized received signal of the diffraction model for one ray: magnitude
// is the aperture-integrated power relative to the empty scene, phase is the
// field phase at the aperture center relative to the empty scene.
cdouble diffraction_signal(const Occlusion& occ, double r, double frequency, double z0,
                           const DiffractionConfig& cfg = {});
cdouble diffraction_signal(const ComplexImage& s, const ScanGeometry& geom, double theta,
                           double r, double frequency, const DiffractionConfig& cfg = {});

struct ScanOptions {
  double alpha = 0.96;
  double snr_db = 40.0;  // +inf disables noise
  std::uint64_t seed = 0;
  DiffractionConfig diffraction;
};

// P = alpha * P_ray + (1 - alpha) * P_diffract + noise, for every frequency.
// Noise is circular complex Gaussian with total power 10^(-snr_db/10)
// relative to the unit empty-scene signal.
MeasurementCube simulate_scan(const ComplexImage& s, const ScanGeometry& geom,
                              const SparseSystem& sys, const ScanOptions& opt);

}  // namespace mct
