#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <limits>

#include <Eigen/Core>

#include "mct/forward.hpp"
#include "mct/geometry.hpp"
#include "mct/image.hpp"
#include "mct/phantom.hpp"

namespace mct {

struct ReconConfig {
  double mu_rel = 1e-2;  // Tikhonov weight relative to mean diag(A^T A)
  int max_iterations = 500;
  double tolerance = 1e-5;
  int calibration_size = 2048;  // K
  double energy_retained = 0.999;  // truncated-SVD rank policy
  double magnitude_floor = 1e-6;   // |C| floor before the log
  // Scale each sub-ray row by |C| (inverse-variance weighting of C_r and C_phi
  // under additive noise). The weight is real and shared by both channels.
  bool weighted = true;
  double weight_floor = 1e-3;
};

struct CalibrationStats {
  int n_phantoms = 0;
  std::uint64_t seed = 0;
  double energy_retained = 0.0;
  double noise_snr_db = 0.0;
  std::vector<int> ranks;          // per rotation block
  double median_residual = 0.0;    // relative C recovery residual on the calibration set
  double p95_residual = 0.0;
  double fraction_within_5pct = 0.0;
};

// Calibrated pseudo-inverse of R_x. R_x is block diagonal over rotations, so
// the inverse is stored as one (N_vr x N_r) complex block per rotation.
struct CalibratedInverse {
  int n_rot = 0;
  int n_disp = 0;
  int n_virtual = 0;
  std::string geometry_hash;
  std::vector<Eigen::MatrixXcd> blocks;
  CalibrationStats stats;

  // C = R_x^-1 * P for one frequency slice (ray-row order).
  Eigen::VectorXcd apply(const Eigen::VectorXcd& p) const;
};

struct CalibrationOptions {
  double energy_retained = 0.999;
  // Measurement SNR the inverse is tuned for (LMMSE ridge); inf gives the
  // plain truncated pseudo-inverse.
  double noise_snr_db = 40.0;
  RandomPhantomConfig phantoms;
};

// Seed of the k-th calibration phantom.
std::uint64_t calibration_phantom_seed(std::uint64_t seed, int k);

// Builds R_x^-1 = C * pinv(R_x * C) per rotation block from n_phantoms random
// phantoms. Throws NumericalError when the stacked measurements have rank 0.
CalibratedInverse calibrate(const SparseSystem& sys, int n_phantoms, std::uint64_t seed,
                            const CalibrationOptions& opt = {});

// Same construction from explicit sub-ray signal columns (N_vr*N_rot x K).
CalibratedInverse calibrate_from_signals(const SparseSystem& sys, const Eigen::MatrixXcd& c,
                                         double energy_retained);

struct SubraySignals {
  Eigen::VectorXcd c;      // after magnitude clipping
  Eigen::VectorXd c_r;     // -log|C|
  Eigen::VectorXd c_phi;   // unwrapped -arg C, non-negative
  int clip_count = 0;      // entries whose raw |C| exceeded 1
  int phase_clamp_count = 0;
};

SubraySignals recover_subrays(const Eigen::VectorXcd& p, const CalibratedInverse& inv,
                              const ReconConfig& cfg = {});

// Splits C into attenuation and unwrapped phase (per rotation, anchored at
// the first virtual ray).
SubraySignals decompose_subrays(Eigen::VectorXcd c, int n_rot, int n_virtual, double floor = 1e-6);

struct NnlsOptions {
  int max_iterations = 500;
  double tolerance = 1e-5;
  bool record_objective = false;
};

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_history;  // one entry per accepted iterate, if recorded
};

// min ||b - A x||^2 + mu ||x||^2 s.t. x >= 0 by projected gradient with
// Barzilai-Borwein steps and a monotone backtracking safeguard. Stops when
// ||x_{t+1} - x_t|| / ||x_t|| < tolerance; otherwise returns the last iterate
// with converged = false.
NnlsResult solve_nnls_tikhonov(const SparseMatrix& a, const Eigen::VectorXd& b, double mu,
                               const NnlsOptions& opt = {});

// Tikhonov weight mu_rel * mean diag(A^T A).
double tikhonov_weight(const SparseMatrix& a, double mu_rel);

// Step 2: the attenuation and phase problems solved independently with the
// weighting and Tikhonov policy of cfg. Returns (re, im) solutions.
std::pair<NnlsResult, NnlsResult> solve_split(const SparseMatrix& rr, const SubraySignals& sub,
                                             const ReconConfig& cfg = {});

struct FrequencyRecon {
  double frequency = 0.0;
  std::optional<ComplexImage> image;
  std::string error;
  int iterations_re = 0;
  int iterations_im = 0;
  bool converged = false;
  int clip_count = 0;
};

// Two-step inversion per frequency: C from the calibrated inverse, then two
// non-negative Tikhonov problems for the real and imaginary channels. The
// imaginary channel is reported at the image reference frequency. When
// freq_indices is empty every frequency is processed.
std::vector<FrequencyRecon> reconstruct(const MeasurementCube& cube, const SparseSystem& sys,
                                        const CalibratedInverse& inv, const ReconConfig& cfg = {},
                                        std::vector<int> freq_indices = {},
                                        double ref_frequency = 5.5e9);

// Convenience: reconstruct one frequency and return the image (throws on failure).
ComplexImage reconstruct_frequency(const MeasurementCube& cube, const SparseSystem& sys,
                                   const CalibratedInverse& inv, int freq_index,
                                   const ReconConfig& cfg = {}, double ref_frequency = 5.5e9);

}  // namespace mct
