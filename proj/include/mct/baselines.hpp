#pragma once

#include <string>
#include <vector>

#include "mct/forward.hpp"
#include "mct/geometry.hpp"
#include "mct/image.hpp"

namespace mct {

enum class BaselineMethod { kRN, kCN };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::kCN;
  int iterations = 200;
  double damping = 0.5;
  int inner_iterations = 5;   // CGLS steps per Gauss-Newton update (CN)
  double mu_rel = 1e-2;       // Tikhonov weight for RN, relative to mean diag
  double magnitude_floor = 1e-6;
  bool backtracking = false;  // CN: halve the damped step until the objective drops

  void validate() const;
};

struct BaselineResult {
  ComplexImage image;  // RN leaves im at zero
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  int floored = 0;  // RN: rays whose |P| hit the floor
  std::vector<double> objective_history;
  std::string warning;
};

// Real-valued ray-optical method: Q = -log|P| against the whole-ray projector.
BaselineResult recon_rn(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                        const BaselineConfig& cfg = {}, double ref_frequency = 5.5e9);

// Damped Gauss-Newton on P - R_x exp(-R_r S) over complex S, both parts
// projected onto [0, inf) after every update. Zero initialization.
BaselineResult recon_cn(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                        const BaselineConfig& cfg = {}, double ref_frequency = 5.5e9);

// Same iteration on an explicit ray vector (ray-row order) at frequency f.
BaselineResult recon_cn_rays(const Eigen::VectorXcd& p, const SparseSystem& sys, double frequency,
                             const BaselineConfig& cfg = {}, double ref_frequency = 5.5e9);

BaselineResult run_baseline(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                            const BaselineConfig& cfg, double ref_frequency = 5.5e9);

std::string method_name(BaselineMethod m);
BaselineMethod parse_method(const std::string& name);

}  // namespace mct
