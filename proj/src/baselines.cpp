#include "mct/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "mct/error.hpp"
#include "mct/recon.hpp"

namespace mct {

void BaselineConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("baseline: iterations must be >= 1");
  if (!(damping > 0.0)) throw InvalidArgument("baseline: damping must be > 0");
  if (inner_iterations < 1) throw InvalidArgument("baseline: inner_iterations must be >= 1");
  if (!(mu_rel >= 0.0)) throw InvalidArgument("baseline: mu_rel must be >= 0");
}

namespace {

void check_cube(const MeasurementCube& cube, const SparseSystem& sys, int k) {
  if (cube.n_disp != sys.n_disp || cube.n_rot != sys.n_rot)
    throw InvalidArgument("baseline: cube shape does not match the system");
  if (!cube.geometry_hash.empty() && cube.geometry_hash != sys.geometry_hash)
    throw InvalidArgument("baseline: cube geometry hash does not match the system");
  if (k < 0 || k >= cube.n_freq()) throw InvalidArgument("baseline: frequency index out of range");
}

// Complex vectors are carried as (n x 2) real blocks so that one pass over
// the real sparse matrix handles both parts.
using Block = Eigen::Matrix<double, Eigen::Dynamic, 2>;

Block to_block(const Eigen::VectorXcd& v) {
  Block b(v.size(), 2);
  b.col(0) = v.real();
  b.col(1) = v.imag();
  return b;
}

Eigen::VectorXcd to_complex(const Block& b) {
  Eigen::VectorXcd v(b.rows());
  for (Eigen::Index i = 0; i < b.rows(); ++i) v[i] = cdouble(b(i, 0), b(i, 1));
  return v;
}

Block cmul(const Eigen::VectorXcd& d, const Block& b) {
  Block out(b.rows(), 2);
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const cdouble z = d[i] * cdouble(b(i, 0), b(i, 1));
    out(i, 0) = z.real();
    out(i, 1) = z.imag();
  }
  return out;
}

Block cmul_conj(const Eigen::VectorXcd& d, const Block& b) { return cmul(d.conjugate(), b); }

}  // namespace

BaselineResult recon_rn(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                        const BaselineConfig& cfg, double ref_frequency) {
  cfg.validate();
  check_cube(cube, sys, freq_index);
  const Eigen::VectorXcd p = cube.slice(freq_index);
  BaselineResult res;
  Eigen::VectorXd q(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double m = std::abs(p[i]);
    if (m < cfg.magnitude_floor) {
      m = cfg.magnitude_floor;
      ++res.floored;
    }
    // Gains above 1 carry no attenuation information.
    q[i] = std::max(0.0, -std::log(m));
  }
  if (res.floored) res.warning = std::to_string(res.floored) + " ray magnitudes floored at " + std::to_string(cfg.magnitude_floor);
  const SparseMatrix a = whole_ray_projector(sys);
  NnlsOptions opt;
  opt.max_iterations = cfg.iterations;
  opt.record_objective = true;
  const auto sol = solve_nnls_tikhonov(a, q, tikhonov_weight(a, cfg.mu_rel), opt);
  res.image = ComplexImage(sys.grid, ref_frequency);
  for (std::size_t i = 0; i < res.image.size(); ++i) res.image.re[i] = sol.x[static_cast<Eigen::Index>(i)];
  res.iterations = sol.iterations;
  res.converged = sol.converged;
  res.objective_history = sol.objective_history;
  return res;
}

BaselineResult recon_cn_rays(const Eigen::VectorXcd& p, const SparseSystem& sys, double frequency,
                             const BaselineConfig& cfg, double ref_frequency) {
  cfg.validate();
  if (p.size() != static_cast<Eigen::Index>(sys.n_disp) * sys.n_rot)
    throw InvalidArgument("recon_cn: ray vector length mismatch");
  const SparseMatrix& rr = sys.subray_projector;
  const SparseMatrix& rx = sys.ray_aggregation;
  const SparseMatrix rrt = rr.transpose();
  const SparseMatrix rxt = rx.transpose();
  const auto npix = static_cast<Eigen::Index>(sys.grid.size());

  Block s = Block::Zero(npix, 2);
  auto residual = [&](const Block& sv, Eigen::VectorXcd& c) {
    const Eigen::VectorXcd u = to_complex(Block(rr * sv));
    c = (-u.array()).exp().matrix();
    return Eigen::VectorXcd(p - to_complex(Block(rx * to_block(c))));
  };

  BaselineResult res;
  Eigen::VectorXcd c;
  Eigen::VectorXcd r = residual(s, c);
  double f = r.squaredNorm();
  res.objective_history.push_back(f);
  Block best = s;
  double best_f = f;
  int increases = 0;

  for (int it = 0; it < cfg.iterations; ++it) {
    // J = -R_x diag(C) R_r; CGLS on J dS = r for a few steps.
    auto apply_j = [&](const Block& v) { return Block(-(rx * cmul(c, Block(rr * v)))); };
    auto apply_jh = [&](const Block& w) { return Block(-(rrt * cmul_conj(c, Block(rxt * w)))); };
    Block x = Block::Zero(npix, 2);
    Block rres = to_block(r);
    Block g = apply_jh(rres);
    Block d = g;
    double gg = g.squaredNorm();
    for (int inner = 0; inner < cfg.inner_iterations && gg > 0.0; ++inner) {
      const Block jd = apply_j(d);
      const double jj = jd.squaredNorm();
      if (!(jj > 0.0)) break;
      const double a = gg / jj;
      x += a * d;
      rres -= a * jd;
      g = apply_jh(rres);
      const double gg_new = g.squaredNorm();
      d = g + (gg_new / gg) * d;
      gg = gg_new;
    }
    // Damped step, halved until the objective decreases (at most 8 times).
    double step = cfg.damping;
    Block trial;
    Eigen::VectorXcd trial_c, trial_r;
    double fn = 0.0;
    for (int bt = 0; bt < 9; ++bt, step *= 0.5) {
      trial = (s + step * x).cwiseMax(0.0);
      trial_r = residual(trial, trial_c);
      fn = trial_r.squaredNorm();
      if (fn < f || !cfg.backtracking) break;
    }
    s = std::move(trial);
    c = std::move(trial_c);
    r = std::move(trial_r);
    res.objective_history.push_back(fn);
    res.iterations = it + 1;
    if (fn < best_f) {
      best_f = fn;
      best = s;
    }
    increases = fn > f ? increases + 1 : 0;
    if (increases >= 10) {
      res.diverged = true;
      res.warning = "objective increased for 10 consecutive iterations; returning best iterate";
      break;
    }
    const double rel = std::abs(f - fn) / std::max(f, 1e-300);
    f = fn;
    if (rel < 1e-10 || fn == 0.0) {
      res.converged = true;
      break;
    }
  }

  res.image = ComplexImage(sys.grid, ref_frequency);
  const double gauge = ref_frequency / frequency;
  for (Eigen::Index i = 0; i < npix; ++i) {
    res.image.re[static_cast<std::size_t>(i)] = best(i, 0);
    res.image.im[static_cast<std::size_t>(i)] = best(i, 1) * gauge;
  }
  return res;
}

BaselineResult recon_cn(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                        const BaselineConfig& cfg, double ref_frequency) {
  check_cube(cube, sys, freq_index);
  return recon_cn_rays(cube.slice(freq_index), sys, cube.frequencies[freq_index], cfg, ref_frequency);
}

BaselineResult run_baseline(const MeasurementCube& cube, const SparseSystem& sys, int freq_index,
                            const BaselineConfig& cfg, double ref_frequency) {
  return cfg.method == BaselineMethod::kRN ? recon_rn(cube, sys, freq_index, cfg, ref_frequency)
                                           : recon_cn(cube, sys, freq_index, cfg, ref_frequency);
}

std::string method_name(BaselineMethod m) { return m == BaselineMethod::kRN ? "rn" : "cn"; }

BaselineMethod parse_method(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (n == "rn") return BaselineMethod::kRN;
  if (n == "cn") return BaselineMethod::kCN;
  throw InvalidArgument("unknown baseline method '" + name + "' (expected rn or cn)");
}

}  // namespace mct
