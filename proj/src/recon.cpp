#include "mct/recon.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "mct/error.hpp"
#include "mct/parallel.hpp"

namespace mct {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Dense copy of the R_x block for rotation t (n_disp x n_virtual).
Eigen::MatrixXd aggregation_block(const SparseSystem& sys, int t) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(sys.n_disp, sys.n_virtual);
  const auto& rx = sys.ray_aggregation;
  for (int i = 0; i < sys.n_disp; ++i) {
    const auto row = static_cast<Eigen::Index>(sys.ray_row(i, t));
    for (SparseMatrix::InnerIterator it(rx, row); it; ++it)
      m(i, it.col() - static_cast<Eigen::Index>(t) * sys.n_virtual) = it.value();
  }
  return m;
}

struct BlockFit {
  Eigen::MatrixXcd inverse;
  int rank = 0;
};

// inverse = C * pinv(X) with X = Rx * C, pinv truncated to the leading
// eigenvectors of X X^H that retain the requested energy.
BlockFit fit_block(const Eigen::MatrixXd& rx, const Eigen::MatrixXcd& c, double energy, double ridge) {
  const Eigen::MatrixXcd x = rx.cast<cdouble>() * c;
  const Eigen::MatrixXcd gram = x * x.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("calibrate: eigen-decomposition failed");
  const Eigen::VectorXd& lam = es.eigenvalues();  // ascending
  const Eigen::Index n = lam.size();
  const double lmax = lam[n - 1];
  if (!(lmax > 1e-300)) throw NumericalError("calibrate: calibration measurements have rank 0");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += std::sqrt(std::max(lam[i], 0.0));
  int rank = 0;
  double acc = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (lam[i] <= 1e-13 * lmax) break;
    acc += std::sqrt(lam[i]);
    ++rank;
    if (acc >= energy * total) break;
  }
  const Eigen::MatrixXcd u = es.eigenvectors().rightCols(rank);
  const Eigen::VectorXd inv_lam = (lam.tail(rank).array() + ridge).inverse().matrix();
  const Eigen::MatrixXcd cx = c * x.adjoint();
  BlockFit fit;
  fit.inverse = (cx * u) * inv_lam.asDiagonal() * u.adjoint();
  fit.rank = rank;
  return fit;
}

void fill_stats(CalibratedInverse& inv, const std::vector<double>& err2, const std::vector<double>& norm2) {
  std::vector<double> rel(err2.size());
  for (std::size_t k = 0; k < err2.size(); ++k) rel[k] = norm2[k] > 0 ? std::sqrt(err2[k] / norm2[k]) : 0.0;
  std::sort(rel.begin(), rel.end());
  if (rel.empty()) return;
  inv.stats.median_residual = rel[rel.size() / 2];
  inv.stats.p95_residual = rel[std::min(rel.size() - 1, static_cast<std::size_t>(0.95 * rel.size()))];
  inv.stats.fraction_within_5pct =
      static_cast<double>(std::count_if(rel.begin(), rel.end(), [](double r) { return r <= 0.05; })) / rel.size();
}

CalibratedInverse empty_inverse(const SparseSystem& sys, double energy) {
  CalibratedInverse inv;
  inv.n_rot = sys.n_rot;
  inv.n_disp = sys.n_disp;
  inv.n_virtual = sys.n_virtual;
  inv.geometry_hash = sys.geometry_hash;
  inv.blocks.resize(sys.n_rot);
  inv.stats.ranks.assign(sys.n_rot, 0);
  inv.stats.energy_retained = energy;
  return inv;
}

double wrap_pi(double a) { return a - 2.0 * kPi * std::round(a / (2.0 * kPi)); }

// 1D unwrap of -arg C from the first sub-ray (air, phase 0). When the last
// sub-ray is also air the unwrapped phase must return to its wrapped value;
// any residual whole turns are removed at the least reliable increments.
void unwrap_rotation(const Eigen::Ref<const Eigen::VectorXcd>& c, Eigen::Ref<Eigen::VectorXd> phi) {
  const Eigen::Index n = c.size();
  Eigen::VectorXd inc(n);
  double prev = 0.0;
  for (Eigen::Index v = 0; v < n; ++v) {
    const double w = -std::arg(c[v]);
    inc[v] = wrap_pi(w - prev);
    prev = w;
  }
  if (n > 1 && std::abs(c[n - 1]) >= 0.5) {
    const double total = inc.sum();
    const int m = static_cast<int>(std::round((total - wrap_pi(total)) / (2.0 * kPi)));
    const double s = m > 0 ? 1.0 : -1.0;
    std::vector<char> used(n, 0);
    for (int j = 0; j < std::abs(m); ++j) {
      Eigen::Index best = -1;
      double best_cost = std::numeric_limits<double>::infinity();
      for (Eigen::Index v = 0; v < n; ++v) {
        if (used[v]) continue;
        const double reliability = std::min(std::abs(c[v]), v > 0 ? std::abs(c[v - 1]) : 1.0);
        const double cost = (std::abs(inc[v] - 2.0 * kPi * s) - std::abs(inc[v])) * reliability;
        if (cost < best_cost) {
          best_cost = cost;
          best = v;
        }
      }
      inc[best] -= 2.0 * kPi * s;
      used[best] = 1;
    }
  }
  double acc = 0.0;
  for (Eigen::Index v = 0; v < n; ++v) phi[v] = acc += inc[v];
}

}  // namespace

std::uint64_t calibration_phantom_seed(std::uint64_t seed, int k) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k)));
}

Eigen::VectorXcd CalibratedInverse::apply(const Eigen::VectorXcd& p) const {
  if (p.size() != static_cast<Eigen::Index>(n_disp) * n_rot)
    throw InvalidArgument("calibrated inverse: measurement length mismatch");
  Eigen::VectorXcd c(static_cast<Eigen::Index>(n_virtual) * n_rot);
  for (int t = 0; t < n_rot; ++t)
    c.segment(static_cast<Eigen::Index>(t) * n_virtual, n_virtual) =
        blocks[t] * p.segment(static_cast<Eigen::Index>(t) * n_disp, n_disp);
  return c;
}

CalibratedInverse calibrate(const SparseSystem& sys, int n_phantoms, std::uint64_t seed,
                            const CalibrationOptions& opt) {
  if (n_phantoms < 1) throw InvalidArgument("calibrate: need at least one phantom");
  const auto npix = static_cast<Eigen::Index>(sys.grid.size());
  Eigen::MatrixXd sre(npix, n_phantoms), sim(npix, n_phantoms);
  parallel_for(n_phantoms, [&](std::size_t k) {
    const auto ph = random_phantom(calibration_phantom_seed(seed, static_cast<int>(k)), opt.phantoms, sys.grid);
    sre.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(ph.image.re.data(), npix);
    sim.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(ph.image.im.data(), npix);
  });

  CalibratedInverse inv = empty_inverse(sys, opt.energy_retained);
  inv.stats.n_phantoms = n_phantoms;
  inv.stats.noise_snr_db = opt.noise_snr_db;
  // Expected Gram contribution of white measurement noise over K columns.
  const double ridge = std::isfinite(opt.noise_snr_db) ? n_phantoms * std::pow(10.0, -opt.noise_snr_db / 10.0) : 0.0;
  inv.stats.seed = seed;
  std::vector<std::vector<double>> err2(sys.n_rot), norm2(sys.n_rot);

  parallel_for(sys.n_rot, [&](std::size_t tt) {
    const int t = static_cast<int>(tt);
    const SparseMatrix rt = sys.subray_projector.middleRows(static_cast<Eigen::Index>(t) * sys.n_virtual, sys.n_virtual);
    const Eigen::MatrixXd a = rt * sre;
    const Eigen::MatrixXd b = rt * sim;
    Eigen::MatrixXcd c(a.rows(), a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) c(i, j) = std::exp(cdouble(-a(i, j), -b(i, j)));
    const Eigen::MatrixXd rx = aggregation_block(sys, t);
    auto fit = fit_block(rx, c, opt.energy_retained, ridge);
    const Eigen::MatrixXcd resid = c - fit.inverse * (rx.cast<cdouble>() * c);
    err2[t].resize(n_phantoms);
    norm2[t].resize(n_phantoms);
    for (int k = 0; k < n_phantoms; ++k) {
      err2[t][k] = resid.col(k).squaredNorm();
      norm2[t][k] = c.col(k).squaredNorm();
    }
    inv.blocks[t] = std::move(fit.inverse);
    inv.stats.ranks[t] = fit.rank;
  });

  std::vector<double> e(n_phantoms, 0.0), n(n_phantoms, 0.0);
  for (int t = 0; t < sys.n_rot; ++t)
    for (int k = 0; k < n_phantoms; ++k) {
      e[k] += err2[t][k];
      n[k] += norm2[t][k];
    }
  fill_stats(inv, e, n);
  return inv;
}

CalibratedInverse calibrate_from_signals(const SparseSystem& sys, const Eigen::MatrixXcd& c,
                                         double energy_retained) {
  if (c.rows() != static_cast<Eigen::Index>(sys.n_virtual) * sys.n_rot || c.cols() < 1)
    throw InvalidArgument("calibrate_from_signals: signal matrix has the wrong shape");
  CalibratedInverse inv = empty_inverse(sys, energy_retained);
  inv.stats.n_phantoms = static_cast<int>(c.cols());
  std::vector<double> e(c.cols(), 0.0), n(c.cols(), 0.0);
  for (int t = 0; t < sys.n_rot; ++t) {
    const Eigen::MatrixXcd ct = c.middleRows(static_cast<Eigen::Index>(t) * sys.n_virtual, sys.n_virtual);
    const Eigen::MatrixXd rx = aggregation_block(sys, t);
    auto fit = fit_block(rx, ct, energy_retained, 0.0);
    const Eigen::MatrixXcd resid = ct - fit.inverse * (rx.cast<cdouble>() * ct);
    for (Eigen::Index k = 0; k < c.cols(); ++k) {
      e[k] += resid.col(k).squaredNorm();
      n[k] += ct.col(k).squaredNorm();
    }
    inv.blocks[t] = std::move(fit.inverse);
    inv.stats.ranks[t] = fit.rank;
  }
  fill_stats(inv, e, n);
  return inv;
}

SubraySignals decompose_subrays(Eigen::VectorXcd c, int n_rot, int n_virtual, double floor) {
  if (c.size() != static_cast<Eigen::Index>(n_rot) * n_virtual)
    throw InvalidArgument("decompose_subrays: length mismatch");
  SubraySignals out;
  out.c_r.resize(c.size());
  out.c_phi.resize(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double mag = std::abs(c[i]);
    if (mag > 1.0) {
      c[i] /= mag;
      ++out.clip_count;
    }
    out.c_r[i] = -std::log(std::max(std::min(mag, 1.0), floor));
  }
  for (int t = 0; t < n_rot; ++t) {
    const Eigen::Index base = static_cast<Eigen::Index>(t) * n_virtual;
    unwrap_rotation(c.segment(base, n_virtual), out.c_phi.segment(base, n_virtual));
  }
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (out.c_phi[i] < 0.0) {
      out.c_phi[i] = 0.0;
      ++out.phase_clamp_count;
    }
  }
  out.c = std::move(c);
  return out;
}

SubraySignals recover_subrays(const Eigen::VectorXcd& p, const CalibratedInverse& inv, const ReconConfig& cfg) {
  if (p.size() != static_cast<Eigen::Index>(inv.n_disp) * inv.n_rot)
    throw InvalidArgument("recover_subrays: measurement length mismatch");
  return decompose_subrays(inv.apply(p), inv.n_rot, inv.n_virtual, cfg.magnitude_floor);
}

double tikhonov_weight(const SparseMatrix& a, double mu_rel) {
  if (a.cols() == 0) return 0.0;
  return mu_rel * a.squaredNorm() / static_cast<double>(a.cols());
}

NnlsResult solve_nnls_tikhonov(const SparseMatrix& a, const Eigen::VectorXd& b, double mu,
                               const NnlsOptions& opt) {
  if (b.size() != a.rows()) throw InvalidArgument("nnls: right-hand side length mismatch");
  if (!(mu >= 0.0)) throw InvalidArgument("nnls: mu must be non-negative");
  if (!(opt.tolerance > 0.0)) throw InvalidArgument("nnls: tolerance must be positive");
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (!(b[i] >= 0.0)) throw InvalidArgument("nnls: right-hand side must be non-negative");

  const Eigen::SparseMatrix<double, Eigen::RowMajor, int> at = a.transpose();
  NnlsResult res;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(a.cols());
  Eigen::VectorXd r = -b;
  auto objective = [&](const Eigen::VectorXd& rr, const Eigen::VectorXd& xx) {
    return rr.squaredNorm() + mu * xx.squaredNorm();
  };
  auto gradient = [&](const Eigen::VectorXd& rr, const Eigen::VectorXd& xx) -> Eigen::VectorXd {
    return 2.0 * (at * rr + mu * xx);
  };
  double f = objective(r, x);
  Eigen::VectorXd g = gradient(r, x);
  if (opt.record_objective) res.objective_history.push_back(f);

  // Exact line-search length along -g for the first step.
  const Eigen::VectorXd ag = a * g;
  const double curv = 2.0 * (ag.squaredNorm() + mu * g.squaredNorm());
  double step = curv > 0.0 ? g.squaredNorm() / curv : 1.0;

  for (int it = 0; it < opt.max_iterations; ++it) {
    Eigen::VectorXd xn, rn, d;
    double fn = f;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      xn = (x - step * g).cwiseMax(0.0);
      d = xn - x;
      if (d.squaredNorm() == 0.0) break;
      rn = a * xn - b;
      fn = objective(rn, xn);
      if (fn <= f + 1e-4 * g.dot(d)) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    res.iterations = it + 1;
    if (!moved) {
      // Projected gradient vanished or no decrease possible: stationary.
      res.converged = true;
      break;
    }
    const Eigen::VectorXd gn = gradient(rn, xn);
    const double sy = d.dot(gn - g);
    const double rel = d.norm() / std::max(x.norm(), 1e-300);
    step = sy > 0.0 ? d.squaredNorm() / sy : 2.0 * step;
    x = std::move(xn);
    r = std::move(rn);
    g = gn;
    f = fn;
    if (opt.record_objective) res.objective_history.push_back(f);
    if (rel < opt.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.objective = f;
  return res;
}

std::pair<NnlsResult, NnlsResult> solve_split(const SparseMatrix& rr, const SubraySignals& sub,
                                             const ReconConfig& cfg) {
  if (sub.c_r.size() != rr.rows() || sub.c_phi.size() != rr.rows())
    throw InvalidArgument("solve_split: sub-ray vector length does not match the projector");
  NnlsOptions nopt;
  nopt.max_iterations = cfg.max_iterations;
  nopt.tolerance = cfg.tolerance;
  if (!cfg.weighted) {
    const double mu = tikhonov_weight(rr, cfg.mu_rel);
    return {solve_nnls_tikhonov(rr, sub.c_r, mu, nopt), solve_nnls_tikhonov(rr, sub.c_phi, mu, nopt)};
  }
  Eigen::VectorXd w(sub.c.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::max(std::abs(sub.c[i]), cfg.weight_floor);
  const SparseMatrix a = w.asDiagonal() * rr;
  const double mu = tikhonov_weight(a, cfg.mu_rel);
  return {solve_nnls_tikhonov(a, w.cwiseProduct(sub.c_r), mu, nopt),
          solve_nnls_tikhonov(a, w.cwiseProduct(sub.c_phi), mu, nopt)};
}

std::vector<FrequencyRecon> reconstruct(const MeasurementCube& cube, const SparseSystem& sys,
                                        const CalibratedInverse& inv, const ReconConfig& cfg,
                                        std::vector<int> freq_indices, double ref_frequency) {
  if (cube.n_disp != sys.n_disp || cube.n_rot != sys.n_rot)
    throw InvalidArgument("reconstruct: cube shape does not match the system");
  if (!cube.geometry_hash.empty() && cube.geometry_hash != sys.geometry_hash)
    throw InvalidArgument("reconstruct: cube geometry hash does not match the system");
  if (inv.geometry_hash != sys.geometry_hash || inv.n_virtual != sys.n_virtual)
    throw InvalidArgument("reconstruct: calibration was built for a different geometry");
  if (freq_indices.empty()) {
    freq_indices.resize(cube.n_freq());
    std::iota(freq_indices.begin(), freq_indices.end(), 0);
  }
  for (int k : freq_indices)
    if (k < 0 || k >= cube.n_freq()) throw InvalidArgument("reconstruct: frequency index out of range");

  std::vector<FrequencyRecon> out(freq_indices.size());
  parallel_for(freq_indices.size(), [&](std::size_t j) {
    const int k = freq_indices[j];
    FrequencyRecon& fr = out[j];
    fr.frequency = cube.frequencies[k];
    try {
      const SubraySignals sub = recover_subrays(cube.slice(k), inv, cfg);
      const auto [sr, sp] = solve_split(sys.subray_projector, sub, cfg);
      ComplexImage img(sys.grid, ref_frequency);
      const double gauge = ref_frequency / fr.frequency;
      for (std::size_t i = 0; i < img.size(); ++i) {
        img.re[i] = sr.x[static_cast<Eigen::Index>(i)];
        img.im[i] = sp.x[static_cast<Eigen::Index>(i)] * gauge;
      }
      fr.image = std::move(img);
      fr.iterations_re = sr.iterations;
      fr.iterations_im = sp.iterations;
      fr.converged = sr.converged && sp.converged;
      fr.clip_count = sub.clip_count;
    } catch (const std::exception& e) {
      fr.error = e.what();
    }
  });
  return out;
}

ComplexImage reconstruct_frequency(const MeasurementCube& cube, const SparseSystem& sys,
                                   const CalibratedInverse& inv, int freq_index,
                                   const ReconConfig& cfg, double ref_frequency) {
  auto r = reconstruct(cube, sys, inv, cfg, {freq_index}, ref_frequency);
  if (!r[0].image) throw NumericalError("reconstruct: " + r[0].error);
  return std::move(*r[0].image);
}

}  // namespace mct
