#include "mct/forward.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mct/error.hpp"
#include "mct/parallel.hpp"

namespace mct {

MeasurementCube::MeasurementCube(int nd, int nr, std::vector<double> freqs)
    : n_disp(nd), n_rot(nr), frequencies(std::move(freqs)),
      data(static_cast<std::size_t>(nd) * nr * frequencies.size(), cdouble(0.0, 0.0)) {}

Eigen::VectorXcd MeasurementCube::slice(int freq) const {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n_disp) * n_rot);
  for (int t = 0; t < n_rot; ++t)
    for (int i = 0; i < n_disp; ++i) v[static_cast<Eigen::Index>(t) * n_disp + i] = at(i, t, freq);
  return v;
}

void MeasurementCube::set_slice(int freq, const Eigen::VectorXcd& rays) {
  if (rays.size() != static_cast<Eigen::Index>(n_disp) * n_rot)
    throw InvalidArgument("set_slice: length mismatch");
  for (int t = 0; t < n_rot; ++t)
    for (int i = 0; i < n_disp; ++i) at(i, t, freq) = rays[static_cast<Eigen::Index>(t) * n_disp + i];
}

MeasurementCube MeasurementCube::decimated(int disp_factor, int rot_factor) const {
  if (disp_factor < 1 || rot_factor < 1) throw InvalidArgument("decimation factor must be >= 1");
  if (n_rot % rot_factor != 0) throw InvalidArgument("rotation decimation must divide n_rot");
  MeasurementCube out((n_disp + disp_factor - 1) / disp_factor, n_rot / rot_factor, frequencies);
  out.alpha = alpha;
  out.snr_db = snr_db;
  out.seed = seed;
  for (int i = 0; i < out.n_disp; ++i)
    for (int t = 0; t < out.n_rot; ++t)
      for (int k = 0; k < out.n_freq(); ++k)
        out.at(i, t, k) = at(i * disp_factor, t * rot_factor, k);
  return out;
}

ComplexImage at_frequency(const ComplexImage& s, double f) {
  ComplexImage out = s;
  const double scale = f / s.ref_frequency;
  for (double& v : out.im) v *= scale;
  return out;
}

namespace {

void check_grid(const ComplexImage& s, const SparseSystem& sys) {
  if (!(s.grid == sys.grid)) throw InvalidArgument("image grid does not match the system grid");
}

}  // namespace

Eigen::VectorXcd subray_signals(const ComplexImage& s, const SparseSystem& sys) {
  check_grid(s, sys);
  const Eigen::Map<const Eigen::VectorXd> re(s.re.data(), static_cast<Eigen::Index>(s.size()));
  const Eigen::Map<const Eigen::VectorXd> im(s.im.data(), static_cast<Eigen::Index>(s.size()));
  const Eigen::VectorXd a = sys.subray_projector * re;
  const Eigen::VectorXd p = sys.subray_projector * im;
  Eigen::VectorXcd c(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) c[i] = std::exp(cdouble(-a[i], -p[i]));
  return c;
}

Eigen::VectorXcd forward_ray(const ComplexImage& s, const SparseSystem& sys) {
  const Eigen::VectorXcd c = subray_signals(s, sys);
  // R_x rows are uniform averages; summing before dividing keeps the empty
  // scene at exactly 1.
  const SparseMatrix& rx = sys.ray_aggregation;
  Eigen::VectorXcd p(rx.rows());
  for (int r = 0; r < rx.rows(); ++r) {
    cdouble acc(0.0, 0.0);
    int n = 0;
    for (SparseMatrix::InnerIterator it(rx, r); it; ++it, ++n) acc += c[it.col()];
    p[r] = n ? acc / static_cast<double>(n) : cdouble(0.0, 0.0);
  }
  return p;
}

// ---- Silhouette --------------------------------------------------------------

double Occlusion::width_at(double r) const {
  if (profile_offsets.empty()) return 0.0;
  auto it = std::lower_bound(profile_offsets.begin(), profile_offsets.end(), r);
  std::size_t k = static_cast<std::size_t>(it - profile_offsets.begin());
  if (k == profile_offsets.size()) return profile_widths.back();
  if (k > 0 && r - profile_offsets[k - 1] < profile_offsets[k] - r) --k;
  return profile_widths[k];
}

Occlusion silhouette(const ComplexImage& s, double theta, double threshold, double height) {
  if (!(threshold > 0.0)) throw InvalidArgument("silhouette threshold must be positive");
  const GridSpec& g = s.grid;
  const double sn = std::sin(theta), cs = std::cos(theta);
  const double half = 0.5 * g.pixel_size * (std::abs(sn) + std::abs(cs));

  Occlusion occ;
  occ.height = height;
  std::vector<Interval> raw;
  std::vector<char> mask(s.size(), 0);
  for (int iy = 0; iy < g.height; ++iy) {
    for (int ix = 0; ix < g.width; ++ix) {
      const auto k = g.index(ix, iy);
      if (std::abs(s.at(k)) <= threshold) continue;
      mask[k] = 1;
      const double u = -g.center_x(ix) * sn + g.center_y(iy) * cs;
      raw.push_back({u - half, u + half});
    }
  }
  std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const auto& iv : raw) {
    if (!occ.intervals.empty() && iv.lo <= occ.intervals.back().hi + 1e-9 * g.pixel_size)
      occ.intervals.back().hi = std::max(occ.intervals.back().hi, iv.hi);
    else
      occ.intervals.push_back(iv);
  }

  // Thickness profile at quarter-pixel spacing across the grid diagonal.
  const double reach = std::hypot(g.half_width(), g.half_height());
  const double du = 0.25 * g.pixel_size;
  const int n = static_cast<int>(std::ceil(reach / du));
  for (int i = -n; i <= n; ++i) {
    const double u = i * du;
    // Chord averaged over a one-pixel strip, which smooths the staircase.
    double w = 0.0;
    if (!occ.intervals.empty()) {
      constexpr int kLines = 8;
      for (int l = 0; l < kLines; ++l) {
        const double v = u + ((l + 0.5) / kLines - 0.5) * g.pixel_size;
        for (const auto& [idx, len] : ray_pixel_lengths(ray_line(theta, v), g))
          if (mask[static_cast<std::size_t>(idx)]) w += len / kLines;
      }
    }
    occ.profile_offsets.push_back(u);
    occ.profile_widths.push_back(w * g.pixel_size);
  }
  return occ;
}

// ---- Curtain geometry --------------------------------------------------------

bool Occluder::contains(double x, double y) const {
  for (const auto& r : rects)
    if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1) return true;
  for (const auto& d : discs)
    if ((x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) <= d.radius * d.radius) return true;
  return false;
}

double Occluder::reach_x() const {
  double m = 0.0;
  for (const auto& r : rects) m = std::max({m, std::abs(r.x0), std::abs(r.x1)});
  for (const auto& d : discs) m = std::max(m, std::abs(d.cx) + d.radius);
  return m;
}

double Occluder::reach_y() const {
  double m = 0.0;
  for (const auto& r : rects) m = std::max({m, std::abs(r.y0), std::abs(r.y1)});
  for (const auto& d : discs) m = std::max(m, std::abs(d.cy) + d.radius);
  return m;
}

double Occluder::extent() const {
  if (empty()) return 0.0;
  double lo = 1e300, hi = -1e300;
  for (const auto& r : rects) {
    lo = std::min(lo, r.x0);
    hi = std::max(hi, r.x1);
  }
  for (const auto& d : discs) {
    lo = std::min(lo, d.cx - d.radius);
    hi = std::max(hi, d.cx + d.radius);
  }
  return hi - lo;
}

Occluder occluder_for_ray(const Occlusion& occ, double r) {
  Occluder o;
  for (const auto& iv : occ.intervals)
    o.rects.push_back({iv.lo - r, iv.hi - r, -0.5 * occ.height, 0.5 * occ.height});
  return o;
}

cdouble free_space_field(double x, double y, double z0, double wavelength, double e0) {
  const double d = std::sqrt(x * x + y * y + 4.0 * z0 * z0);
  const double k = 2.0 * kPi / wavelength;
  return e0 / d * std::polar(1.0, k * d);
}

cdouble CurtainField::incident(double x, double y) const {
  const double d = std::sqrt(x * x + y * y + z0 * z0);
  return e0 / d * std::polar(1.0, 2.0 * kPi * d / wavelength);
}

cdouble CurtainField::value(double x, double y) const {
  return blocked.contains(x, y) ? cdouble(0.0, 0.0) : incident(x, y);
}

std::vector<cdouble> CurtainField::sample_plane(int& nx, int& ny) const {
  nx = std::max(1, static_cast<int>(std::ceil(2.0 * half_x / step)));
  ny = std::max(1, static_cast<int>(std::ceil(2.0 * half_y / step)));
  const double hx = 2.0 * half_x / nx, hy = 2.0 * half_y / ny;
  std::vector<cdouble> out(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      out[static_cast<std::size_t>(j) * nx + i] = value(-half_x + (i + 0.5) * hx, -half_y + (j + 0.5) * hy);
  return out;
}

CurtainField curtain_field(const Occluder& blocked, double wavelength, double z0, double e0,
                           const CurtainOptions& opt) {
  if (!(wavelength > 0.0) || !(z0 > 0.0)) throw InvalidArgument("curtain_field: invalid wavelength or z0");
  const double step = opt.step_fraction * wavelength;
  if (!(step > 0.0) || step > 0.5 * wavelength)
    throw InvalidArgument("curtain_field: sampling step exceeds lambda/2 (aliasing)");
  CurtainField cf;
  cf.wavelength = wavelength;
  cf.z0 = z0;
  cf.e0 = e0;
  cf.step = step;
  cf.blocked = blocked;
  cf.exterior = opt.exterior;
  cf.half_x = std::max(opt.extent_factor * blocked.reach_x(), 2.0 * wavelength);
  cf.half_y = std::max(opt.extent_factor * blocked.reach_y(), 2.0 * wavelength);
  return cf;
}

namespace {

struct Nodes {
  std::vector<double> x, y;
  std::vector<cdouble> src;  // incident field times quadrature weight
};

// Two-point Gauss-Legendre panels of width 2 * step, so the node spacing
// stays close to step.
constexpr double kGauss = 0.57735026918962576;  // 1 / sqrt(3)

int panels(double length, double step) {
  return std::max(1, static_cast<int>(std::ceil(length / (2.0 * step))));
}

// Rectangle with panels fitted to its edges.
void add_rect(Nodes& n, const CurtainField& cf, double x0, double x1, double y0, double y1) {
  const int nx = panels(x1 - x0, cf.step), ny = panels(y1 - y0, cf.step);
  const double hx = (x1 - x0) / nx, hy = (y1 - y0) / ny;
  const double w = 0.25 * hx * hy;
  for (int j = 0; j < ny; ++j)
    for (int gj : {-1, 1}) {
      const double y = y0 + (j + 0.5 + 0.5 * gj * kGauss) * hy;
      for (int i = 0; i < nx; ++i)
        for (int gi : {-1, 1}) {
          const double x = x0 + (i + 0.5 + 0.5 * gi * kGauss) * hx;
          n.x.push_back(x);
          n.y.push_back(y);
          n.src.push_back(cf.incident(x, y) * w);
        }
    }
}

// Disc: Gauss-Legendre panels in radius, periodic midpoint rule in angle.
void add_disc(Nodes& n, const CurtainField& cf, const Disc& d) {
  const int nr = panels(d.radius, cf.step);
  const int na = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * d.radius / cf.step)));
  const double hr = d.radius / nr, ha = 2.0 * kPi / na;
  for (int i = 0; i < nr; ++i)
    for (int gi : {-1, 1}) {
      const double rho = (i + 0.5 + 0.5 * gi * kGauss) * hr;
      for (int j = 0; j < na; ++j) {
        const double a = (j + 0.5) * ha;
        const double x = d.cx + rho * std::cos(a), y = d.cy + rho * std::sin(a);
        n.x.push_back(x);
        n.y.push_back(y);
        n.src.push_back(cf.incident(x, y) * (0.5 * rho * hr * ha));
      }
    }
}

Nodes occluder_nodes(const CurtainField& cf) {
  Nodes n;
  for (const auto& r : cf.blocked.rects) add_rect(n, cf, r.x0, r.x1, r.y0, r.y1);
  for (const auto& d : cf.blocked.discs) add_disc(n, cf, d);
  return n;
}

cdouble radiate(const Nodes& n, const CurtainField& cf, double x, double y) {
  const double k = 2.0 * kPi / cf.wavelength;
  const cdouble inv_jl = 1.0 / cdouble(0.0, cf.wavelength);
  const double z2 = cf.z0 * cf.z0;
  cdouble acc(0.0, 0.0);
  for (std::size_t i = 0; i < n.x.size(); ++i) {
    const double dx = x - n.x[i], dy = y - n.y[i];
    const double d = std::sqrt(dx * dx + dy * dy + z2);
    const cdouble kern = (cf.z0 / (d * d)) * std::polar(1.0, k * d) * (inv_jl + 1.0 / (2.0 * kPi * d));
    acc += n.src[i] * kern;
  }
  return acc;
}

bool covers_plane(const CurtainField& cf) {
  for (const auto& r : cf.blocked.rects)
    if (r.x0 <= -cf.half_x && r.x1 >= cf.half_x && r.y0 <= -cf.half_y && r.y1 >= cf.half_y) return true;
  return false;
}

void check_extent(const CurtainField& cf) {
  const double rx = cf.blocked.reach_x(), ry = cf.blocked.reach_y();
  const bool outside = rx > cf.half_x * (1.0 + 1e-12) || ry > cf.half_y * (1.0 + 1e-12);
  const bool small = cf.exterior == Exterior::kClosed && !covers_plane(cf) &&
                     2.0 * cf.half_x < 2.0 * cf.blocked.extent() * (1.0 - 1e-12);
  if (outside || small) {
    std::ostringstream os;
    os << "receiver_field: curtain plane too small (half extents " << cf.half_x << " x " << cf.half_y
       << " m, occluder reach " << rx << " x " << ry << " m, occluder width " << cf.blocked.extent()
       << " m)";
    throw NumericalError(os.str());
  }
}

// Field at several receiver points, sharing the quadrature nodes.
std::vector<cdouble> receiver_fields(const CurtainField& cf, const std::vector<double>& xs,
                                     const std::vector<double>& ys) {
  check_extent(cf);
  const Nodes blocked = occluder_nodes(cf);
  Nodes plane;
  if (cf.exterior == Exterior::kClosed) add_rect(plane, cf, -cf.half_x, cf.half_x, -cf.half_y, cf.half_y);
  std::vector<cdouble> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const cdouble through = cf.exterior == Exterior::kOpen
                                ? free_space_field(xs[i], ys[i], cf.z0, cf.wavelength, cf.e0)
                                : radiate(plane, cf, xs[i], ys[i]);
    out[i] = through - radiate(blocked, cf, xs[i], ys[i]);
  }
  return out;
}

}  // namespace

cdouble receiver_field(const CurtainField& cf, double x, double y) {
  return receiver_fields(cf, {x}, {y})[0];
}

cdouble diffraction_signal(const Occlusion& occ, double r, double frequency, double z0,
                           const DiffractionConfig& cfg) {
  if (cfg.receiver_samples < 1 || !(cfg.receiver_aperture > 0.0))
    throw InvalidArgument("diffraction_signal: invalid receiver aperture");
  const double lambda = kSpeedOfLight / frequency;
  const Occluder o = occluder_for_ray(occ, r);
  if (o.empty()) return {1.0, 0.0};

  const CurtainField cf = curtain_field(o, lambda, z0, 1.0, cfg.curtain);
  const int n = cfg.receiver_samples;
  std::vector<double> xs, ys;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      xs.push_back(((i + 0.5) / n - 0.5) * cfg.receiver_aperture);
      ys.push_back(((j + 0.5) / n - 0.5) * cfg.receiver_aperture);
    }
  xs.push_back(0.0);
  ys.push_back(0.0);
  const auto e = receiver_fields(cf, xs, ys);

  double power = 0.0, power_free = 0.0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    power += std::norm(e[i]);
    power_free += std::norm(free_space_field(xs[i], ys[i], z0, lambda, 1.0));
  }
  const cdouble center = e.back();
  const double phase = std::arg(center) - std::arg(free_space_field(0.0, 0.0, z0, lambda, 1.0));
  return std::polar(power / power_free, phase);
}

cdouble diffraction_signal(const ComplexImage& s, const ScanGeometry& geom, double theta,
                           double r, double frequency, const DiffractionConfig& cfg) {
  const Occlusion occ = silhouette(s, theta, cfg.threshold, cfg.object_height);
  return diffraction_signal(occ, r, frequency, geom.antenna_distance, cfg);
}

MeasurementCube simulate_scan(const ComplexImage& s, const ScanGeometry& geom,
                              const SparseSystem& sys, const ScanOptions& opt) {
  if (!(opt.alpha >= 0.0 && opt.alpha <= 1.0)) throw InvalidArgument("simulate_scan: alpha must be in [0, 1]");
  if (!(opt.snr_db > 0.0)) throw InvalidArgument("simulate_scan: SNR must be positive");
  check_grid(s, sys);
  if (sys.n_disp != geom.n_disp || sys.n_rot != geom.n_rot || sys.geometry_hash != geom.hash())
    throw InvalidArgument("simulate_scan: system was built for a different geometry");

  MeasurementCube cube(geom.n_disp, geom.n_rot, geom.frequencies);
  cube.alpha = opt.alpha;
  cube.snr_db = opt.snr_db;
  cube.seed = opt.seed;
  cube.geometry_hash = geom.hash();
  const int nf = cube.n_freq();

  std::vector<Eigen::VectorXcd> ray(nf);
  if (opt.alpha > 0.0) {
    parallel_for(nf, [&](std::size_t k) { ray[k] = forward_ray(at_frequency(s, geom.frequencies[k]), sys); });
  }

  std::vector<Occlusion> occ;
  if (opt.alpha < 1.0) {
    occ.resize(geom.n_rot);
    parallel_for(geom.n_rot, [&](std::size_t t) {
      occ[t] = silhouette(s, geom.rotation(static_cast<int>(t)), opt.diffraction.threshold,
                          opt.diffraction.object_height);
    });
  }

  // Every (rotation, frequency) pair writes its own cube entries.
  parallel_for(static_cast<std::size_t>(geom.n_rot) * nf, [&](std::size_t job) {
    const int t = static_cast<int>(job / nf);
    const int k = static_cast<int>(job % nf);
    for (int i = 0; i < geom.n_disp; ++i) {
      cdouble p(0.0, 0.0);
      if (opt.alpha > 0.0) p += opt.alpha * ray[k][static_cast<Eigen::Index>(sys.ray_row(i, t))];
      if (opt.alpha < 1.0)
        p += (1.0 - opt.alpha) * diffraction_signal(occ[t], geom.displacement(i), geom.frequencies[k],
                                                     geom.antenna_distance, opt.diffraction);
      cube.at(i, t, k) = p;
    }
  });

  if (std::isfinite(opt.snr_db)) {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma = std::sqrt(0.5 * std::pow(10.0, -opt.snr_db / 10.0));
    for (auto& v : cube.data) {
      const double a = gauss(rng);
      const double b = gauss(rng);
      v += cdouble(sigma * a, sigma * b);
    }
  }
  return cube;
}

}  // namespace mct
