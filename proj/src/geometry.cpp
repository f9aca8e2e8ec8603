#include "mct/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mct/error.hpp"
#include "mct/parallel.hpp"

namespace mct {

std::vector<double> ScanGeometry::default_frequencies() {
  std::vector<double> f;
  for (int i = 0; i <= 10; ++i) f.push_back(5.0e9 + 1.0e8 * i);
  return f;
}

int ScanGeometry::subrays_per_ray() const {
  return static_cast<int>(std::lround(aperture_width / (2.0 * subray_halfwidth)));
}

void ScanGeometry::validate() const {
  if (n_rot < 1 || !(rot_step > 0.0))
    throw InvalidArgument("geometry: need n_rot >= 1 and rot_step > 0");
  if (std::abs(n_rot * rot_step - 2.0 * kPi) > 1e-9 * 2.0 * kPi)
    throw InvalidArgument("geometry: n_rot * rot_step must cover [0, 2pi) exactly");
  if (n_disp < 1 || !(disp_step > 0.0))
    throw InvalidArgument("geometry: need n_disp >= 1 and disp_step > 0");
  if (!(subray_halfwidth > 0.0) || aperture_width < 2.0 * subray_halfwidth * (1.0 - 1e-9))
    throw InvalidArgument("geometry: aperture width must be at least 2 * sub-ray half-width");
  if (subrays_per_ray() < 1) throw InvalidArgument("geometry: N_z must be >= 1");
  if (grid.width < 1 || grid.height < 1 || !(grid.pixel_size > 0.0))
    throw InvalidArgument("geometry: invalid grid");
  if (!allow_underdetermined && grid.size() > n_rays())
    throw InvalidArgument("geometry: unsolvable, N_x*N_y > N_r*N_theta");
  if (frequencies.empty()) throw InvalidArgument("geometry: no frequencies");
  for (double f : frequencies)
    if (!(f > 0.0)) throw InvalidArgument("geometry: frequencies must be positive");
  if (!(antenna_distance > 0.0)) throw InvalidArgument("geometry: antenna distance must be positive");
}

std::string ScanGeometry::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "n_rot=" << n_rot << ";rot_step=" << rot_step << ";n_disp=" << n_disp
     << ";disp_step=" << disp_step << ";disp_offset=" << disp_offset << ";aperture=" << aperture_width
     << ";delta=" << subray_halfwidth << ";z0=" << antenna_distance << ";grid=" << grid.width
     << "x" << grid.height << "@" << grid.pixel_size << ";freqs=";
  for (double f : frequencies) os << f << ",";
  return os.str();
}

std::string ScanGeometry::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScanGeometry ScanGeometry::decimated(int disp_factor, int rot_factor) const {
  if (disp_factor < 1 || rot_factor < 1) throw InvalidArgument("decimation factor must be >= 1");
  ScanGeometry g = *this;
  g.n_disp = (n_disp + disp_factor - 1) / disp_factor;
  g.disp_step = disp_step * disp_factor;
  // Keep indices 0, f, 2f, ... so the retained rays sit where they were.
  g.disp_offset = disp_offset + 0.5 * disp_step * (disp_factor * (g.n_disp - 1) - (n_disp - 1));
  g.subray_halfwidth = subray_halfwidth * disp_factor;
  if (n_rot % rot_factor != 0) throw InvalidArgument("rotation decimation must divide n_rot");
  g.n_rot = n_rot / rot_factor;
  g.rot_step = rot_step * rot_factor;
  g.allow_underdetermined = true;
  return g;
}

Line ray_line(double theta, double offset) {
  double c = std::cos(theta), s = std::sin(theta);
  if (std::abs(c) < 1e-15) c = 0.0;
  if (std::abs(s) < 1e-15) s = 0.0;
  return Line{{-s * offset, c * offset}, {c, s}};
}

namespace {

// Parametric interval [t0, t1] of the line inside the grid box (direction
// normalized). Returns false on a miss. Uses half-open bounds for lines
// parallel to an axis.
bool clip_to_grid(const Line& line, const GridSpec& grid, double& t0, double& t1) {
  const double bx = grid.half_width(), by = grid.half_height();
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  auto slab = [&](double p, double d, double lo, double hi) {
    if (d == 0.0) return p >= lo && p < hi;
    double a = (lo - p) / d, b = (hi - p) / d;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    return true;
  };
  if (!slab(line.point.x, line.direction.x, -bx, bx)) return false;
  if (!slab(line.point.y, line.direction.y, -by, by)) return false;
  return t1 > t0;
}

Line normalized(const Line& line) {
  const double n = std::hypot(line.direction.x, line.direction.y);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("line direction must be non-zero");
  return Line{line.point, {line.direction.x / n, line.direction.y / n}};
}

}  // namespace

double chord_length(const Line& line_in, const GridSpec& grid) {
  const Line line = normalized(line_in);
  double t0, t1;
  if (!clip_to_grid(line, grid, t0, t1)) return 0.0;
  return (t1 - t0) / grid.pixel_size;
}

PixelRow ray_pixel_lengths(const Line& line_in, const GridSpec& grid) {
  const Line line = normalized(line_in);
  PixelRow row;
  double t0, t1;
  if (!clip_to_grid(line, grid, t0, t1)) return row;

  const double p = grid.pixel_size;
  const double x0 = -grid.half_width(), y0 = -grid.half_height();
  const auto& [px, py] = line.point;
  const auto& [dx, dy] = line.direction;

  // Plane crossings strictly inside (t0, t1), merged with the end points.
  std::vector<double> ts;
  ts.reserve(grid.width + grid.height + 4);
  ts.push_back(t0);
  auto add_planes = [&](double origin, double d, double start, int n) {
    if (d == 0.0) return;
    for (int i = 0; i <= n; ++i) {
      const double t = (start + i * p - origin) / d;
      if (t > t0 && t < t1) ts.push_back(t);
    }
  };
  add_planes(px, dx, x0, grid.width);
  add_planes(py, dy, y0, grid.height);
  ts.push_back(t1);
  std::sort(ts.begin(), ts.end());

  const double eps = 1e-12 * (t1 - t0);
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double len = ts[k + 1] - ts[k];
    if (len <= eps) continue;
    const double tm = 0.5 * (ts[k] + ts[k + 1]);
    int ix = static_cast<int>(std::floor((px + tm * dx - x0) / p));
    int iy = static_cast<int>(std::floor((py + tm * dy - y0) / p));
    ix = std::clamp(ix, 0, grid.width - 1);
    iy = std::clamp(iy, 0, grid.height - 1);
    const int idx = static_cast<int>(grid.index(ix, iy));
    if (!row.empty() && row.back().first == idx) {
      row.back().second += len / p;
    } else {
      row.emplace_back(idx, len / p);
    }
  }
  return row;
}

SparseSystem build_system(const ScanGeometry& geom) {
  geom.validate();
  const int nz = geom.subrays_per_ray();
  const double sub_step = 2.0 * geom.subray_halfwidth;

  // All sub-ray offsets, deduplicated into virtual rays.
  std::vector<double> offsets;
  offsets.reserve(static_cast<std::size_t>(geom.n_disp) * nz);
  auto subray_offset = [&](int i, int k) {
    return geom.displacement(i) + (k - 0.5 * (nz - 1)) * sub_step;
  };
  for (int i = 0; i < geom.n_disp; ++i)
    for (int k = 0; k < nz; ++k) offsets.push_back(subray_offset(i, k));
  std::sort(offsets.begin(), offsets.end());
  const double tol = 1e-6 * geom.subray_halfwidth;
  std::vector<double> virt;
  for (double u : offsets)
    if (virt.empty() || u - virt.back() > tol) virt.push_back(u);

  auto virtual_index = [&](double u) {
    auto it = std::lower_bound(virt.begin(), virt.end(), u - tol);
    return static_cast<int>(it - virt.begin());
  };

  SparseSystem sys;
  sys.grid = geom.grid;
  sys.n_rot = geom.n_rot;
  sys.n_disp = geom.n_disp;
  sys.n_subrays = nz;
  sys.n_virtual = static_cast<int>(virt.size());
  sys.virtual_offsets = virt;
  sys.geometry_hash = geom.hash();
  for (int t = 0; t < geom.n_rot; ++t) sys.rotations.push_back(geom.rotation(t));

  // Sub-ray rows, one block per rotation.
  std::vector<std::vector<PixelRow>> blocks(geom.n_rot);
  parallel_for(geom.n_rot, [&](std::size_t t) {
    auto& rows = blocks[t];
    rows.reserve(virt.size());
    for (double u : virt) {
      PixelRow r = ray_pixel_lengths(ray_line(sys.rotations[t], u), geom.grid);
      std::sort(r.begin(), r.end());
      rows.push_back(std::move(r));
    }
  });

  std::vector<Eigen::Triplet<double, int>> trip;
  std::size_t nnz = 0;
  for (const auto& b : blocks)
    for (const auto& r : b) nnz += r.size();
  trip.reserve(nnz);
  for (int t = 0; t < geom.n_rot; ++t)
    for (int v = 0; v < sys.n_virtual; ++v)
      for (const auto& [col, len] : blocks[t][v])
        trip.emplace_back(static_cast<int>(sys.virtual_row(v, t)), col, len);
  sys.subray_projector.resize(sys.n_virtual * geom.n_rot, static_cast<int>(geom.grid.size()));
  sys.subray_projector.setFromTriplets(trip.begin(), trip.end());

  trip.clear();
  const double w = 1.0 / nz;
  for (int t = 0; t < geom.n_rot; ++t)
    for (int i = 0; i < geom.n_disp; ++i)
      for (int k = 0; k < nz; ++k)
        trip.emplace_back(static_cast<int>(sys.ray_row(i, t)),
                          static_cast<int>(sys.virtual_row(virtual_index(subray_offset(i, k)), t)), w);
  sys.ray_aggregation.resize(geom.n_disp * geom.n_rot, sys.n_virtual * geom.n_rot);
  sys.ray_aggregation.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

SparseMatrix whole_ray_projector(const SparseSystem& sys) {
  SparseMatrix m = sys.ray_aggregation * sys.subray_projector;
  m.prune(0.0);
  return m;
}

}  // namespace mct
