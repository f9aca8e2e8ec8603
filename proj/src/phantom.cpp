#include "mct/phantom.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "mct/error.hpp"

namespace mct {

bool Primitive::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  if (shape == Shape::kDisc) return dx * dx + dy * dy <= semi_a * semi_a;
  const double c = std::cos(rotation), s = std::sin(rotation);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return (u * u) / (semi_a * semi_a) + (v * v) / (semi_b * semi_b) <= 1.0;
}

std::pair<double, double> Primitive::half_extents() const {
  if (shape == Shape::kDisc) return {semi_a, semi_a};
  const double c = std::cos(rotation), s = std::sin(rotation);
  return {std::sqrt(semi_a * semi_a * c * c + semi_b * semi_b * s * s),
          std::sqrt(semi_a * semi_a * s * s + semi_b * semi_b * c * c)};
}

double Primitive::area() const {
  return shape == Shape::kDisc ? kPi * semi_a * semi_a : kPi * semi_a * semi_b;
}

std::string Primitive::describe() const {
  std::ostringstream os;
  os << std::setprecision(17);
  if (shape == Shape::kDisc) {
    os << "disc cx=" << cx << " cy=" << cy << " r=" << semi_a;
  } else {
    os << "ellipse cx=" << cx << " cy=" << cy << " a=" << semi_a << " b=" << semi_b
       << " rot=" << rotation;
  }
  os << " re=" << material.re << " im=" << material.im;
  return os.str();
}

PhantomSpec PhantomSpec::rotated(double phi) const {
  PhantomSpec out = *this;
  const double c = std::cos(phi), s = std::sin(phi);
  for (auto& p : out.primitives) {
    const double x = p.cx, y = p.cy;
    p.cx = c * x - s * y;
    p.cy = s * x + c * y;
    p.rotation += phi;
  }
  return out;
}

PhantomSpec PhantomSpec::mirrored_y() const {
  PhantomSpec out = *this;
  for (auto& p : out.primitives) {
    p.cy = -p.cy;
    p.rotation = -p.rotation;
  }
  return out;
}

namespace {

void validate(const Primitive& p, const GridSpec& grid) {
  const bool bad_axes = !(p.semi_a > 0.0) || (p.shape == Shape::kEllipse && !(p.semi_b > 0.0));
  if (bad_axes) throw InvalidArgument("primitive has non-positive size: " + p.describe());
  if (!(p.material.re >= 0.0) || !(p.material.im >= 0.0))
    throw InvalidArgument("primitive has negative material: " + p.describe());
  const auto [hx, hy] = p.half_extents();
  const double tol = 1e-12;
  if (p.cx - hx < -grid.half_width() - tol || p.cx + hx > grid.half_width() + tol ||
      p.cy - hy < -grid.half_height() - tol || p.cy + hy > grid.half_height() + tol) {
    throw InvalidArgument("primitive outside the imaging square: " + p.describe());
  }
}

}  // namespace

ComplexImage rasterize(const PhantomSpec& spec, const GridSpec& grid, double ref_frequency) {
  if (grid.width <= 0 || grid.height <= 0 || !(grid.pixel_size > 0.0))
    throw InvalidArgument("rasterize: invalid grid");
  for (const auto& p : spec.primitives) validate(p, grid);

  ComplexImage img(grid, ref_frequency);
  for (const auto& p : spec.primitives) {
    const auto [hx, hy] = p.half_extents();
    // Only visit pixels whose center can fall inside the bounding box.
    const int ix0 = std::max(0, static_cast<int>(std::floor((p.cx - hx) / grid.pixel_size + 0.5 * grid.width - 0.5)));
    const int ix1 = std::min(grid.width - 1, static_cast<int>(std::ceil((p.cx + hx) / grid.pixel_size + 0.5 * grid.width - 0.5)));
    const int iy0 = std::max(0, static_cast<int>(std::floor((p.cy - hy) / grid.pixel_size + 0.5 * grid.height - 0.5)));
    const int iy1 = std::min(grid.height - 1, static_cast<int>(std::ceil((p.cy + hy) / grid.pixel_size + 0.5 * grid.height - 0.5)));
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) {
        if (p.contains(grid.center_x(ix), grid.center_y(iy))) {
          const auto k = grid.index(ix, iy);
          img.re[k] = p.material.re;
          img.im[k] = p.material.im;
        }
      }
    }
  }
  return img;
}

RandomPhantom random_phantom(std::uint64_t seed, const RandomPhantomConfig& cfg,
                             const GridSpec& grid, double ref_frequency) {
  if (cfg.min_primitives < 1 || cfg.min_primitives > cfg.max_primitives)
    throw InvalidArgument("random_phantom: invalid primitive count range");
  if (cfg.min_re > cfg.max_re || cfg.min_im > cfg.max_im ||
      cfg.min_semi_axis > cfg.max_semi_axis || !(cfg.min_semi_axis > 0.0))
    throw InvalidArgument("random_phantom: degenerate range (min > max)");
  if (cfg.min_re < 0.0 || cfg.min_im < 0.0)
    throw InvalidArgument("random_phantom: materials must be non-negative");
  const double limit = std::min(cfg.max_radius, std::min(grid.half_width(), grid.half_height()));
  if (cfg.min_semi_axis >= limit)
    throw InvalidArgument("random_phantom: primitives cannot fit inside max_radius");

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  };
  const int n = std::uniform_int_distribution<int>(cfg.min_primitives, cfg.max_primitives)(rng);

  RandomPhantom out;
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.shape = Shape::kEllipse;
    const double max_axis = std::min(cfg.max_semi_axis, 0.95 * limit);
    p.semi_a = uniform(cfg.min_semi_axis, max_axis);
    p.semi_b = uniform(cfg.min_semi_axis, max_axis);
    p.rotation = uniform(0.0, kPi);
    // Center uniformly in the disc that keeps the whole ellipse within limit.
    const double reach = limit - std::max(p.semi_a, p.semi_b);
    const double rad = reach * std::sqrt(uniform(0.0, 1.0));
    const double ang = uniform(0.0, 2.0 * kPi);
    p.cx = rad * std::cos(ang);
    p.cy = rad * std::sin(ang);
    p.material = {uniform(cfg.min_re, cfg.max_re), uniform(cfg.min_im, cfg.max_im)};
    out.spec.primitives.push_back(p);
  }
  out.image = rasterize(out.spec, grid, ref_frequency);
  return out;
}

namespace presets {

PhantomSpec forearm() {
  PhantomSpec s;
  s.attributes["name"] = "forearm";
  s.primitives.push_back({Shape::kEllipse, 0.0, 0.0, 0.04, 0.025, 0.0, materials::kFlesh});
  s.primitives.push_back({Shape::kDisc, -0.014, 0.003, 0.0095, 0.0, 0.0, materials::kBone});
  s.primitives.push_back({Shape::kDisc, 0.016, -0.004, 0.0080, 0.0, 0.0, materials::kBone});
  return s;
}

PhantomSpec two_disc() {
  PhantomSpec s;
  s.attributes["name"] = "two_disc";
  s.primitives.push_back({Shape::kDisc, -0.030, 0.010, 0.030, 0.0, 0.0, materials::kFlesh});
  s.primitives.push_back({Shape::kDisc, 0.040, -0.020, 0.020, 0.0, 0.0, materials::kFlesh});
  return s;
}

PhantomSpec solid_disc(double radius, Material m) {
  PhantomSpec s;
  s.attributes["name"] = "solid_disc";
  s.primitives.push_back({Shape::kDisc, 0.0, 0.0, radius, 0.0, 0.0, m});
  return s;
}

}  // namespace presets

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

PhantomSpec parse_phantom_spec(std::istream& in, const std::string& source_name) {
  PhantomSpec spec;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;

    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head != "ellipse" && head != "disc") {
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(source_name, line_no, "expected 'key = value' or a primitive");
      spec.attributes[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      continue;
    }

    Primitive p;
    p.shape = head == "disc" ? Shape::kDisc : Shape::kEllipse;
    bool has_material = false;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw ConfigError(source_name, line_no, "bad token '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "material") {
        if (val == "flesh") p.material = materials::kFlesh;
        else if (val == "bone") p.material = materials::kBone;
        else throw ConfigError(source_name, line_no, "unknown material '" + val + "'");
        has_material = true;
        continue;
      }
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
      } catch (const std::exception&) {
        throw ConfigError(source_name, line_no, "field '" + key + "' is not a number");
      }
      if (key == "cx") p.cx = v;
      else if (key == "cy") p.cy = v;
      else if (key == "r" || key == "a") p.semi_a = v;
      else if (key == "b") p.semi_b = v;
      else if (key == "rot") p.rotation = v;
      else if (key == "re") { p.material.re = v; has_material = true; }
      else if (key == "im") { p.material.im = v; has_material = true; }
      else throw ConfigError(source_name, line_no, "unknown field '" + key + "'");
    }
    if (!has_material) throw ConfigError(source_name, line_no, "primitive has no material");
    if (p.shape == Shape::kDisc) p.semi_b = p.semi_a;
    spec.primitives.push_back(p);
  }
  return spec;
}

PhantomSpec load_phantom_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phantom spec '" + path + "'");
  return parse_phantom_spec(in, path);
}

void write_phantom_spec(std::ostream& out, const PhantomSpec& spec) {
  for (const auto& [k, v] : spec.attributes) out << k << " = " << v << "\n";
  for (const auto& p : spec.primitives) out << p.describe() << "\n";
}

}  // namespace mct
