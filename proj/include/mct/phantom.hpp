#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mct/image.hpp"

namespace mct {

struct Material {
  double re = 0.0;  // nepers per pixel length
  double im = 0.0;  // radians per pixel length

  bool operator==(const Material&) const = default;
};

// Default tissue presets, per pixel length of the default 61 x 61 / 30 cm grid.
namespace materials {
inline constexpr Material kFlesh{0.18, 0.35};
inline constexpr Material kBone{0.10, 0.13};
}  // namespace materials

enum class Shape { kEllipse, kDisc };

// One filled primitive. For discs only semi_a is used (the radius).
struct Primitive {
  Shape shape = Shape::kEllipse;
  double cx = 0.0, cy = 0.0;          // meters
  double semi_a = 0.0, semi_b = 0.0;  // meters
  double rotation = 0.0;              // radians, counter-clockwise
  Material material;

  bool contains(double x, double y) const;
  // Axis-aligned half extents of the primitive.
  std::pair<double, double> half_extents() const;
  double area() const;
  std::string describe() const;
};

// Ordered primitive list; later primitives overwrite earlier ones.
struct PhantomSpec {
  std::vector<Primitive> primitives;
  std::map<std::string, std::string> attributes;  // free-form "key = value" lines

  // Rotate every primitive about the origin by phi (counter-clockwise).
  PhantomSpec rotated(double phi) const;
  // Mirror y -> -y.
  PhantomSpec mirrored_y() const;
};

// Rasterize by pixel-center sampling. Throws InvalidArgument naming the
// first primitive that leaves the imaging square or has negative material.
ComplexImage rasterize(const PhantomSpec& spec, const GridSpec& grid,
                       double ref_frequency = 5.5e9);

struct RandomPhantomConfig {
  int min_primitives = 1;
  int max_primitives = 4;
  double min_re = 0.02, max_re = 0.25;
  double min_im = 0.04, max_im = 0.45;
  double min_semi_axis = 0.01, max_semi_axis = 0.06;  // meters
  // Primitives are kept inside this radius so that the outermost virtual
  // rays of the default geometry always traverse air.
  double max_radius = 0.115;  // meters
};

struct RandomPhantom {
  PhantomSpec spec;
  ComplexImage image;
};

RandomPhantom random_phantom(std::uint64_t seed, const RandomPhantomConfig& cfg,
                             const GridSpec& grid, double ref_frequency = 5.5e9);

namespace presets {
// Flesh ellipse 8 cm x 5 cm with two bone discs.
PhantomSpec forearm();
// Two flesh discs of different size, used for round-trip checks.
PhantomSpec two_disc();
// Solid flesh disc of the given radius centered in the grid.
PhantomSpec solid_disc(double radius, Material m = materials::kFlesh);
}  // namespace presets

// Human-editable text form:
//   # comment
//   name = forearm
//   ellipse cx=0 cy=0 a=0.04 b=0.025 rot=0 re=0.18 im=0.35
//   disc cx=0.01 cy=0 r=0.008 re=0.10 im=0.13
// Also accepts "flesh"/"bone" for the material via "material=" instead of re/im.
PhantomSpec parse_phantom_spec(std::istream& in, const std::string& source_name = "<phantom>");
PhantomSpec load_phantom_spec(const std::string& path);
void write_phantom_spec(std::ostream& out, const PhantomSpec& spec);

}  // namespace mct
