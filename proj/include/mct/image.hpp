#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mct {

using cdouble = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kSpeedOfLight = 299792458.0;

// Square pixel raster centered on the rotation axis. Pixel (ix, iy) has its
// center at ((ix + 0.5 - width/2) * pixel_size, (iy + 0.5 - height/2) * pixel_size);
// flat index is iy * width + ix.
struct GridSpec {
  int width = 61;
  int height = 61;
  double pixel_size = 0.30 / 61.0;  // meters

  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
  double half_width() const { return 0.5 * width * pixel_size; }
  double half_height() const { return 0.5 * height * pixel_size; }
  double center_x(int ix) const { return (ix + 0.5 - 0.5 * width) * pixel_size; }
  double center_y(int iy) const { return (iy + 0.5 - 0.5 * height) * pixel_size; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * width + ix;
  }

  bool operator==(const GridSpec&) const = default;
};

// Complex propagation-constant map, excess over air. re is the attenuation
// constant (nepers per pixel length), im the phase constant (radians per pixel
// length) at ref_frequency.
struct ComplexImage {
  GridSpec grid;
  double ref_frequency = 5.5e9;
  std::vector<double> re;
  std::vector<double> im;

  ComplexImage() = default;
  explicit ComplexImage(const GridSpec& g, double f_ref = 5.5e9)
      : grid(g), ref_frequency(f_ref), re(g.size(), 0.0), im(g.size(), 0.0) {}

  int width() const { return grid.width; }
  int height() const { return grid.height; }
  std::size_t size() const { return re.size(); }
  cdouble at(std::size_t i) const { return {re[i], im[i]}; }
  cdouble at(int ix, int iy) const { return at(grid.index(ix, iy)); }
  void set(std::size_t i, cdouble v) {
    re[i] = v.real();
    im[i] = v.imag();
  }

  // Both channels non-negative everywhere.
  bool is_physical() const;
};

}  // namespace mct
