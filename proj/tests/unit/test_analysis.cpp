#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include <zlib.h>

#include "doctest.h"
#include "mct/analysis.hpp"
#include "mct/error.hpp"
#include "mct/phantom.hpp"

using namespace mct;

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

// Inflates the concatenated IDAT chunks and strips the per-row filter bytes.
std::vector<std::uint8_t> png_pixels(const std::vector<std::uint8_t>& png, int& w, int& h) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(png.size() > 8);
  REQUIRE(std::memcmp(png.data(), sig, 8) == 0);
  std::vector<std::uint8_t> idat;
  std::size_t at = 8;
  while (at + 12 <= png.size()) {
    const std::uint32_t len = be32(png, at);
    const std::string type(png.begin() + at + 4, png.begin() + at + 8);
    const std::uint8_t* body = png.data() + at + 8;
    const std::uint32_t crc = be32(png, at + 8 + len);
    CHECK(crc == crc32(crc32(0, png.data() + at + 4, 4), body, len));
    if (type == "IHDR") {
      w = static_cast<int>(be32(png, at + 8));
      h = static_cast<int>(be32(png, at + 12));
      CHECK(body[8] == 8);  // bit depth
      CHECK(body[9] == 2);  // truecolor
    }
    if (type == "IDAT") idat.insert(idat.end(), body, body + len);
    at += 12 + len;
  }
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (1 + 3 * w));
  uLongf n = raw.size();
  REQUIRE(uncompress(raw.data(), &n, idat.data(), idat.size()) == Z_OK);
  REQUIRE(n == raw.size());
  std::vector<std::uint8_t> px;
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * (1 + 3 * w);
    CHECK(raw[row] == 0);
    px.insert(px.end(), raw.begin() + row + 1, raw.begin() + row + 1 + 3 * w);
  }
  return px;
}

ComplexImage ramp_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  ComplexImage img(GridSpec{});
  for (std::size_t i = 0; i < img.size(); ++i) img.set(i, {u(rng), u(rng)});
  img.set(7, {1.0, 1.0});
  return img;
}

LabelMap labels_from_materials(const ComplexImage& img) {
  LabelMap m;
  m.grid = img.grid;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const cdouble v = img.at(i);
    if (v == cdouble(0.0, 0.0)) m.labels.push_back(Label::kAir);
    else if (v == cdouble(materials::kBone.re, materials::kBone.im)) m.labels.push_back(Label::kBone);
    else m.labels.push_back(Label::kFlesh);
  }
  return m;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("identical images") {
  const ComplexImage x = rasterize(presets::forearm(), GridSpec{});
  const MetricReport r = metrics(x, x);
  CHECK(r.re.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.im.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.joint.mae == 0.0);
  CHECK(r.joint.rmse == 0.0);
  CHECK(r.re.psnr_db >= 120.0);
  CHECK(r.headline_psnr() >= 120.0);
}

TEST_CASE("uniform error of 0.1") {
  const ComplexImage truth = ramp_image(1);
  ComplexImage recon = truth;
  for (std::size_t i = 0; i < recon.size(); ++i) recon.set(i, truth.at(i) - cdouble(0.1, 0.1));
  const MetricReport r = metrics(recon, truth);
  for (const ChannelMetrics* c : {&r.re, &r.im, &r.joint}) {
    CHECK(c->mae == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(c->rmse == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(c->psnr_db == doctest::Approx(20.0).epsilon(1e-9));
  }
  CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0));
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
}

TEST_CASE("ssim is symmetric and bounded") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    std::vector<double> a(61 * 61), b(61 * 61);
    for (auto& v : a) v = u(rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = k % 2 ? u(rng) : 1.0 - a[i];
    const double ab = ssim(a, b, 61, 61), ba = ssim(b, a, 61, 61);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);
  }
  CHECK_THROWS_AS(ssim(std::vector<double>(10), std::vector<double>(11), 61, 61), InvalidArgument);
}

TEST_CASE("psnr falls with noise variance") {
  const ComplexImage truth = rasterize(presets::forearm(), GridSpec{});
  double last = 1e9;
  for (double sigma : {0.005, 0.01, 0.02, 0.05, 0.1}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g(0.0, sigma);
      ComplexImage noisy = truth;
      for (std::size_t i = 0; i < noisy.size(); ++i) {
        noisy.re[i] += g(rng) * materials::kFlesh.re;
        noisy.im[i] += g(rng) * materials::kFlesh.im;
      }
      mean += metrics(noisy, truth).headline_psnr() / 20.0;
    }
    CHECK(mean < last);
    last = mean;
  }
}

TEST_CASE("report invariants and aggregation") {
  std::vector<MetricReport> reports;
  const ComplexImage truth = rasterize(presets::forearm(), GridSpec{});
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.03);
    ComplexImage noisy = truth;
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy.re[i] = std::max(0.0, noisy.re[i] + g(rng));
    const MetricReport r = metrics(noisy, truth);
    for (const ChannelMetrics* c : {&r.re, &r.im, &r.joint}) {
      CHECK(c->rmse >= c->mae);
      CHECK(c->mae >= 0.0);
      CHECK(c->ssim <= 1.0);
      CHECK(c->ssim >= -1.0);
    }
    reports.push_back(r);
  }
  const AggregateReport a = aggregate(reports);
  CHECK(a.count == 4);
  double mean = 0.0;
  for (const auto& r : reports) mean += r.headline_ssim() / 4;
  CHECK(a.ssim.mean == doctest::Approx(mean));
  CHECK(a.ssim.std >= 0.0);

  std::ostringstream csv;
  write_metrics_csv(csv, {"a", "b", "c", "d"}, reports);
  std::istringstream lines(csv.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "name,ssim_re,ssim_im,ssim,psnr_re,psnr_im,psnr,mae,rmse");
  int rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  CHECK(rows == 4);
  CHECK_THROWS_AS(metrics(truth, ComplexImage(GridSpec{40, 40, 0.01})), InvalidArgument);
}

TEST_CASE("gradient energy") {
  CHECK(gradient_energy(ComplexImage(GridSpec{})) == 0.0);
  CHECK(gradient_energy(rasterize(presets::forearm(), GridSpec{})) > 0.0);
}

TEST_CASE("edge gradient energy counts only truth boundaries") {
  GridSpec g;
  g.width = g.height = 4;
  ComplexImage truth(g), img(g);
  // Truth: left half 1, right half 0. Image adds a step inside the left half.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) truth.re[g.index(x, y)] = 1.0;
  for (int y = 0; y < 4; ++y) {
    img.re[g.index(0, y)] = 1.0;
    img.re[g.index(1, y)] = 0.5;
  }
  // Four boundary pairs (x = 1 | x = 2), each (0.5 - 0)^2.
  CHECK(edge_gradient_energy(img, truth) == doctest::Approx(1.0));
  CHECK(edge_gradient_energy(truth, truth) == doctest::Approx(4.0));
  CHECK(edge_gradient_energy(ComplexImage(g), truth) == 0.0);
  CHECK_THROWS_AS(edge_gradient_energy(img, ComplexImage(GridSpec{})), InvalidArgument);
}

TEST_CASE("zero image renders black") {
  const RgbImage rgb = visualize(ComplexImage(GridSpec{}));
  CHECK(rgb.width == 61);
  CHECK(rgb.height == 61);
  CHECK(std::all_of(rgb.pixels.begin(), rgb.pixels.end(), [](std::uint8_t v) { return v == 0; }));
  int w = 0, h = 0;
  const auto px = png_pixels(encode_png(rgb), w, h);
  CHECK(w == 61);
  CHECK(h == 61);
  CHECK(px == rgb.pixels);
}

TEST_CASE("attenuation-only image renders yellow") {
  ComplexImage img = rasterize(presets::forearm(), GridSpec{});
  for (double& v : img.im) v = 0.0;
  const RgbImage rgb = visualize(img);
  int lit = 0;
  for (std::size_t i = 0; i < rgb.pixels.size(); i += 3) {
    CHECK(rgb.pixels[i] == rgb.pixels[i + 1]);
    CHECK(rgb.pixels[i + 2] == 0);
    lit += rgb.pixels[i] > 0;
  }
  CHECK(lit > 0);
  int w = 0, h = 0;
  CHECK(png_pixels(encode_png(rgb), w, h) == rgb.pixels);
  CHECK(encode_png(rgb) == encode_png(visualize(img)));
}

TEST_CASE("bone renders yellow and flesh white") {
  const GridSpec grid;
  const ComplexImage img = rasterize(presets::forearm(), grid);
  const RgbImage rgb = visualize(img);
  int bones = 0, flesh = 0;
  for (int iy = 0; iy < grid.height; ++iy)
    for (int ix = 0; ix < grid.width; ++ix) {
      const cdouble v = img.at(ix, iy);
      // Rows are flipped so that +y is up.
      const std::size_t p = 3 * (static_cast<std::size_t>(grid.height - 1 - iy) * grid.width + ix);
      const std::uint8_t r = rgb.pixels[p], g = rgb.pixels[p + 1], b = rgb.pixels[p + 2];
      if (v == cdouble(materials::kBone.re, materials::kBone.im)) {
        ++bones;
        CHECK(r == g);
        CHECK(r > b);
      } else if (v == cdouble(materials::kFlesh.re, materials::kFlesh.im)) {
        ++flesh;
        CHECK(r == 255);
        CHECK(g == 255);
        CHECK(b == 255);
      }
    }
  CHECK(bones > 0);
  CHECK(flesh > 0);
}

TEST_CASE("segmenting a blank image gives air") {
  const LabelMap m = segment(ComplexImage(GridSpec{}));
  CHECK(m.count(Label::kAir) == 61 * 61);
  CHECK(m.n_clusters == 1);
}

TEST_CASE("exact two-material phantom segments perfectly") {
  const ComplexImage img = rasterize(presets::forearm(), GridSpec{});
  const LabelMap truth = labels_from_materials(img);
  const LabelMap m = segment(img, 3);
  CHECK(m.n_clusters == 3);
  CHECK(m.labels == truth.labels);
  CHECK(use_case_measures(m, img, truth).segmentation_score == 1.0);

  // Flesh alone stays flesh; a lone bone material is called bone.
  const ComplexImage disc = rasterize(presets::solid_disc(0.04), GridSpec{});
  CHECK(segment(disc).count(Label::kFlesh) > 0);
  const ComplexImage bone = rasterize(presets::solid_disc(0.02, materials::kBone), GridSpec{});
  CHECK(segment(bone).count(Label::kBone) > 0);
}

TEST_CASE("segmentation ignores pixel order") {
  ComplexImage img = rasterize(presets::forearm(), GridSpec{});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.02);
  for (std::size_t i = 0; i < img.size(); ++i) img.set(i, img.at(i) + cdouble(std::abs(g(rng)), std::abs(g(rng))));
  std::vector<std::size_t> perm(img.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ComplexImage shuffled = img;
  for (std::size_t i = 0; i < img.size(); ++i) shuffled.set(i, img.at(perm[i]));
  const LabelMap a = segment(img, 4), b = segment(shuffled, 4);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(b.labels[i] == a.labels[perm[i]]);
}

TEST_CASE("use-case measures") {
  const GridSpec grid;
  const ComplexImage img = rasterize(presets::forearm(), grid);
  const LabelMap truth = labels_from_materials(img);
  const UseCaseMeasures same = use_case_measures(truth, img, truth);
  CHECK(same.segmentation_score == 1.0);
  REQUIRE(same.bone_muscle_ratio_error);
  CHECK(*same.bone_muscle_ratio_error == 0.0);
  REQUIRE(same.bone_centroid_error_mm);
  CHECK(*same.bone_centroid_error_mm == 0.0);
  REQUIRE(same.mean_bone_absorption);
  CHECK(*same.mean_bone_absorption == doctest::Approx(materials::kBone.re));

  LabelMap shifted = truth;
  for (int iy = 0; iy < grid.height; ++iy)
    for (int ix = 0; ix < grid.width; ++ix)
      shifted.labels[grid.index(ix, iy)] = ix > 0 ? truth.labels[grid.index(ix - 1, iy)] : Label::kAir;
  const UseCaseMeasures moved = use_case_measures(shifted, img, truth);
  REQUIRE(moved.bone_centroid_error_mm);
  CHECK(*moved.bone_centroid_error_mm == doctest::Approx(1000.0 * 0.30 / 61).epsilon(1e-9));
  CHECK(*moved.bone_centroid_error_mm == doctest::Approx(4.918).epsilon(1e-3));
  CHECK(moved.segmentation_score < 1.0);

  const ComplexImage flesh = rasterize(presets::solid_disc(0.04), grid);
  const LabelMap fl = labels_from_materials(flesh);
  const UseCaseMeasures none = use_case_measures(fl, flesh, fl);
  CHECK_FALSE(none.bone_muscle_ratio_error.has_value());
  CHECK_FALSE(none.bone_centroid_error_mm.has_value());
  CHECK_FALSE(none.mean_bone_absorption.has_value());
  CHECK(none.segmentation_score == 1.0);
}

}
