#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mct/image.hpp"

namespace mct {

struct ChannelMetrics {
  double ssim = 0.0;
  double psnr_db = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
};

// re and im are per channel; joint pools both channels (its ssim is the mean
// of the two SSIM maps). The headline numbers are per-channel means.
struct MetricReport {
  ChannelMetrics re, im, joint;
  double headline_ssim() const { return 0.5 * (re.ssim + im.ssim); }
  double headline_psnr() const { return 0.5 * (re.psnr_db + im.psnr_db); }
};

constexpr double kPsnrCap = 120.0;

// Gaussian-window SSIM (7x7, sigma 1.5, K1 0.01, K2 0.03, L = 1) averaged
// over the valid region. Inputs are row-major, already on [0, 1].
double ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height);
double psnr_from_mse(double mse);

// Both images are divided by the truth maximum of each channel; the
// reconstruction is then clipped to [0, 1].
MetricReport metrics(const ComplexImage& recon, const ComplexImage& truth);

struct MetricStats {
  double mean = 0.0;
  double std = 0.0;
};

struct AggregateReport {
  std::size_t count = 0;
  MetricStats ssim_re, ssim_im, ssim, psnr_re, psnr_im, psnr, mae, rmse;
};

AggregateReport aggregate(const std::vector<MetricReport>& reports);

// One row per image, columns name,ssim_re,ssim_im,ssim,psnr_re,psnr_im,psnr,mae,rmse.
void write_metrics_csv(std::ostream& out, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports);
std::string format_report(const MetricReport& r);
std::string format_aggregate(const AggregateReport& a);

// Sum of squared forward differences of |S| after dividing by max |S|.
double gradient_energy(const ComplexImage& img);

// As gradient_energy, restricted to neighbour pairs whose truth values differ.
double edge_gradient_energy(const ComplexImage& img, const ComplexImage& truth);

// ---- Visualization ----------------------------------------------------------

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB, row 0 at the top
};

// R = G = re, B = im, each channel divided by its own maximum (0 stays 0).
// Image rows are flipped so that +y points up.
RgbImage visualize(const ComplexImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& rgb);
void write_png(const std::string& path, const RgbImage& rgb);

// ---- Segmentation -----------------------------------------------------------

enum class Label : std::uint8_t { kAir = 0, kFlesh = 1, kBone = 2 };

struct LabelMap {
  GridSpec grid;
  std::vector<Label> labels;
  std::array<std::optional<cdouble>, 3> centroids;  // indexed by Label
  int n_clusters = 0;

  std::size_t count(Label l) const;
};

// Above this re/im ratio a lone tissue cluster is called bone.
constexpr double kBoneRatioSplit = 0.64;

// k-means (k = 3, 10 seeded restarts) on (re, im). The cluster with the
// smallest |centroid| is air; of the other two, the higher re/im ratio is bone.
LabelMap segment(const ComplexImage& img, std::uint64_t seed = 0);

struct UseCaseMeasures {
  double segmentation_score = 0.0;  // mean IoU over object, flesh and bone
  std::optional<double> bone_muscle_ratio_error;
  std::optional<double> mean_bone_absorption;
  std::optional<double> bone_centroid_error_mm;
};

UseCaseMeasures use_case_measures(const LabelMap& labels, const ComplexImage& img,
                                  const LabelMap& truth_labels);

}  // namespace mct
