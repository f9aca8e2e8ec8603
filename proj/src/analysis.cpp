#include "mct/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <zlib.h>

#include "mct/error.hpp"

namespace mct {

namespace {

constexpr int kWin = 7;
constexpr double kSigma = 1.5;

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  double sum = 0.0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dx = x - kWin / 2, dy = y - kWin / 2;
      w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      sum += w[y * kWin + x];
    }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> normalized(const std::vector<double>& v, double scale, bool clip) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = v[i] / scale;
    if (clip) x = std::clamp(x, 0.0, 1.0);
    out[i] = x;
  }
  return out;
}

double channel_scale(const std::vector<double>& truth) {
  const double m = truth.empty() ? 0.0 : *std::max_element(truth.begin(), truth.end());
  return m > 0.0 ? m : 1.0;
}

struct ErrorSums {
  double abs = 0.0, sq = 0.0;
  std::size_t n = 0;
};

ErrorSums error_sums(const std::vector<double>& a, const std::vector<double>& b) {
  ErrorSums s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s.abs += std::abs(d);
    s.sq += d * d;
  }
  s.n = a.size();
  return s;
}

ChannelMetrics from_sums(const ErrorSums& s, double ssim_value) {
  ChannelMetrics m;
  m.ssim = ssim_value;
  const double mse = s.n ? s.sq / s.n : 0.0;
  m.mae = s.n ? s.abs / s.n : 0.0;
  m.rmse = std::sqrt(mse);
  m.psnr_db = psnr_from_mse(mse);
  return m;
}

MetricStats stats_of(const std::vector<double>& v) {
  MetricStats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double acc = 0.0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(acc / v.size());
  return s;
}

}  // namespace

double ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height) {
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(width) * height)
    throw InvalidArgument("ssim: image size mismatch");
  if (width < kWin || height < kWin) throw InvalidArgument("ssim: image smaller than the 7x7 window");
  static const auto w = gaussian_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int y0 = 0; y0 + kWin <= height; ++y0)
    for (int x0 = 0; x0 + kWin <= width; ++x0) {
      double ma = 0, mb = 0;
      for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
          const std::size_t i = static_cast<std::size_t>(y0 + y) * width + x0 + x;
          ma += w[y * kWin + x] * a[i];
          mb += w[y * kWin + x] * b[i];
        }
      double va = 0, vb = 0, cov = 0;
      for (int y = 0; y < kWin; ++y)
        for (int x = 0; x < kWin; ++x) {
          const std::size_t i = static_cast<std::size_t>(y0 + y) * width + x0 + x;
          const double da = a[i] - ma, db = b[i] - mb;
          va += w[y * kWin + x] * da * da;
          vb += w[y * kWin + x] * db * db;
          cov += w[y * kWin + x] * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / (static_cast<double>(width - kWin + 1) * (height - kWin + 1));
}

double psnr_from_mse(double mse) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

MetricReport metrics(const ComplexImage& recon, const ComplexImage& truth) {
  if (!(recon.grid == truth.grid) || recon.size() != truth.size())
    throw InvalidArgument("metrics: image grids differ");
  const double sre = channel_scale(truth.re), sim = channel_scale(truth.im);
  const auto tre = normalized(truth.re, sre, false), tim = normalized(truth.im, sim, false);
  const auto rre = normalized(recon.re, sre, true), rim = normalized(recon.im, sim, true);
  const int w = truth.width(), h = truth.height();
  MetricReport r;
  const auto ere = error_sums(rre, tre), eim = error_sums(rim, tim);
  r.re = from_sums(ere, ssim(rre, tre, w, h));
  r.im = from_sums(eim, ssim(rim, tim, w, h));
  ErrorSums joint{ere.abs + eim.abs, ere.sq + eim.sq, ere.n + eim.n};
  r.joint = from_sums(joint, 0.5 * (r.re.ssim + r.im.ssim));
  return r;
}

AggregateReport aggregate(const std::vector<MetricReport>& reports) {
  AggregateReport a;
  a.count = reports.size();
  auto collect = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(get(r));
    return stats_of(v);
  };
  a.ssim_re = collect([](const MetricReport& r) { return r.re.ssim; });
  a.ssim_im = collect([](const MetricReport& r) { return r.im.ssim; });
  a.ssim = collect([](const MetricReport& r) { return r.headline_ssim(); });
  a.psnr_re = collect([](const MetricReport& r) { return r.re.psnr_db; });
  a.psnr_im = collect([](const MetricReport& r) { return r.im.psnr_db; });
  a.psnr = collect([](const MetricReport& r) { return r.headline_psnr(); });
  a.mae = collect([](const MetricReport& r) { return r.joint.mae; });
  a.rmse = collect([](const MetricReport& r) { return r.joint.rmse; });
  return a;
}

void write_metrics_csv(std::ostream& out, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports) {
  if (names.size() != reports.size()) throw InvalidArgument("write_metrics_csv: names and reports differ in length");
  out << "name,ssim_re,ssim_im,ssim,psnr_re,psnr_im,psnr,mae,rmse\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << names[i] << ',' << r.re.ssim << ',' << r.im.ssim << ',' << r.headline_ssim() << ','
        << r.re.psnr_db << ',' << r.im.psnr_db << ',' << r.headline_psnr() << ',' << r.joint.mae << ','
        << r.joint.rmse << '\n';
  }
}

std::string format_report(const MetricReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "ssim " << r.headline_ssim() << " (re " << r.re.ssim << ", im "
    << r.im.ssim << ")  psnr " << std::setprecision(2) << r.headline_psnr() << " dB  mae "
    << std::setprecision(4) << r.joint.mae << "  rmse " << r.joint.rmse;
  return s.str();
}

std::string format_aggregate(const AggregateReport& a) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "n " << a.count << "  ssim " << a.ssim.mean << " +- " << a.ssim.std
    << " (re " << a.ssim_re.mean << ", im " << a.ssim_im.mean << ")  psnr " << std::setprecision(2)
    << a.psnr.mean << " dB  mae " << std::setprecision(4) << a.mae.mean << "  rmse " << a.rmse.mean;
  return s.str();
}

double gradient_energy(const ComplexImage& img) {
  std::vector<double> mag(img.size());
  double m = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) m = std::max(m, mag[i] = std::abs(img.at(i)));
  if (m == 0.0) return 0.0;
  double e = 0.0;
  const int w = img.width(), h = img.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = mag[img.grid.index(x, y)] / m;
      if (x + 1 < w) e += std::pow(mag[img.grid.index(x + 1, y)] / m - v, 2);
      if (y + 1 < h) e += std::pow(mag[img.grid.index(x, y + 1)] / m - v, 2);
    }
  return e;
}

double edge_gradient_energy(const ComplexImage& img, const ComplexImage& truth) {
  if (img.width() != truth.width() || img.height() != truth.height())
    throw InvalidArgument("edge_gradient_energy: image shapes differ");
  std::vector<double> mag(img.size());
  double m = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) m = std::max(m, mag[i] = std::abs(img.at(i)));
  if (m == 0.0) return 0.0;
  double e = 0.0;
  const int w = img.width(), h = img.height();
  auto add = [&](std::size_t a, std::size_t b) {
    if (truth.at(a) != truth.at(b)) e += std::pow((mag[a] - mag[b]) / m, 2);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = img.grid.index(x, y);
      if (x + 1 < w) add(i, img.grid.index(x + 1, y));
      if (y + 1 < h) add(i, img.grid.index(x, y + 1));
    }
  return e;
}

// ---- Visualization ----------------------------------------------------------

RgbImage visualize(const ComplexImage& img) {
  RgbImage out;
  out.width = img.width();
  out.height = img.height();
  out.pixels.assign(static_cast<std::size_t>(out.width) * out.height * 3, 0);
  auto max_of = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
  };
  const double mre = max_of(img.re), mim = max_of(img.im);
  auto to_byte = [](double v, double m) -> std::uint8_t {
    if (!(m > 0.0)) return 0;
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v / m, 0.0, 1.0)));
  };
  for (int row = 0; row < out.height; ++row)
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = img.grid.index(x, out.height - 1 - row);
      std::uint8_t* p = &out.pixels[(static_cast<std::size_t>(row) * out.width + x) * 3];
      p[0] = p[1] = to_byte(img.re[i], mre);
      p[2] = to_byte(img.im[i], mim);
    }
  return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& rgb) {
  if (rgb.width <= 0 || rgb.height <= 0 ||
      rgb.pixels.size() != static_cast<std::size_t>(rgb.width) * rgb.height * 3)
    throw InvalidArgument("encode_png: inconsistent image buffer");
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(rgb.width));
  put_u32(ihdr, static_cast<std::uint32_t>(rgb.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolor, no interlace
  put_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  const std::size_t stride = static_cast<std::size_t>(rgb.width) * 3;
  raw.reserve((stride + 1) * rgb.height);
  for (int row = 0; row < rgb.height; ++row) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.pixels.begin() + row * stride, rgb.pixels.begin() + (row + 1) * stride);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw Error("encode_png: zlib compression failed");
  z.resize(len);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

void write_png(const std::string& path, const RgbImage& rgb) {
  const auto bytes = encode_png(rgb);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

// ---- Segmentation -----------------------------------------------------------

std::size_t LabelMap::count(Label l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }

namespace {

struct Clustering {
  std::vector<int> assign;
  std::vector<cdouble> centers;
  double inertia = std::numeric_limits<double>::infinity();
};

Clustering lloyd(const std::vector<cdouble>& pts, int k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  Clustering c;
  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  c.centers.push_back(pts[pick(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(c.centers.size()) < k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : c.centers) best = std::min(best, std::norm(pts[i] - ctr));
      d2[i] = best;
      sum += best;
    }
    if (sum <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, sum);
    double target = u(rng), acc = 0.0;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= target && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    c.centers.push_back(pts[chosen]);
  }
  const int kk = static_cast<int>(c.centers.size());
  c.assign.assign(n, 0);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::norm(pts[i] - c.centers[0]);
      for (int j = 1; j < kk; ++j) {
        const double d = std::norm(pts[i] - c.centers[j]);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      changed |= best != c.assign[i];
      c.assign[i] = best;
    }
    std::vector<cdouble> sum(kk, 0.0);
    std::vector<std::size_t> cnt(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[c.assign[i]] += pts[i];
      ++cnt[c.assign[i]];
    }
    for (int j = 0; j < kk; ++j)
      if (cnt[j]) c.centers[j] = sum[j] / static_cast<double>(cnt[j]);
    if (!changed && it > 0) break;
  }
  c.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) c.inertia += std::norm(pts[i] - c.centers[c.assign[i]]);
  return c;
}

}  // namespace

LabelMap segment(const ComplexImage& img, std::uint64_t seed) {
  LabelMap out;
  out.grid = img.grid;
  out.labels.assign(img.size(), Label::kAir);
  if (img.size() == 0) return out;

  // Sorting the features first makes the result independent of pixel order.
  std::vector<cdouble> pts(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) pts[i] = img.at(i);
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  auto lex = [&](std::size_t a, std::size_t b) {
    if (pts[a].real() != pts[b].real()) return pts[a].real() < pts[b].real();
    return pts[a].imag() < pts[b].imag();
  };
  std::stable_sort(order.begin(), order.end(), lex);
  std::vector<cdouble> sorted(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = pts[order[i]];

  std::size_t distinct = 1;
  for (std::size_t i = 1; i < sorted.size() && distinct < 3; ++i)
    if (sorted[i] != sorted[i - 1]) ++distinct;
  const int k = static_cast<int>(distinct);
  if (k == 1) {
    out.n_clusters = 1;
    out.centroids[static_cast<int>(Label::kAir)] = sorted[0];
    return out;
  }

  std::mt19937_64 rng(seed);
  Clustering best;
  for (int restart = 0; restart < 10; ++restart) {
    Clustering c = lloyd(sorted, k, rng);
    if (c.inertia < best.inertia) best = std::move(c);
  }
  const int kk = static_cast<int>(best.centers.size());
  out.n_clusters = kk;

  std::vector<int> idx(kk);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(best.centers[a]) < std::abs(best.centers[b]); });
  std::vector<Label> cluster_label(kk, Label::kAir);
  auto ratio = [&](int j) {
    const auto c = best.centers[j];
    return c.imag() > 0 ? c.real() / c.imag() : std::numeric_limits<double>::infinity();
  };
  if (kk == 2) {
    cluster_label[idx[1]] = ratio(idx[1]) > kBoneRatioSplit ? Label::kBone : Label::kFlesh;
  } else if (kk == 3) {
    const bool first_bone = ratio(idx[1]) > ratio(idx[2]);
    cluster_label[idx[1]] = first_bone ? Label::kBone : Label::kFlesh;
    cluster_label[idx[2]] = first_bone ? Label::kFlesh : Label::kBone;
  }
  for (int j = 0; j < kk; ++j) out.centroids[static_cast<int>(cluster_label[j])] = best.centers[j];
  for (std::size_t i = 0; i < order.size(); ++i) out.labels[order[i]] = cluster_label[best.assign[i]];
  return out;
}

UseCaseMeasures use_case_measures(const LabelMap& labels, const ComplexImage& img, const LabelMap& truth) {
  if (!(labels.grid == truth.grid) || labels.labels.size() != truth.labels.size() || img.size() != labels.labels.size())
    throw InvalidArgument("use_case_measures: label maps and image must share a grid");
  UseCaseMeasures m;
  const std::size_t n = labels.labels.size();

  auto iou = [&](auto in_class) -> std::optional<double> {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = in_class(labels.labels[i]), t = in_class(truth.labels[i]);
      inter += p && t;
      uni += p || t;
    }
    if (uni == 0) return std::nullopt;
    return static_cast<double>(inter) / uni;
  };
  double total = 0.0;
  int classes = 0;
  for (auto score : {iou([](Label l) { return l != Label::kAir; }), iou([](Label l) { return l == Label::kFlesh; }),
                     iou([](Label l) { return l == Label::kBone; })}) {
    if (score) {
      total += *score;
      ++classes;
    }
  }
  m.segmentation_score = classes ? total / classes : 1.0;

  const double pb = static_cast<double>(labels.count(Label::kBone)), pf = static_cast<double>(labels.count(Label::kFlesh));
  const double tb = static_cast<double>(truth.count(Label::kBone)), tf = static_cast<double>(truth.count(Label::kFlesh));
  if (pb > 0 && pf > 0 && tb > 0 && tf > 0) {
    const double rp = pb / pf, rt = tb / tf;
    m.bone_muscle_ratio_error = std::abs(rp - rt) / rt;
  }
  if (pb > 0) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (labels.labels[i] == Label::kBone) s += img.re[i];
    m.mean_bone_absorption = s / pb;
  }
  if (pb > 0 && tb > 0) {
    auto centroid = [&](const LabelMap& lm, double count) {
      double sx = 0, sy = 0;
      for (int y = 0; y < lm.grid.height; ++y)
        for (int x = 0; x < lm.grid.width; ++x)
          if (lm.labels[lm.grid.index(x, y)] == Label::kBone) {
            sx += lm.grid.center_x(x);
            sy += lm.grid.center_y(y);
          }
      return std::pair{sx / count, sy / count};
    };
    const auto [px, py] = centroid(labels, pb);
    const auto [tx, ty] = centroid(truth, tb);
    m.bone_centroid_error_mm = 1000.0 * std::hypot(px - tx, py - ty);
  }
  return m;
}

}  // namespace mct
