#include "mct/pipeline.hpp"

#include <cstdlib>

#include "mct/baselines.hpp"
#include "mct/io.hpp"

namespace mct {

namespace fs = std::filesystem;

PhantomSpec configured_phantom(const RunConfig& cfg) {
  if (!cfg.phantom_file.empty()) return load_phantom_spec(cfg.phantom_file);
  if (cfg.phantom_preset == "forearm") return presets::forearm();
  if (cfg.phantom_preset == "two_disc") return presets::two_disc();
  if (cfg.phantom_preset == "solid_disc") return presets::solid_disc(cfg.phantom_radius);
  throw InvalidArgument("unknown phantom preset '" + cfg.phantom_preset + "'");
}

fs::path cache_dir(const fs::path& fallback) {
  if (const char* env = std::getenv("MCT_CACHE_DIR"); env && *env) return env;
  return fallback;
}

CalibratedInverse obtain_calibration(const SparseSystem& sys, int k, std::uint64_t seed,
                                     const CalibrationOptions& opt, const fs::path& dir) {
  if (dir.empty()) return calibrate(sys, k, seed, opt);
  const fs::path file = dir / calibration_cache_name(sys.geometry_hash, k, seed, opt);
  if (fs::exists(file)) {
    auto inv = read_calibration(file);
    if (inv.geometry_hash == sys.geometry_hash && inv.n_virtual == sys.n_virtual) return inv;
  }
  auto inv = calibrate(sys, k, seed, opt);
  fs::create_directories(dir);
  const fs::path tmp = file.string() + ".tmp";
  write_calibration(tmp, inv);
  fs::rename(tmp, file);
  return inv;
}

int reference_frequency_index(const ScanGeometry& geom) { return static_cast<int>(geom.frequencies.size() / 2); }

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < count; ++i) s.push_back(first + static_cast<std::uint64_t>(i));
  return s;
}

SuiteResult evaluate_suite(const RunConfig& cfg, const SuiteOptions& opt, const fs::path& dir) {
  ScanGeometry full = cfg.geometry;
  const double f_ref = full.frequencies[reference_frequency_index(full)];
  full.frequencies = {f_ref};
  const SparseSystem full_sys = build_system(full);
  const ScanGeometry dec = full.decimated(opt.disp_factor, opt.rot_factor);
  const SparseSystem sys = build_system(dec);
  const CalibratedInverse inv = obtain_calibration(sys, cfg.recon.calibration_size, cfg.calibration_seed, cfg.calibration, dir);

  SuiteResult res;
  for (std::size_t i = 0; i < opt.seeds.size(); ++i) {
    const auto ph = random_phantom(opt.seeds[i], {}, full.grid, f_ref);
    ScanOptions so = cfg.scan;
    so.alpha = opt.alpha;
    so.seed = opt.seeds[i];
    MeasurementCube cube = simulate_scan(ph.image, full, full_sys, so);
    if (opt.disp_factor != 1 || opt.rot_factor != 1) {
      cube = cube.decimated(opt.disp_factor, opt.rot_factor);
      cube.geometry_hash = sys.geometry_hash;
    }
    const ComplexImage o = reconstruct_frequency(cube, sys, inv, 0, cfg.recon, f_ref);
    res.opt.push_back(metrics(o, ph.image));
    if (opt.run_rn) {
      BaselineConfig b = cfg.baseline;
      b.method = BaselineMethod::kRN;
      res.rn.push_back(metrics(run_baseline(cube, sys, 0, b, f_ref).image, ph.image));
    }
    if (opt.run_cn) {
      BaselineConfig b = cfg.baseline;
      b.method = BaselineMethod::kCN;
      res.cn.push_back(metrics(run_baseline(cube, sys, 0, b, f_ref).image, ph.image));
    }
  }
  res.opt_summary = aggregate(res.opt);
  res.rn_summary = aggregate(res.rn);
  res.cn_summary = aggregate(res.cn);
  return res;
}

}  // namespace mct
