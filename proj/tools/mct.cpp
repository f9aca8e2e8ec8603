// mct: simulate, calibrate, reconstruct and evaluate penetration scans.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "mct/analysis.hpp"
#include "mct/baselines.hpp"
#include "mct/config.hpp"
#include "mct/error.hpp"
#include "mct/forward.hpp"
#include "mct/io.hpp"
#include "mct/parallel.hpp"
#include "mct/pipeline.hpp"
#include "mct/recon.hpp"

namespace fs = std::filesystem;
using namespace mct;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<double> alpha;
  std::optional<double> snr_db;
  std::string freqs;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Config file (sectioned key = value)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Scan noise seed (overrides [scan] seed)");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--alpha", c.alpha, "Ray-optics fraction alpha in [0, 1]");
  app->add_option("--snr-db", c.snr_db, "Measurement SNR in dB (inf disables noise)");
  app->add_option("--freqs", c.freqs, "Comma-separated frequency indices to process");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.scan.seed = *c.seed;
  if (c.alpha) cfg.scan.alpha = *c.alpha;
  if (c.snr_db) cfg.scan.snr_db = cfg.calibration.noise_snr_db = *c.snr_db;
  if (!c.freqs.empty()) {
    cfg.freq_indices.clear();
    for (double d : parse_number_list(c.freqs, "--freqs")) cfg.freq_indices.push_back(static_cast<int>(d));
  }
  cfg.validate();
  set_default_jobs(c.jobs);
  fs::create_directories(c.out);
  return cfg;
}

std::vector<int> frequency_list(const RunConfig& cfg, int n_freq) {
  if (!cfg.freq_indices.empty()) return cfg.freq_indices;
  std::vector<int> all(n_freq);
  for (int k = 0; k < n_freq; ++k) all[k] = k;
  return all;
}

fs::path default_cache(const Common& c) { return cache_dir(fs::path(c.out) / "cache"); }

void note(const std::string& s) { std::cerr << s << '\n'; }

Tensor tagged_image(const ComplexImage& img, const RunConfig& cfg, const std::string& method, double f) {
  Tensor t = image_to_tensor(img);
  t.meta["method"] = method;
  t.meta["frequency"] = format_double(f);
  t.meta["seed"] = std::to_string(cfg.scan.seed);
  t.meta["geometry_hash"] = cfg.geometry.hash();
  return t;
}

MeasurementCube load_cube(const std::string& path) { return tensor_to_cube(read_tensor(path)); }

// ---- commands -----------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& id) {
  const RunConfig cfg = resolve(c);
  const PhantomSpec spec = configured_phantom(cfg);
  const double f_ref = cfg.geometry.frequencies[reference_frequency_index(cfg.geometry)];
  const ComplexImage truth = rasterize(spec, cfg.geometry.grid, f_ref);
  const SparseSystem sys = build_system(cfg.geometry);
  const MeasurementCube cube = simulate_scan(truth, cfg.geometry, sys, cfg.scan);
  Tensor pt = image_to_tensor(truth);
  pt.meta["geometry_hash"] = sys.geometry_hash;
  pt.meta["seed"] = std::to_string(cfg.scan.seed);
  write_tensor(fs::path(c.out) / (id + ".phantom.mctt"), pt);
  write_tensor(fs::path(c.out) / (id + ".cube.mctt"), cube_to_tensor(cube));
  write_png((fs::path(c.out) / (id + ".phantom.png")).string(), visualize(truth));
  std::cout << "cube " << cube.n_disp << "x" << cube.n_rot << "x" << cube.n_freq() << " alpha " << cube.alpha
            << " snr " << cube.snr_db << " dB -> " << (fs::path(c.out) / (id + ".cube.mctt")).string() << '\n';
  return kOk;
}

int cmd_calibrate(const Common& c) {
  const RunConfig cfg = resolve(c);
  const SparseSystem sys = build_system(cfg.geometry);
  const fs::path dir = default_cache(c);
  const auto inv = obtain_calibration(sys, cfg.recon.calibration_size, cfg.calibration_seed, cfg.calibration, dir);
  const auto& s = inv.stats;
  int rmin = *std::min_element(s.ranks.begin(), s.ranks.end()), rmax = *std::max_element(s.ranks.begin(), s.ranks.end());
  std::cout << "calibration K=" << s.n_phantoms << " seed=" << s.seed << " ranks " << rmin << ".." << rmax
            << " median residual " << s.median_residual << " p95 " << s.p95_residual << " within 5%: "
            << s.fraction_within_5pct << "\n"
            << "cached in " << (dir / calibration_cache_name(sys.geometry_hash, cfg.recon.calibration_size,
                                                              cfg.calibration_seed, cfg.calibration)).string()
            << '\n';
  return kOk;
}

int cmd_reconstruct(const Common& c, const std::string& cube_path, const std::string& id) {
  RunConfig cfg = resolve(c);
  const MeasurementCube cube = load_cube(cube_path);
  cfg.geometry.frequencies = cube.frequencies;
  const SparseSystem sys = build_system(cfg.geometry);
  if (!cube.geometry_hash.empty() && cube.geometry_hash != sys.geometry_hash)
    throw ConfigError(cfg.source, 0, "geometry: cube was simulated with a different geometry (hash " + cube.geometry_hash + ")");
  const auto inv = obtain_calibration(sys, cfg.recon.calibration_size, cfg.calibration_seed, cfg.calibration, default_cache(c));
  const double f_ref = cfg.geometry.frequencies[reference_frequency_index(cfg.geometry)];
  const auto results = reconstruct(cube, sys, inv, cfg.recon, frequency_list(cfg, cube.n_freq()), f_ref);
  int failures = 0;
  const auto ks = frequency_list(cfg, cube.n_freq());
  for (std::size_t j = 0; j < results.size(); ++j) {
    const auto& r = results[j];
    if (!r.image) {
      note("frequency " + std::to_string(ks[j]) + " failed: " + r.error);
      ++failures;
      continue;
    }
    const std::string stem = id + ".recon.f" + std::to_string(ks[j]);
    write_tensor(fs::path(c.out) / (stem + ".mctt"), tagged_image(*r.image, cfg, "opt", r.frequency));
    write_png((fs::path(c.out) / (stem + ".png")).string(), visualize(*r.image));
    if (!r.converged) note("frequency " + std::to_string(ks[j]) + ": solver hit max_iterations");
  }
  std::cout << "reconstructed " << results.size() - failures << " of " << results.size() << " frequencies\n";
  return failures ? kNumerical : kOk;
}

int cmd_baseline(const Common& c, const std::string& cube_path, const std::string& id, const std::string& method) {
  RunConfig cfg = resolve(c);
  if (!method.empty()) cfg.baseline.method = parse_method(method);
  const MeasurementCube cube = load_cube(cube_path);
  cfg.geometry.frequencies = cube.frequencies;
  const SparseSystem sys = build_system(cfg.geometry);
  const double f_ref = cfg.geometry.frequencies[reference_frequency_index(cfg.geometry)];
  const std::string name = method_name(cfg.baseline.method);
  for (int k : frequency_list(cfg, cube.n_freq())) {
    const auto r = run_baseline(cube, sys, k, cfg.baseline, f_ref);
    if (!r.warning.empty()) note(name + " f" + std::to_string(k) + ": " + r.warning);
    const std::string stem = id + "." + name + ".f" + std::to_string(k);
    write_tensor(fs::path(c.out) / (stem + ".mctt"), tagged_image(r.image, cfg, name, cube.frequencies[k]));
    write_png((fs::path(c.out) / (stem + ".png")).string(), visualize(r.image));
    std::cout << name << " f" << k << ": " << r.iterations << " iterations\n";
  }
  return kOk;
}

int cmd_evaluate(const Common& c, const std::string& truth_path, const std::vector<std::string>& recon_paths) {
  resolve(c);
  const ComplexImage truth = tensor_to_image(read_tensor(truth_path));
  const LabelMap truth_labels = segment(truth);
  std::vector<std::string> names;
  std::vector<MetricReport> reports;
  std::ofstream uc(fs::path(c.out) / "use_cases.csv");
  uc << "name,segmentation_score,bone_muscle_ratio_error,mean_bone_absorption,bone_centroid_error_mm\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  for (const auto& p : recon_paths) {
    const ComplexImage img = tensor_to_image(read_tensor(p));
    const MetricReport m = metrics(img, truth);
    const UseCaseMeasures u = use_case_measures(segment(img), img, truth_labels);
    names.push_back(fs::path(p).filename().string());
    reports.push_back(m);
    uc << names.back() << ',' << format_double(u.segmentation_score) << ',' << opt(u.bone_muscle_ratio_error) << ','
       << opt(u.mean_bone_absorption) << ',' << opt(u.bone_centroid_error_mm) << '\n';
    std::cout << names.back() << ": " << format_report(m) << '\n';
  }
  std::ofstream csv(fs::path(c.out) / "metrics.csv");
  write_metrics_csv(csv, names, reports);
  if (reports.size() > 1) std::cout << "aggregate: " << format_aggregate(aggregate(reports)) << '\n';
  return kOk;
}

int cmd_make_dataset(const Common& c) {
  const RunConfig cfg = resolve(c);
  const SparseSystem sys = build_system(cfg.geometry);
  const auto inv = obtain_calibration(sys, cfg.recon.calibration_size, cfg.calibration_seed, cfg.calibration, default_cache(c));
  const double f_ref = cfg.geometry.frequencies[reference_frequency_index(cfg.geometry)];
  const auto ks = frequency_list(cfg, static_cast<int>(cfg.geometry.frequencies.size()));
  for (int n = 0; n < cfg.dataset.n_phantoms; ++n) {
    const std::uint64_t seed = cfg.dataset.first_seed + static_cast<std::uint64_t>(n);
    std::ostringstream id;
    id << "sample" << std::setw(5) << std::setfill('0') << n;
    const auto ph = random_phantom(seed, {}, cfg.geometry.grid, f_ref);
    ScanOptions so = cfg.scan;
    so.seed = seed;
    const auto cube = simulate_scan(ph.image, cfg.geometry, sys, so);
    Tensor pt = image_to_tensor(ph.image);
    pt.meta["geometry_hash"] = sys.geometry_hash;
    pt.meta["seed"] = std::to_string(seed);
    write_tensor(fs::path(c.out) / (id.str() + ".phantom.mctt"), pt);
    write_tensor(fs::path(c.out) / (id.str() + ".cube.mctt"), cube_to_tensor(cube));
    const auto recs = reconstruct(cube, sys, inv, cfg.recon, ks, f_ref);
    for (std::size_t j = 0; j < recs.size(); ++j) {
      if (!recs[j].image) {
        note(id.str() + " f" + std::to_string(ks[j]) + " failed: " + recs[j].error);
        continue;
      }
      Tensor rt = tagged_image(*recs[j].image, cfg, "opt", recs[j].frequency);
      rt.meta["seed"] = std::to_string(seed);
      write_tensor(fs::path(c.out) / (id.str() + ".recon.f" + std::to_string(ks[j]) + ".mctt"), rt);
    }
  }
  const auto entries = dataset_manifest(c.out);
  std::ofstream m(fs::path(c.out) / "manifest.csv");
  m << "id,phantom,cube,n_recons,gap\n";
  int gaps = 0;
  for (const auto& e : entries) {
    m << e.id << ',' << (e.phantom ? e.phantom->filename().string() : "") << ','
      << (e.cube ? e.cube->filename().string() : "") << ',' << e.recons.size() << ',' << (e.gap ? 1 : 0) << '\n';
    gaps += e.gap;
  }
  std::cout << entries.size() << " samples, " << gaps << " with gaps\n";
  return kOk;
}

int cmd_sweep(const Common& c) {
  const RunConfig cfg = resolve(c);
  const fs::path dir = default_cache(c);
  const auto seeds = seed_range(cfg.sweep.first_seed, cfg.sweep.n_phantoms);
  std::ofstream csv(fs::path(c.out) / "sweep.csv");
  csv << "kind,value,n_disp,n_rot,alpha,ssim,ssim_std,psnr,mae,rmse\n";
  auto row = [&](const std::string& kind, double value, int nd, int nr, double alpha, const AggregateReport& a) {
    csv << kind << ',' << format_double(value) << ',' << nd << ',' << nr << ',' << format_double(alpha) << ','
        << a.ssim.mean << ',' << a.ssim.std << ',' << a.psnr.mean << ',' << a.mae.mean << ',' << a.rmse.mean << '\n';
    std::cout << kind << ' ' << value << ": " << format_aggregate(a) << '\n';
  };
  for (double alpha : cfg.sweep.alphas) {
    SuiteOptions so;
    so.seeds = seeds;
    so.alpha = alpha;
    row("alpha", alpha, cfg.geometry.n_disp, cfg.geometry.n_rot, alpha, evaluate_suite(cfg, so, dir).opt_summary);
  }
  for (int f : cfg.sweep.factors) {
    for (const bool rays : {true, false}) {
      if (f == 1 && !rays) continue;
      SuiteOptions so;
      so.seeds = seeds;
      so.alpha = cfg.scan.alpha;
      (rays ? so.disp_factor : so.rot_factor) = f;
      const auto g = cfg.geometry.decimated(so.disp_factor, so.rot_factor);
      row(f == 1 ? "full" : (rays ? "rays" : "rotations"), f, g.n_disp, g.n_rot, so.alpha,
          evaluate_suite(cfg, so, dir).opt_summary);
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penetration microwave tomography: simulation, inversion and evaluation"};
  app.require_subcommand(1);
  app.footer("Environment: MCT_CACHE_DIR overrides the calibration cache directory (default <out>/cache).\n"
             "Exit codes: 0 ok, 1 other, 2 config, 3 io, 4 numerical.");
  Common common;
  std::string cube_path, id = "scan", method, truth_path;
  std::vector<std::string> recon_paths;

  auto* sim = app.add_subcommand("simulate", "Rasterize the configured phantom and simulate its measurement cube");
  add_common(sim, common);
  sim->add_option("--id", id, "Output file stem")->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "Build (or load) the calibrated inverse for the configured geometry");
  add_common(cal, common);

  auto* rec = app.add_subcommand("reconstruct", "Invert a cube per frequency");
  add_common(rec, common);
  rec->add_option("--cube", cube_path, "Cube TensorFile")->required()->check(CLI::ExistingFile);
  rec->add_option("--id", id, "Output file stem")->capture_default_str();

  auto* base = app.add_subcommand("baseline", "Run the RN or CN reference reconstruction");
  add_common(base, common);
  base->add_option("--cube", cube_path, "Cube TensorFile")->required()->check(CLI::ExistingFile);
  base->add_option("--method", method, "rn or cn (default from config)");
  base->add_option("--id", id, "Output file stem")->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "Metrics and use-case measures of reconstructions against a phantom");
  add_common(ev, common);
  ev->add_option("--truth", truth_path, "Phantom TensorFile")->required()->check(CLI::ExistingFile);
  ev->add_option("--recon", recon_paths, "Reconstruction TensorFile(s)")->required()->check(CLI::ExistingFile);

  auto* ds = app.add_subcommand("make-dataset", "Write (phantom, cube, per-frequency recon) samples and a manifest");
  add_common(ds, common);

  auto* sw = app.add_subcommand("sweep", "Metric curves over alpha, ray count and rotation count");
  add_common(sw, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(common, id);
    if (*cal) return cmd_calibrate(common);
    if (*rec) return cmd_reconstruct(common, cube_path, id);
    if (*base) return cmd_baseline(common, cube_path, id, method);
    if (*ev) return cmd_evaluate(common, truth_path, recon_paths);
    if (*ds) return cmd_make_dataset(common);
    if (*sw) return cmd_sweep(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
