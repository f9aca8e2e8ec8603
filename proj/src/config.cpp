#include "mct/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mct/error.hpp"
#include "mct/io.hpp"

namespace mct {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Ctx {
  const std::string& source;
  int line;
  std::string field;
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(source, line, field + ": " + what); }
};

double to_double(const Ctx& c, const std::string& v) {
  try {
    return parse_double(v, c.field);
  } catch (const InvalidArgument&) {
    c.fail("expected a number, got '" + v + "'");
  }
}

long long to_int(const Ctx& c, const std::string& v) {
  const double d = to_double(c, v);
  if (d != std::floor(d) || std::abs(d) > 9e15) c.fail("expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

std::uint64_t to_seed(const Ctx& c, const std::string& v) {
  try {
    if (v.empty() || v.front() < '0' || v.front() > '9') throw std::invalid_argument(v);
    std::size_t pos = 0;
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    c.fail("expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const Ctx& c, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  c.fail("expected true or false, got '" + v + "'");
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw InvalidArgument(field + ": empty list item");
    out.push_back(parse_double(item, field));
  }
  return out;
}

void RunConfig::validate() const {
  auto check = [&](bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(source, 0, field + ": " + what);
  };
  try {
    geometry.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(source, 0, std::string("geometry: ") + e.what());
  }
  check(scan.alpha >= 0.0 && scan.alpha <= 1.0, "scan.alpha", "must lie in [0, 1]");
  check(scan.snr_db > 0.0, "scan.snr_db", "must be > 0");
  check(recon.mu_rel >= 0.0, "recon.mu_rel", "must be >= 0");
  check(recon.tolerance > 0.0, "recon.tolerance", "must be > 0");
  check(recon.max_iterations >= 1, "recon.max_iterations", "must be >= 1");
  check(recon.calibration_size >= 1, "calibration.size", "must be >= 1");
  check(calibration.energy_retained > 0.0 && calibration.energy_retained <= 1.0, "calibration.energy_retained",
        "must lie in (0, 1]");
  check(calibration.noise_snr_db > 0.0, "calibration.noise_snr_db", "must be > 0");
  for (int k : freq_indices)
    check(k >= 0 && k < static_cast<int>(geometry.frequencies.size()), "recon.frequencies",
          "index " + std::to_string(k) + " out of range");
  try {
    baseline.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(source, 0, e.what());
  }
  check(!sweep.alphas.empty() && !sweep.factors.empty(), "sweep", "alphas and factors must be non-empty");
  for (int f : sweep.factors) check(f >= 1, "sweep.factors", "factors must be >= 1");
  check(sweep.n_phantoms >= 1, "sweep.n_phantoms", "must be >= 1");
  check(dataset.n_phantoms >= 1, "dataset.n_phantoms", "must be >= 1");
  check(phantom_radius > 0.0, "phantom.radius", "must be > 0");
  static const std::vector<std::string> presets = {"two_disc", "forearm", "solid_disc"};
  check(!phantom_file.empty() || std::find(presets.begin(), presets.end(), phantom_preset) != presets.end(),
        "phantom.preset", "unknown preset '" + phantom_preset + "'");
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
  RunConfig cfg;
  cfg.source = source_name;
  double f_min = 5.0e9, f_max = 6.0e9;
  long long n_freq = 11;
  bool freq_touched = false;

  using Setter = std::function<void(const Ctx&, const std::string&)>;
  std::map<std::string, Setter> setters = {
      {"geometry.n_rot", [&](const Ctx& c, const std::string& v) { cfg.geometry.n_rot = static_cast<int>(to_int(c, v)); }},
      {"geometry.n_disp", [&](const Ctx& c, const std::string& v) { cfg.geometry.n_disp = static_cast<int>(to_int(c, v)); }},
      {"geometry.disp_step", [&](const Ctx& c, const std::string& v) { cfg.geometry.disp_step = to_double(c, v); }},
      {"geometry.aperture_width", [&](const Ctx& c, const std::string& v) { cfg.geometry.aperture_width = to_double(c, v); }},
      {"geometry.subray_halfwidth", [&](const Ctx& c, const std::string& v) { cfg.geometry.subray_halfwidth = to_double(c, v); }},
      {"geometry.antenna_distance", [&](const Ctx& c, const std::string& v) { cfg.geometry.antenna_distance = to_double(c, v); }},
      {"geometry.f_min", [&](const Ctx& c, const std::string& v) { f_min = to_double(c, v); freq_touched = true; }},
      {"geometry.f_max", [&](const Ctx& c, const std::string& v) { f_max = to_double(c, v); freq_touched = true; }},
      {"geometry.n_freq", [&](const Ctx& c, const std::string& v) { n_freq = to_int(c, v); freq_touched = true; }},
      {"geometry.grid_size", [&](const Ctx& c, const std::string& v) {
         cfg.geometry.grid.width = cfg.geometry.grid.height = static_cast<int>(to_int(c, v));
       }},
      {"geometry.pixel_size", [&](const Ctx& c, const std::string& v) { cfg.geometry.grid.pixel_size = to_double(c, v); }},
      {"scan.alpha", [&](const Ctx& c, const std::string& v) { cfg.scan.alpha = to_double(c, v); }},
      {"scan.snr_db", [&](const Ctx& c, const std::string& v) { cfg.scan.snr_db = to_double(c, v); }},
      {"scan.seed", [&](const Ctx& c, const std::string& v) { cfg.scan.seed = to_seed(c, v); }},
      {"scan.threshold", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.threshold = to_double(c, v); }},
      {"scan.object_height", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.object_height = to_double(c, v); }},
      {"scan.receiver_aperture", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.receiver_aperture = to_double(c, v); }},
      {"scan.receiver_samples", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.receiver_samples = static_cast<int>(to_int(c, v)); }},
      {"scan.step_fraction", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.curtain.step_fraction = to_double(c, v); }},
      {"scan.extent_factor", [&](const Ctx& c, const std::string& v) { cfg.scan.diffraction.curtain.extent_factor = to_double(c, v); }},
      {"scan.exterior", [&](const Ctx& c, const std::string& v) {
         if (v == "open") cfg.scan.diffraction.curtain.exterior = Exterior::kOpen;
         else if (v == "closed") cfg.scan.diffraction.curtain.exterior = Exterior::kClosed;
         else c.fail("expected open or closed, got '" + v + "'");
       }},
      {"phantom.preset", [&](const Ctx&, const std::string& v) { cfg.phantom_preset = v; }},
      {"phantom.file", [&](const Ctx&, const std::string& v) { cfg.phantom_file = v; }},
      {"phantom.radius", [&](const Ctx& c, const std::string& v) { cfg.phantom_radius = to_double(c, v); }},
      {"recon.mu_rel", [&](const Ctx& c, const std::string& v) { cfg.recon.mu_rel = to_double(c, v); }},
      {"recon.max_iterations", [&](const Ctx& c, const std::string& v) { cfg.recon.max_iterations = static_cast<int>(to_int(c, v)); }},
      {"recon.tolerance", [&](const Ctx& c, const std::string& v) { cfg.recon.tolerance = to_double(c, v); }},
      {"recon.weighted", [&](const Ctx& c, const std::string& v) { cfg.recon.weighted = to_bool(c, v); }},
      {"recon.weight_floor", [&](const Ctx& c, const std::string& v) { cfg.recon.weight_floor = to_double(c, v); }},
      {"recon.magnitude_floor", [&](const Ctx& c, const std::string& v) { cfg.recon.magnitude_floor = to_double(c, v); }},
      {"recon.frequencies", [&](const Ctx& c, const std::string& v) {
         cfg.freq_indices.clear();
         try {
           for (double d : parse_number_list(v, c.field)) {
             if (d != std::floor(d)) c.fail("frequency indices must be integers");
             cfg.freq_indices.push_back(static_cast<int>(d));
           }
         } catch (const InvalidArgument& e) {
           c.fail(e.what());
         }
       }},
      {"calibration.size", [&](const Ctx& c, const std::string& v) { cfg.recon.calibration_size = static_cast<int>(to_int(c, v)); }},
      {"calibration.seed", [&](const Ctx& c, const std::string& v) { cfg.calibration_seed = to_seed(c, v); }},
      {"calibration.energy_retained", [&](const Ctx& c, const std::string& v) {
         cfg.calibration.energy_retained = cfg.recon.energy_retained = to_double(c, v);
       }},
      {"calibration.noise_snr_db", [&](const Ctx& c, const std::string& v) { cfg.calibration.noise_snr_db = to_double(c, v); }},
      {"baseline.method", [&](const Ctx& c, const std::string& v) {
         try {
           cfg.baseline.method = parse_method(v);
         } catch (const InvalidArgument& e) {
           c.fail(e.what());
         }
       }},
      {"baseline.iterations", [&](const Ctx& c, const std::string& v) { cfg.baseline.iterations = static_cast<int>(to_int(c, v)); }},
      {"baseline.damping", [&](const Ctx& c, const std::string& v) { cfg.baseline.damping = to_double(c, v); }},
      {"baseline.inner_iterations", [&](const Ctx& c, const std::string& v) { cfg.baseline.inner_iterations = static_cast<int>(to_int(c, v)); }},
      {"baseline.mu_rel", [&](const Ctx& c, const std::string& v) { cfg.baseline.mu_rel = to_double(c, v); }},
      {"baseline.backtracking", [&](const Ctx& c, const std::string& v) { cfg.baseline.backtracking = to_bool(c, v); }},
      {"sweep.alphas", [&](const Ctx& c, const std::string& v) {
         try {
           cfg.sweep.alphas = parse_number_list(v, c.field);
         } catch (const InvalidArgument& e) {
           c.fail(e.what());
         }
       }},
      {"sweep.factors", [&](const Ctx& c, const std::string& v) {
         cfg.sweep.factors.clear();
         try {
           for (double d : parse_number_list(v, c.field)) cfg.sweep.factors.push_back(static_cast<int>(d));
         } catch (const InvalidArgument& e) {
           c.fail(e.what());
         }
       }},
      {"sweep.n_phantoms", [&](const Ctx& c, const std::string& v) { cfg.sweep.n_phantoms = static_cast<int>(to_int(c, v)); }},
      {"sweep.first_seed", [&](const Ctx& c, const std::string& v) { cfg.sweep.first_seed = to_seed(c, v); }},
      {"dataset.n_phantoms", [&](const Ctx& c, const std::string& v) { cfg.dataset.n_phantoms = static_cast<int>(to_int(c, v)); }},
      {"dataset.first_seed", [&](const Ctx& c, const std::string& v) { cfg.dataset.first_seed = to_seed(c, v); }},
  };

  std::string section, raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source_name, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source_name, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(source_name, lineno, key + ": key outside of a [section]");
    const std::string field = section + "." + key;
    auto it = setters.find(field);
    if (it == setters.end()) throw ConfigError(source_name, lineno, field + ": unknown key");
    if (value.empty()) throw ConfigError(source_name, lineno, field + ": missing value");
    it->second(Ctx{source_name, lineno, field}, value);
  }
  cfg.geometry.rot_step = 2.0 * kPi / std::max(cfg.geometry.n_rot, 1);
  if (freq_touched) {
    if (n_freq < 1) throw ConfigError(source_name, 0, "geometry.n_freq: must be >= 1");
    cfg.geometry.frequencies.clear();
    for (long long k = 0; k < n_freq; ++k)
      cfg.geometry.frequencies.push_back(n_freq == 1 ? f_min : f_min + (f_max - f_min) * k / (n_freq - 1));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  return parse_config(f, path);
}

}  // namespace mct
