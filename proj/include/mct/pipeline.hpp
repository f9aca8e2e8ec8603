#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mct/analysis.hpp"
#include "mct/config.hpp"
#include "mct/phantom.hpp"

namespace mct {

// Phantom named by the config: a spec file if given, otherwise a preset.
PhantomSpec configured_phantom(const RunConfig& cfg);

// Cache directory: $MCT_CACHE_DIR if set, else the fallback.
std::filesystem::path cache_dir(const std::filesystem::path& fallback);

// Loads the calibration for (geometry, K, seed, policy) from cache_dir, or
// builds and stores it. An empty cache_dir disables caching.
CalibratedInverse obtain_calibration(const SparseSystem& sys, int k, std::uint64_t seed,
                                     const CalibrationOptions& opt, const std::filesystem::path& cache_dir);

struct SuiteOptions {
  std::vector<std::uint64_t> seeds;  // random_phantom seeds
  double alpha = 0.96;
  int disp_factor = 1;
  int rot_factor = 1;
  bool run_rn = false;
  bool run_cn = false;
};

struct SuiteResult {
  std::vector<MetricReport> opt, rn, cn;
  AggregateReport opt_summary, rn_summary, cn_summary;
};

// Simulates every phantom at the reference frequency only (the middle entry
// of the configured list), optionally decimates the cube, and reconstructs
// with OPT and the requested baselines.
SuiteResult evaluate_suite(const RunConfig& cfg, const SuiteOptions& opt, const std::filesystem::path& cache_dir);

// Index of the reference frequency inside the configured list.
int reference_frequency_index(const ScanGeometry& geom);

std::vector<std::uint64_t> seed_range(std::uint64_t first, int count);

}  // namespace mct
