#pragma once

#include <limits>

#include "mct/pipeline.hpp"
#include "mct/recon.hpp"

#ifndef MCT_TEST_CACHE_DIR
#define MCT_TEST_CACHE_DIR ""
#endif

namespace fixture {

// Calibrations are cached under the build tree; the first run builds them.
inline mct::CalibratedInverse calibration(const mct::SparseSystem& sys, int k, std::uint64_t seed = 7,
                                          double noise_snr_db = 40.0) {
  mct::CalibrationOptions opt;
  opt.noise_snr_db = noise_snr_db;
  return mct::obtain_calibration(sys, k, seed, opt, MCT_TEST_CACHE_DIR);
}

inline mct::ScanOptions noiseless(double alpha) {
  mct::ScanOptions o;
  o.alpha = alpha;
  o.snr_db = std::numeric_limits<double>::infinity();
  return o;
}

}  // namespace fixture
