#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mct/error.hpp"
#include "mct/forward.hpp"
#include "mct/geometry.hpp"
#include "mct/image.hpp"
#include "mct/recon.hpp"

namespace mct {

// ---- TensorFile -------------------------------------------------------------
//
// Layout:
//   "MCTT1 " <8 decimal digits: header byte count> "\n"
//   header: "dtype: f32|c64\n" "shape: d0 d1 ...\n" "axes: a0 a1 ...\n"
//           then "meta.<key>: <value>\n" lines sorted by key
//   payload: little-endian float32, row-major; c64 is interleaved (re, im)

enum class DType { kF32, kC64 };

struct Tensor {
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> shape;  // empty: 0-d scalar
  std::vector<std::string> axes;     // one name per dimension
  std::vector<float> values;         // element_count() * (c64 ? 2 : 1)
  std::map<std::string, std::string> meta;

  std::uint64_t element_count() const;
  std::size_t scalars_per_element() const { return dtype == DType::kC64 ? 2 : 1; }
};

enum class TensorErrorCode { kBadMagic = 1, kTruncated, kPayloadMismatch, kHeaderTooLarge, kParse, kIo };

class TensorFileError : public IoError {
 public:
  TensorFileError(TensorErrorCode code, const std::string& what) : IoError(what), code_(code) {}
  TensorErrorCode code() const { return code_; }

 private:
  TensorErrorCode code_;
};

constexpr std::size_t kMaxTensorHeader = 64 * 1024;

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes, const std::string& source = "<memory>");
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);
// Header only; values stays empty.
Tensor read_tensor_header(const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& field);

// Images are (y, x) c64 tensors; cubes are (displacement, rotation, frequency).
Tensor image_to_tensor(const ComplexImage& img);
ComplexImage tensor_to_image(const Tensor& t);
Tensor cube_to_tensor(const MeasurementCube& cube);
MeasurementCube tensor_to_cube(const Tensor& t);

// ---- Caches -----------------------------------------------------------------

// "MCTS1\n" then u64 rows, cols, nnz and nnz (u32 row, u32 col, f64 value)
// triples in row-major order, all little-endian.
void write_sparse(const std::filesystem::path& path, const SparseMatrix& m);
SparseMatrix read_sparse(const std::filesystem::path& path);

void write_calibration(const std::filesystem::path& path, const CalibratedInverse& inv);
CalibratedInverse read_calibration(const std::filesystem::path& path);

// File name keyed by geometry hash, K, seed and rank policy.
std::string calibration_cache_name(const std::string& geometry_hash, int k, std::uint64_t seed,
                                   const CalibrationOptions& opt);

// ---- Dataset manifest -------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::optional<std::filesystem::path> phantom;
  std::optional<std::filesystem::path> cube;
  std::vector<std::filesystem::path> recons;  // ordered by frequency index
  std::map<std::string, std::string> metadata;  // from the cube header, if present
  bool gap = false;  // phantom, cube or every recon missing
};

// Groups <id>.phantom.mctt, <id>.cube.mctt and <id>.recon.f<k>.mctt files.
std::vector<ManifestEntry> dataset_manifest(const std::filesystem::path& dir);

}  // namespace mct
