#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mct/io.hpp"
#include "mct/phantom.hpp"
#include "mct/recon.hpp"

using namespace mct;
namespace fs = std::filesystem;

namespace {

// FNV-1a over the byte string.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mct-test-" + tag + "-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

Tensor scalar(float v) {
  Tensor t;
  t.values = {v};
  return t;
}

TensorErrorCode code_of(const std::string& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const TensorFileError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return TensorErrorCode::kIo;
}

std::string with_header(const std::string& text) {
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "MCTT1 %08zu\n", text.size());
  return prefix + text;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("0-d scalar round trip") {
  Tensor t = scalar(-0.0f);
  t.meta["seed"] = "3";
  const std::string bytes = encode_tensor(t);
  CHECK(bytes.size() == 15 + std::string("dtype: f32\nshape:\naxes:\nmeta.seed: 3\n").size() + 4);
  const Tensor u = decode_tensor(bytes);
  CHECK(u.shape.empty());
  CHECK(u.element_count() == 1);
  CHECK(same_bits(u.values, t.values));
  CHECK(u.meta == t.meta);
  CHECK(encode_tensor(u) == bytes);
}

TEST_CASE("61x61 complex image round trip is hash-identical") {
  TempDir dir("img");
  ComplexImage img = rasterize(presets::forearm(), GridSpec{});
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (std::size_t i = 0; i < img.size(); ++i) img.re[i] += n(rng);
  const Tensor t = image_to_tensor(img);
  write_tensor(dir.path / "a.mctt", t);
  const Tensor u = read_tensor(dir.path / "a.mctt");
  write_tensor(dir.path / "b.mctt", u);
  CHECK(fnv1a(slurp(dir.path / "a.mctt")) == fnv1a(slurp(dir.path / "b.mctt")));
  CHECK(same_bits(u.values, t.values));
  const ComplexImage back = tensor_to_image(u);
  CHECK(back.width() == 61);
  CHECK(back.grid.pixel_size == img.grid.pixel_size);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(back.re[i] == static_cast<float>(img.re[i]));
    CHECK(back.im[i] == static_cast<float>(img.im[i]));
  }
}

TEST_CASE("cube payload size") {
  MeasurementCube cube(120, 72, ScanGeometry{}.frequencies);
  REQUIRE(cube.n_freq() == 11);
  for (std::size_t i = 0; i < cube.data.size(); ++i) cube.data[i] = cdouble(double(i), -double(i));
  cube.alpha = 0.96;
  cube.seed = 42;
  cube.geometry_hash = "abc123";
  const Tensor t = cube_to_tensor(cube);
  const std::string bytes = encode_tensor(t);
  const std::size_t hlen = std::stoul(bytes.substr(6, 8));
  CHECK(bytes.size() - 15 - hlen == 120u * 72u * 11u * 8u);
  const MeasurementCube back = tensor_to_cube(decode_tensor(bytes));
  CHECK(back.n_disp == 120);
  CHECK(back.n_rot == 72);
  CHECK(back.frequencies == cube.frequencies);
  CHECK(back.alpha == 0.96);
  CHECK(back.seed == 42);
  CHECK(back.geometry_hash == "abc123");
  CHECK(back.at(7, 3, 2) == cube.at(7, 3, 2));
}

TEST_CASE("little-endian payload regardless of host") {
  const std::string bytes = encode_tensor(scalar(1.0f));
  CHECK(bytes.substr(bytes.size() - 4) == std::string("\x00\x00\x80\x3f", 4));
}

TEST_CASE("distinct error codes") {
  Tensor t;
  t.dtype = DType::kC64;
  t.shape = {2};
  t.axes = {"x"};
  t.values = {1, 2, 3, 4};
  const std::string good = encode_tensor(t);

  std::string bad = good;
  bad[0] = 'X';
  CHECK(code_of(bad) == TensorErrorCode::kBadMagic);
  CHECK(code_of("") == TensorErrorCode::kTruncated);
  CHECK(code_of(good.substr(0, good.size() - 1)) == TensorErrorCode::kTruncated);
  CHECK(code_of(good.substr(0, 10)) == TensorErrorCode::kTruncated);
  CHECK(code_of(good + std::string(1, '\0')) == TensorErrorCode::kPayloadMismatch);
  CHECK(code_of("MCTT1 00065537\n") == TensorErrorCode::kHeaderTooLarge);
  CHECK(code_of("MCTT1 0000001x\n") == TensorErrorCode::kParse);
  CHECK(code_of(with_header("dtype: f16\nshape:\naxes:\n")) == TensorErrorCode::kParse);
  CHECK(code_of(with_header("dtype: f32\nshape: 1\n")) == TensorErrorCode::kParse);
  CHECK(code_of(with_header("dtype: f32\nshape: 2\naxes: x y\n")) == TensorErrorCode::kParse);
  CHECK(code_of(with_header("dtype: f32\nshape: 1\naxes: x\n")) == TensorErrorCode::kTruncated);
  CHECK_THROWS_AS(read_tensor("/nonexistent/x.mctt"), TensorFileError);
}

TEST_CASE("encoder rejects inconsistent tensors") {
  Tensor t = scalar(1.0f);
  t.values.push_back(2.0f);
  CHECK_THROWS_AS(encode_tensor(t), InvalidArgument);
  Tensor u = scalar(1.0f);
  u.meta["a b"] = "1";
  CHECK_THROWS_AS(encode_tensor(u), InvalidArgument);
  Tensor v = scalar(1.0f);
  v.meta["k"] = std::string(70000, 'x');
  CHECK_THROWS_AS(encode_tensor(v), TensorFileError);
}

TEST_CASE("header-only read") {
  TempDir dir("hdr");
  const MeasurementCube cube(4, 3, {5.0e9, 6.0e9});
  write_tensor(dir.path / "c.mctt", cube_to_tensor(cube));
  const Tensor h = read_tensor_header(dir.path / "c.mctt");
  CHECK(h.values.empty());
  CHECK(h.shape == std::vector<std::uint64_t>{4, 3, 2});
  CHECK(h.meta.at("frequencies") == "5e+09 6e+09");
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 5.5e9, -2.5e-300, 0.0})
    CHECK(parse_double(format_double(v), "v") == v);
  CHECK(std::isinf(parse_double("inf", "v")));
  CHECK_THROWS_AS(parse_double("1.0x", "v"), InvalidArgument);
}

TEST_CASE("manifest") {
  TempDir dir("manifest");
  CHECK(dataset_manifest(dir.path).empty());

  const Tensor img = image_to_tensor(ComplexImage(GridSpec{}));
  MeasurementCube cube(2, 2, {5.5e9});
  cube.seed = 9;
  for (const std::string id : {"p000", "p001", "p002"}) {
    write_tensor(dir.path / (id + ".phantom.mctt"), img);
    write_tensor(dir.path / (id + ".cube.mctt"), cube_to_tensor(cube));
    write_tensor(dir.path / (id + ".recon.f10.mctt"), img);
    write_tensor(dir.path / (id + ".recon.f2.mctt"), img);
  }
  spit(dir.path / "notes.txt", "ignored");
  auto m = dataset_manifest(dir.path);
  REQUIRE(m.size() == 3);
  for (const auto& e : m) {
    CHECK_FALSE(e.gap);
    REQUIRE(e.recons.size() == 2);
    CHECK(e.recons[0].filename().string() == e.id + ".recon.f2.mctt");
    CHECK(e.metadata.at("seed") == "9");
  }

  TempDir lone("lone");
  write_tensor(lone.path / "q.cube.mctt", cube_to_tensor(cube));
  m = dataset_manifest(lone.path);
  REQUIRE(m.size() == 1);
  CHECK(m[0].gap);
  CHECK_FALSE(m[0].phantom);
  CHECK_THROWS_AS(dataset_manifest(lone.path / "q.cube.mctt"), IoError);
}

TEST_CASE("sparse cache round trip") {
  TempDir dir("sparse");
  std::vector<Eigen::Triplet<double>> trips = {{0, 1, 0.25}, {2, 0, -1e-300}, {2, 3, 3.0}};
  SparseMatrix m(3, 4);
  m.setFromTriplets(trips.begin(), trips.end());
  write_sparse(dir.path / "m.mcts", m);
  const SparseMatrix r = read_sparse(dir.path / "m.mcts");
  CHECK(r.rows() == 3);
  CHECK(r.cols() == 4);
  CHECK(r.nonZeros() == 3);
  CHECK(Eigen::MatrixXd(r) == Eigen::MatrixXd(m));
  const std::string bytes = slurp(dir.path / "m.mcts");
  CHECK(bytes.size() == 6 + 24 + 3 * 16);
  spit(dir.path / "t.mcts", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_sparse(dir.path / "t.mcts"), TensorFileError);
}

TEST_CASE("calibration cache round trip") {
  TempDir dir("calib");
  CalibratedInverse inv;
  inv.n_rot = 2;
  inv.n_disp = 3;
  inv.n_virtual = 4;
  inv.geometry_hash = "deadbeef";
  inv.stats.n_phantoms = 5;
  inv.stats.seed = 11;
  inv.stats.ranks = {3, 2};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int t = 0; t < 2; ++t) {
    Eigen::MatrixXcd b(4, 3);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = cdouble(n(rng), n(rng));
    inv.blocks.push_back(b);
  }
  write_calibration(dir.path / "c.mctc", inv);
  const CalibratedInverse r = read_calibration(dir.path / "c.mctc");
  CHECK(r.geometry_hash == "deadbeef");
  CHECK(r.stats.ranks == inv.stats.ranks);
  CHECK(r.stats.seed == 11);
  for (int t = 0; t < 2; ++t) CHECK(r.blocks[t] == inv.blocks[t]);
  CalibrationOptions o;
  CHECK(calibration_cache_name("h", 2048, 7, o) != calibration_cache_name("h", 2048, 8, o));
}

}
