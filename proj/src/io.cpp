#include "mct/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <regex>
#include <sstream>

namespace mct {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[] = "MCTT1 ";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPrefixLen = kMagicLen + 8 + 1;

[[noreturn]] void fail(TensorErrorCode code, const std::string& source, const std::string& what) {
  throw TensorFileError(code, source + ": " + what);
}

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorFileError(TensorErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

bool valid_token(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\n' || c == '\r' || c == ':'; });
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::uint64_t checked_count(const std::vector<std::uint64_t>& shape, const std::string& source) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / 8 / d) fail(TensorErrorCode::kParse, source, "shape overflows");
    n *= d;
  }
  return n;
}

struct Header {
  Tensor t;
  std::size_t payload_offset = 0;
};

Header parse_header(const std::string& bytes, const std::string& source) {
  const std::size_t have = std::min(bytes.size(), kMagicLen);
  if (bytes.compare(0, have, kMagic, have) != 0) fail(TensorErrorCode::kBadMagic, source, "bad magic");
  if (bytes.size() < kPrefixLen) fail(TensorErrorCode::kTruncated, source, "truncated header prefix");
  std::size_t hlen = 0;
  for (std::size_t i = kMagicLen; i < kMagicLen + 8; ++i) {
    const char c = bytes[i];
    if (c < '0' || c > '9') fail(TensorErrorCode::kParse, source, "malformed header length");
    hlen = hlen * 10 + static_cast<std::size_t>(c - '0');
  }
  if (bytes[kPrefixLen - 1] != '\n') fail(TensorErrorCode::kParse, source, "malformed header prefix");
  if (hlen > kMaxTensorHeader) fail(TensorErrorCode::kHeaderTooLarge, source, "header exceeds 64 KiB");
  if (bytes.size() < kPrefixLen + hlen) fail(TensorErrorCode::kTruncated, source, "truncated header");
  const std::string text = bytes.substr(kPrefixLen, hlen);
  if (!text.empty() && text.back() != '\n') fail(TensorErrorCode::kParse, source, "header must end with a newline");

  Header h;
  bool have_dtype = false, have_shape = false, have_axes = false;
  std::istringstream in(text);
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto colon = line.find(": ");
    const auto where = "header line " + std::to_string(lineno);
    if (colon == std::string::npos) {
      if (line == "shape:" || line == "axes:") {
        (line == "shape:" ? have_shape : have_axes) = true;
        continue;
      }
      fail(TensorErrorCode::kParse, source, where + ": expected 'key: value'");
    }
    const std::string key = line.substr(0, colon), value = line.substr(colon + 2);
    if (key == "dtype") {
      if (value == "f32") h.t.dtype = DType::kF32;
      else if (value == "c64") h.t.dtype = DType::kC64;
      else fail(TensorErrorCode::kParse, source, where + ": unknown dtype '" + value + "'");
      have_dtype = true;
    } else if (key == "shape") {
      for (const auto& w : split_ws(value)) {
        std::uint64_t d = 0;
        auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), d);
        if (ec != std::errc() || p != w.data() + w.size()) fail(TensorErrorCode::kParse, source, where + ": bad dimension '" + w + "'");
        h.t.shape.push_back(d);
      }
      have_shape = true;
    } else if (key == "axes") {
      h.t.axes = split_ws(value);
      have_axes = true;
    } else if (key.rfind("meta.", 0) == 0 && key.size() > 5) {
      h.t.meta[key.substr(5)] = value;
    } else {
      fail(TensorErrorCode::kParse, source, where + ": unknown key '" + key + "'");
    }
  }
  if (!have_dtype || !have_shape || !have_axes) fail(TensorErrorCode::kParse, source, "header lacks dtype, shape or axes");
  if (h.t.axes.size() != h.t.shape.size()) fail(TensorErrorCode::kParse, source, "axes and shape differ in rank");
  checked_count(h.t.shape, source);
  h.payload_offset = kPrefixLen + hlen;
  return h;
}

}  // namespace

std::uint64_t Tensor::element_count() const { return checked_count(shape, "<tensor>"); }

std::string encode_tensor(const Tensor& t) {
  if (t.axes.size() != t.shape.size()) throw InvalidArgument("tensor: axes and shape differ in rank");
  if (t.values.size() != t.element_count() * t.scalars_per_element())
    throw InvalidArgument("tensor: value count does not match shape and dtype");
  std::string h;
  h += std::string("dtype: ") + (t.dtype == DType::kC64 ? "c64" : "f32") + "\n";
  h += "shape:";
  for (auto d : t.shape) h += " " + std::to_string(d);
  h += "\naxes:";
  for (const auto& a : t.axes) {
    if (!valid_token(a)) throw InvalidArgument("tensor: invalid axis name '" + a + "'");
    h += " " + a;
  }
  h += "\n";
  for (const auto& [k, v] : t.meta) {
    if (!valid_token(k)) throw InvalidArgument("tensor: invalid metadata key '" + k + "'");
    if (v.find('\n') != std::string::npos || v.find('\r') != std::string::npos)
      throw InvalidArgument("tensor: metadata value for '" + k + "' contains a newline");
    h += "meta." + k + ": " + v + "\n";
  }
  if (h.size() > kMaxTensorHeader) throw TensorFileError(TensorErrorCode::kHeaderTooLarge, "tensor header exceeds 64 KiB");
  std::ostringstream prefix;
  prefix << kMagic << std::setw(8) << std::setfill('0') << h.size() << '\n';
  std::string out = prefix.str() + h;
  out.reserve(out.size() + t.values.size() * 4);
  for (float v : t.values) put_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(const std::string& bytes, const std::string& source) {
  Header h = parse_header(bytes, source);
  const std::uint64_t n = h.t.element_count() * h.t.scalars_per_element();
  const std::uint64_t have = bytes.size() - h.payload_offset;
  if (have < n * 4) fail(TensorErrorCode::kTruncated, source, "payload truncated: " + std::to_string(have) + " of " + std::to_string(n * 4) + " bytes");
  if (have > n * 4) fail(TensorErrorCode::kPayloadMismatch, source, "payload has " + std::to_string(have - n * 4) + " trailing bytes");
  h.t.values.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
  for (std::uint64_t i = 0; i < n; ++i) h.t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
  return h.t;
}

void write_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

Tensor read_tensor_header(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorFileError(TensorErrorCode::kIo, "cannot open " + path.string());
  std::string prefix(kPrefixLen, '\0');
  f.read(prefix.data(), static_cast<std::streamsize>(kPrefixLen));
  prefix.resize(static_cast<std::size_t>(f.gcount()));
  std::size_t hlen = 0;
  if (prefix.size() == kPrefixLen && prefix.compare(0, kMagicLen, kMagic) == 0) {
    hlen = std::strtoull(prefix.substr(kMagicLen, 8).c_str(), nullptr, 10);
    hlen = std::min(hlen, kMaxTensorHeader + 1);
  }
  std::string rest(hlen, '\0');
  f.read(rest.data(), static_cast<std::streamsize>(hlen));
  rest.resize(static_cast<std::size_t>(f.gcount()));
  return parse_header(prefix + rest, path.string()).t;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(const std::string& s, const std::string& field) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InvalidArgument("cannot parse " + field + " from '" + s + "'");
  return v;
}

namespace {

std::string meta_or(const Tensor& t, const std::string& key, const std::string& fallback) {
  auto it = t.meta.find(key);
  return it == t.meta.end() ? fallback : it->second;
}

}  // namespace

Tensor image_to_tensor(const ComplexImage& img) {
  Tensor t;
  t.dtype = DType::kC64;
  t.shape = {static_cast<std::uint64_t>(img.height()), static_cast<std::uint64_t>(img.width())};
  t.axes = {"y", "x"};
  t.values.resize(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    t.values[2 * i] = static_cast<float>(img.re[i]);
    t.values[2 * i + 1] = static_cast<float>(img.im[i]);
  }
  t.meta["pixel_size"] = format_double(img.grid.pixel_size);
  t.meta["ref_frequency"] = format_double(img.ref_frequency);
  return t;
}

ComplexImage tensor_to_image(const Tensor& t) {
  if (t.dtype != DType::kC64 || t.shape.size() != 2) throw InvalidArgument("image tensor must be 2-d c64");
  GridSpec g;
  g.height = static_cast<int>(t.shape[0]);
  g.width = static_cast<int>(t.shape[1]);
  g.pixel_size = parse_double(meta_or(t, "pixel_size", format_double(0.30 / g.width)), "pixel_size");
  ComplexImage img(g, parse_double(meta_or(t, "ref_frequency", "5500000000"), "ref_frequency"));
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.re[i] = t.values[2 * i];
    img.im[i] = t.values[2 * i + 1];
  }
  return img;
}

Tensor cube_to_tensor(const MeasurementCube& cube) {
  Tensor t;
  t.dtype = DType::kC64;
  t.shape = {static_cast<std::uint64_t>(cube.n_disp), static_cast<std::uint64_t>(cube.n_rot),
             static_cast<std::uint64_t>(cube.n_freq())};
  t.axes = {"displacement", "rotation", "frequency"};
  t.values.resize(cube.data.size() * 2);
  for (std::size_t i = 0; i < cube.data.size(); ++i) {
    t.values[2 * i] = static_cast<float>(cube.data[i].real());
    t.values[2 * i + 1] = static_cast<float>(cube.data[i].imag());
  }
  std::string freqs;
  for (double f : cube.frequencies) freqs += (freqs.empty() ? "" : " ") + format_double(f);
  t.meta["frequencies"] = freqs;
  t.meta["alpha"] = format_double(cube.alpha);
  t.meta["snr_db"] = format_double(cube.snr_db);
  t.meta["seed"] = std::to_string(cube.seed);
  if (!cube.geometry_hash.empty()) t.meta["geometry_hash"] = cube.geometry_hash;
  return t;
}

MeasurementCube tensor_to_cube(const Tensor& t) {
  if (t.dtype != DType::kC64 || t.shape.size() != 3 ||
      t.axes != std::vector<std::string>{"displacement", "rotation", "frequency"})
    throw InvalidArgument("cube tensor must be c64 with axes (displacement, rotation, frequency)");
  std::vector<double> freqs;
  for (const auto& w : split_ws(meta_or(t, "frequencies", ""))) freqs.push_back(parse_double(w, "frequencies"));
  if (freqs.size() != t.shape[2]) throw InvalidArgument("cube tensor: frequency list does not match the frequency axis");
  MeasurementCube cube(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]), freqs);
  for (std::size_t i = 0; i < cube.data.size(); ++i) cube.data[i] = cdouble(t.values[2 * i], t.values[2 * i + 1]);
  cube.alpha = parse_double(meta_or(t, "alpha", "1"), "alpha");
  cube.snr_db = parse_double(meta_or(t, "snr_db", "inf"), "snr_db");
  cube.seed = std::stoull(meta_or(t, "seed", "0"));
  cube.geometry_hash = meta_or(t, "geometry_hash", "");
  return cube;
}

// ---- Caches -----------------------------------------------------------------

namespace {

class Reader {
 public:
  Reader(std::string bytes, std::string source) : b_(std::move(bytes)), src_(std::move(source)) {}
  template <typename U>
  U u() {
    need(sizeof(U));
    const U v = get_le<U>(reinterpret_cast<const unsigned char*>(b_.data()) + pos_);
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(u<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_end() const {
    if (pos_ != b_.size()) fail(TensorErrorCode::kPayloadMismatch, src_, "trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) fail(TensorErrorCode::kTruncated, src_, "unexpected end of file");
  }
  std::string b_, src_;
  std::size_t pos_ = 0;
};

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

}  // namespace

void write_sparse(const fs::path& path, const SparseMatrix& m) {
  std::string out = "MCTS1\n";
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.nonZeros()));
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(it.row()));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(it.col()));
      put_f64(out, it.value());
    }
  write_file(path, out);
}

SparseMatrix read_sparse(const fs::path& path) {
  Reader r(read_file(path), path.string());
  if (r.str(6) != "MCTS1\n") fail(TensorErrorCode::kBadMagic, path.string(), "bad magic");
  const auto rows = r.u<std::uint64_t>(), cols = r.u<std::uint64_t>(), nnz = r.u<std::uint64_t>();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (std::uint64_t i = 0; i < nnz; ++i) {
    const auto row = r.u<std::uint32_t>(), col = r.u<std::uint32_t>();
    const double v = r.f64();
    if (row >= rows || col >= cols) fail(TensorErrorCode::kParse, path.string(), "entry outside the matrix");
    trips.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
  }
  r.expect_end();
  SparseMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

void write_calibration(const fs::path& path, const CalibratedInverse& inv) {
  std::string out = "MCTC1\n";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(inv.n_rot));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(inv.n_disp));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(inv.n_virtual));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(inv.geometry_hash.size()));
  out += inv.geometry_hash;
  const auto& s = inv.stats;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.n_phantoms));
  put_le<std::uint64_t>(out, s.seed);
  put_f64(out, s.energy_retained);
  put_f64(out, s.noise_snr_db);
  put_f64(out, s.median_residual);
  put_f64(out, s.p95_residual);
  put_f64(out, s.fraction_within_5pct);
  for (int t = 0; t < inv.n_rot; ++t) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.ranks[t]));
  for (const auto& b : inv.blocks)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < b.rows(); ++i) {
        put_f64(out, b(i, j).real());
        put_f64(out, b(i, j).imag());
      }
  write_file(path, out);
}

CalibratedInverse read_calibration(const fs::path& path) {
  Reader r(read_file(path), path.string());
  if (r.str(6) != "MCTC1\n") fail(TensorErrorCode::kBadMagic, path.string(), "bad magic");
  CalibratedInverse inv;
  inv.n_rot = static_cast<int>(r.u<std::uint32_t>());
  inv.n_disp = static_cast<int>(r.u<std::uint32_t>());
  inv.n_virtual = static_cast<int>(r.u<std::uint32_t>());
  inv.geometry_hash = r.str(r.u<std::uint32_t>());
  auto& s = inv.stats;
  s.n_phantoms = static_cast<int>(r.u<std::uint32_t>());
  s.seed = r.u<std::uint64_t>();
  s.energy_retained = r.f64();
  s.noise_snr_db = r.f64();
  s.median_residual = r.f64();
  s.p95_residual = r.f64();
  s.fraction_within_5pct = r.f64();
  s.ranks.resize(inv.n_rot);
  for (auto& k : s.ranks) k = static_cast<int>(r.u<std::uint32_t>());
  inv.blocks.resize(inv.n_rot);
  for (auto& b : inv.blocks) {
    b.resize(inv.n_virtual, inv.n_disp);
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < b.rows(); ++i) {
        const double re = r.f64();
        b(i, j) = cdouble(re, r.f64());
      }
  }
  r.expect_end();
  return inv;
}

std::string calibration_cache_name(const std::string& geometry_hash, int k, std::uint64_t seed,
                                   const CalibrationOptions& opt) {
  std::ostringstream s;
  s << "calib-" << geometry_hash << "-K" << k << "-s" << seed << "-e" << format_double(opt.energy_retained) << "-n"
    << format_double(opt.noise_snr_db) << ".mctc";
  return s.str();
}

// ---- Manifest ---------------------------------------------------------------

std::vector<ManifestEntry> dataset_manifest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  static const std::regex pat(R"(^(.+)\.(phantom|cube|recon\.f(\d+))\.mctt$)");
  std::map<std::string, ManifestEntry> byid;
  std::map<std::string, std::map<int, fs::path>> recons;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pat)) continue;
    const std::string id = m[1];
    auto& entry = byid[id];
    entry.id = id;
    if (m[2] == "phantom") entry.phantom = e.path();
    else if (m[2] == "cube") entry.cube = e.path();
    else recons[id][std::stoi(m[3])] = e.path();
  }
  std::vector<ManifestEntry> out;
  for (auto& [id, entry] : byid) {
    for (const auto& [k, p] : recons[id]) entry.recons.push_back(p);
    if (entry.cube) {
      try {
        entry.metadata = read_tensor_header(*entry.cube).meta;
      } catch (const TensorFileError&) {
        entry.gap = true;
      }
    }
    entry.gap = entry.gap || !entry.phantom || !entry.cube || entry.recons.empty();
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace mct
