#include "fedfusion/param_vector.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedfusion/profile.hpp"

namespace fedfusion {

namespace {

static_assert(std::endian::native == std::endian::little,
              "FPV writer assumes a little-endian host");

void write_u64(std::ofstream& out, std::uint64_t x) {
  out.write(reinterpret_cast<const char*>(&x), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t x = 0;
  in.read(reinterpret_cast<char*>(&x), 8);
  return x;
}

std::filesystem::path sidecar_path(const std::filesystem::path& fpv_path) {
  std::filesystem::path p = fpv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

bool ParamVector::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("ParamVector: size mismatch");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("ParamVector: size mismatch");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

ParamVector& operator+=(ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("ParamVector: size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.v[i] += b.v[i];
  return a;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.v[i] != b.v[i]) return false;
  }
  return true;
}

double linf_distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("linf_distance: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a.v[i] - b.v[i]));
  return d;
}

void save_fpv(const std::filesystem::path& path, const ParamVector& p) {
  save_fpv(path, p, current_profile() == Profile::run32 ? 4 : 8);
}

void save_fpv(const std::filesystem::path& path, const ParamVector& p, int dtype_bytes) {
  if (dtype_bytes != 4 && dtype_bytes != 8) {
    throw std::invalid_argument("save_fpv: dtype must be 4 or 8 bytes");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_fpv: cannot open " + path.string());
  out.write("FPV1", 4);
  char dtype = static_cast<char>(dtype_bytes);
  out.write(&dtype, 1);
  write_u64(out, p.size());
  if (dtype_bytes == 8) {
    out.write(reinterpret_cast<const char*>(p.v.data()),
              static_cast<std::streamsize>(p.size() * 8));
  } else {
    std::vector<float> narrow(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) narrow[i] = static_cast<float>(p.v[i]);
    out.write(reinterpret_cast<const char*>(narrow.data()),
              static_cast<std::streamsize>(narrow.size() * 4));
  }
  if (!out) throw std::runtime_error("save_fpv: write failed for " + path.string());
}

ParamVector load_fpv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_fpv: cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, "FPV1", 4) != 0) {
    throw std::runtime_error("load_fpv: bad magic in " + path.string());
  }
  char dtype = 0;
  in.read(&dtype, 1);
  if (dtype != 4 && dtype != 8) throw std::runtime_error("load_fpv: unknown dtype");
  std::uint64_t count = read_u64(in);
  ParamVector p(count);
  if (dtype == 8) {
    in.read(reinterpret_cast<char*>(p.v.data()), static_cast<std::streamsize>(count * 8));
  } else {
    std::vector<float> narrow(count);
    in.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(count * 4));
    for (std::size_t i = 0; i < count; ++i) p.v[i] = static_cast<double>(narrow[i]);
  }
  if (!in) throw std::runtime_error("load_fpv: truncated file " + path.string());
  return p;
}

void save_matrix(const std::filesystem::path& fpv_path, const Tensor2& m, double frame_hz) {
  save_fpv(fpv_path, ParamVector(m.data));
  nlohmann::json side{{"rows", m.rows}, {"cols", m.cols}};
  if (frame_hz > 0.0) side["frame_hz"] = frame_hz;
  std::ofstream out(sidecar_path(fpv_path), std::ios::trunc);
  if (!out) throw std::runtime_error("save_matrix: cannot open sidecar for " + fpv_path.string());
  out << side.dump(2) << "\n";
}

Tensor2 load_matrix(const std::filesystem::path& fpv_path, double* frame_hz) {
  std::ifstream in(sidecar_path(fpv_path));
  if (!in) throw std::runtime_error("load_matrix: missing sidecar for " + fpv_path.string());
  nlohmann::json side = nlohmann::json::parse(in);
  int rows = side.at("rows").get<int>();
  int cols = side.at("cols").get<int>();
  if (frame_hz != nullptr) *frame_hz = side.value("frame_hz", 0.0);
  ParamVector p = load_fpv(fpv_path);
  if (p.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw std::runtime_error("load_matrix: element count does not match sidecar shape");
  }
  Tensor2 m(rows, cols);
  m.data = std::move(p.v);
  return m;
}

}  // namespace fedfusion
