#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedfusion/tensor.hpp"

namespace fedfusion {

// Flat vector of trainable parameters; the unit exchanged in federation.
// Layout (the shape registry) is owned by the model that produced it, see
// fusion::parameter_layout.
struct ParamVector {
  std::vector<double> v;

  ParamVector() = default;
  explicit ParamVector(std::size_t n) : v(n, 0.0) {}
  explicit ParamVector(std::vector<double> values) : v(std::move(values)) {}

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  bool all_finite() const;
};

ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector& operator+=(ParamVector& a, const ParamVector& b);
bool operator==(const ParamVector& a, const ParamVector& b);
double linf_distance(const ParamVector& a, const ParamVector& b);

// FPV1 container: magic "FPV1", one dtype byte (4 = f32, 8 = f64),
// 8-byte little-endian element count, raw little-endian elements.
// The write dtype follows the active numeric profile unless forced.
void save_fpv(const std::filesystem::path& path, const ParamVector& p);
void save_fpv(const std::filesystem::path& path, const ParamVector& p, int dtype_bytes);
ParamVector load_fpv(const std::filesystem::path& path);

// Matrix stored as an FPV file plus a JSON sidecar {"rows": n, "cols": d}
// at path with extension replaced by .json. Extra sidecar fields (frame_hz)
// are preserved via the optional argument.
void save_matrix(const std::filesystem::path& fpv_path, const Tensor2& m,
                 double frame_hz = 0.0);
Tensor2 load_matrix(const std::filesystem::path& fpv_path, double* frame_hz = nullptr);

}  // namespace fedfusion
