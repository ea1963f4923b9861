#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedfusion {

// Dense row-major matrix, the only tensor rank the project needs.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Tensor2() = default;
  Tensor2(int r, int c);

  static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  std::size_t size() const { return data.size(); }
  bool all_finite() const;
};

// a (m*k) times b (k*n)
Tensor2 matmul_nn(const Tensor2& a, const Tensor2& b);
// a (m*k) times b-transpose, with b stored n*k
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
// a-transpose times b, with a stored k*m and b stored k*n -> m*n
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);

void check_same_shape(const Tensor2& a, const Tensor2& b, const char* op);

}  // namespace fedfusion
