#include "fedfusion/tensor.hpp"

#include <cmath>
#include <string>

namespace fedfusion {

Tensor2::Tensor2(int r, int c) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw std::invalid_argument("Tensor2: negative shape");
  data.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
}

bool Tensor2::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows) +
                                "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                                "x" + std::to_string(b.cols));
  }
}

Tensor2 matmul_nn(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul_nn: inner dimension mismatch");
  Tensor2 out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int p = 0; p < a.cols; ++p) {
      double s = a.at(i, p);
      if (s == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += s * b.at(p, j);
    }
  }
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Tensor2 out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (int p = 0; p < a.cols; ++p) s += a.at(i, p) * b.at(j, p);
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
  Tensor2 out(a.cols, b.cols);
  for (int p = 0; p < a.rows; ++p) {
    for (int i = 0; i < a.cols; ++i) {
      double s = a.at(p, i);
      if (s == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += s * b.at(p, j);
    }
  }
  return out;
}

}  // namespace fedfusion
