#include "fedfusion/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedfusion {

std::vector<double> softmax(std::span<const double> v, std::span<const std::uint8_t> mask) {
  if (v.size() != mask.size()) throw std::invalid_argument("softmax: mask size mismatch");
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i] && v[i] > hi) hi = v[i];
  }
  if (hi == -std::numeric_limits<double>::infinity()) {
    throw std::runtime_error("softmax: empty support");
  }
  std::vector<double> out(v.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(v[i] - hi);
    z += out[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) out[i] /= z;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<std::uint8_t> all(v.size(), 1);
  return softmax(v, all);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 linear(const Tensor2& x, const Tensor2& w, std::span<const double> b) {
  if (x.cols != w.cols) throw std::invalid_argument("linear: feature dimension mismatch");
  if (!b.empty() && b.size() != static_cast<std::size_t>(w.rows)) {
    throw std::invalid_argument("linear: bias size mismatch");
  }
  Tensor2 out = matmul_nt(x, w);
  if (!b.empty()) {
    for (int i = 0; i < out.rows; ++i) {
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += b[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

double cross_entropy(std::span<const double> logits, int label) {
  if (logits.empty()) throw std::invalid_argument("cross_entropy: empty logits");
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  double hi = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - hi);
  return std::log(z) - (logits[static_cast<std::size_t>(label)] - hi);
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
  std::vector<double> g = softmax(logits);
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

OptimizerState OptimizerState::make(std::size_t n, double lr, double weight_decay) {
  OptimizerState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  s.weight_decay = weight_decay;
  return s;
}

ParamVector adamw_step(const ParamVector& params, const ParamVector& grads,
                       OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adamw_step: size mismatch");
  }
  if (!grads.all_finite()) throw std::runtime_error("adamw_step: numeric overflow");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  ParamVector out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    double theta = params[i] * (1.0 - state.lr * state.weight_decay);
    out.v[i] = theta - state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  return out;
}

ParamVector gd_step(const ParamVector& params, const ParamVector& grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("gd_step: size mismatch");
  if (!grads.all_finite()) throw std::runtime_error("gd_step: numeric overflow");
  ParamVector out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.v[i] = params[i] - lr * grads[i];
  return out;
}

}  // namespace fedfusion
