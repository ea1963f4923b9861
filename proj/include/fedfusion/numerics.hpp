#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedfusion/param_vector.hpp"
#include "fedfusion/tensor.hpp"

namespace fedfusion {

// Masked softmax. Masked entries are exactly zero; unmasked entries sum
// to one. Throws "empty support" when every entry is masked.
std::vector<double> softmax(std::span<const double> v, std::span<const std::uint8_t> mask);
std::vector<double> softmax(std::span<const double> v);

double sigmoid(double x);

// out = x * w^T + b broadcast per row; w is out_features x in_features.
Tensor2 linear(const Tensor2& x, const Tensor2& w, std::span<const double> b);

// Negative log softmax probability of the labeled class.
double cross_entropy(std::span<const double> logits, int label);
// d(loss)/d(logits) = softmax(logits) - onehot(label).
std::vector<double> cross_entropy_grad(std::span<const double> logits, int label);

struct OptimizerState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  long step = 0;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  static OptimizerState make(std::size_t n, double lr, double weight_decay);
};

// One AdamW step: decoupled decay applied multiplicatively before the
// bias-corrected update. Advances the state. Throws "numeric overflow"
// on non-finite gradients.
ParamVector adamw_step(const ParamVector& params, const ParamVector& grads, OptimizerState& state);

// Plain gradient descent step (test mode for federation equivalences).
ParamVector gd_step(const ParamVector& params, const ParamVector& grads, double lr);

}  // namespace fedfusion
