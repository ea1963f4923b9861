#include "fedfusion/metrics.hpp"

#include <stdexcept>

namespace fedfusion {

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("compute_metrics: empty input");
  long correct = 0;
  // confusion[c] = (tp, fp, fn) for class c
  long tp[2] = {0, 0};
  long fp[2] = {0, 0};
  long fn[2] = {0, 0};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    int p = predictions[i];
    int y = labels[i];
    if (p != 0 && p != 1) throw std::invalid_argument("compute_metrics: prediction not binary");
    if (y != 0 && y != 1) throw std::invalid_argument("compute_metrics: label not binary");
    if (p == y) {
      ++correct;
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  double f1_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  m.f1 = f1_sum / 2.0;
  return m;
}

}  // namespace fedfusion
