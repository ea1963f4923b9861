#pragma once

#include <span>

namespace fedfusion {

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // macro over the two classes
};

// Accuracy and macro-F1 over binary class ids. A class with zero precision
// and recall contributes an F1 of 0. Throws on empty input.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels);

}  // namespace fedfusion
