#pragma once

#include <stdexcept>
#include <string>

namespace fedfusion {

// Binary diagnosis labels used throughout the pipeline.
enum class Label : int { cn = 0, ad = 1 };

inline Label opposite(Label y) { return y == Label::ad ? Label::cn : Label::ad; }

inline std::string to_string(Label y) { return y == Label::ad ? "AD" : "CN"; }

inline Label label_from_string(const std::string& s) {
  if (s == "AD") return Label::ad;
  if (s == "CN") return Label::cn;
  throw std::invalid_argument("unknown label: " + s);
}

}  // namespace fedfusion
