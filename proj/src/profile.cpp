#include "fedfusion/profile.hpp"

namespace fedfusion {

namespace {
Profile g_profile = Profile::test64;
}

Profile current_profile() { return g_profile; }

void set_profile(Profile p) { g_profile = p; }

double quantize(double x) {
  if (g_profile == Profile::test64) return x;
  return static_cast<double>(static_cast<float>(x));
}

void quantize(std::vector<double>& xs) {
  if (g_profile == Profile::test64) return;
  for (double& x : xs) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace fedfusion
