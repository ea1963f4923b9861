#pragma once

#include <cstdint>
#include <vector>

namespace fedfusion {

// Numeric profile. All arithmetic runs in double; the run profile narrows
// stored values (parameter files, exchanged parameter vectors, generated
// features) to float32 precision at module boundaries.
enum class Profile { test64, run32 };

Profile current_profile();
void set_profile(Profile p);

// Identity in the test profile, float round-trip in the run profile.
double quantize(double x);
void quantize(std::vector<double>& xs);

}  // namespace fedfusion
