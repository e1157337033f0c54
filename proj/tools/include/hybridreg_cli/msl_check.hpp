#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hybridreg/msl.hpp"

namespace hybridreg::cli {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured deviation (or effect size for the connectivity check)
  double tolerance = 0.0;  // bound the value is compared against
  std::string detail;
};

// Straight-line forward pass of the Mamba-Swin layer written from the
// definitions with explicit loops, independent of the library's helpers.
msl::FeatureTensor msl_forward_reference(const msl::FeatureTensor& z, const msl::SsmParams& ssm,
                                         const msl::AttnParams& attn, const msl::GateParams& gate);

// Scan vs unrolled recurrence, attention row sums, gate bounds, shifted-window
// connectivity and the full forward pass against the reference above.
std::vector<CheckResult> run_msl_suite(std::uint64_t seed);

}  // namespace hybridreg::cli
