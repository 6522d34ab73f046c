#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gf::gradsuite {

struct Result {
  std::string name;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  int points = 0;
};

// Central finite differences against the analytic gradients of every loss
// and both composites, at seeded random points. Points that land within
// 1e-7 of a kink (L1 tie, relu edge, gate boundary, correspondence or
// argmax switch) are resampled. Also checks the two training chains:
// pose/shape losses through skinning, and the full parser composite through
// a small regressor head.
std::vector<Result> run_suite(std::uint64_t seed, int points = 5);

bool all_pass(const std::vector<Result>& results, double threshold = 1e-4);

}  // namespace gf::gradsuite
