#pragma once

#include <vector>

namespace gf {

// Sparse convex-combination regressor: each output vertex i carries a fixed
// neighborhood of k input-vertex indices and k nonnegative weights summing
// to 1. Output i is the convex combination of its neighborhood.
struct SparseRegressor {
  int rows = 0;
  int k = 0;
  std::vector<int> neighbors;   // rows * k indices into the input mesh
  std::vector<double> weights;  // rows * k, row-stochastic

  const int* row_neighbors(int i) const { return neighbors.data() + static_cast<std::size_t>(i) * k; }
  const double* row_weights(int i) const { return weights.data() + static_cast<std::size_t>(i) * k; }
  double* row_weights(int i) { return weights.data() + static_cast<std::size_t>(i) * k; }
};

}  // namespace gf
