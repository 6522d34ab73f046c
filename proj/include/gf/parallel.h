#pragma once

#include <cstddef>

namespace gf::par {

// Global worker count. 0 means "use OpenMP's default" (machine parallelism).
// All parallel kernels in this codebase are written so that their results are
// bit-identical for any thread count: loops either write disjoint outputs or
// reduce over fixed-size chunks that are combined in a fixed order.
void set_threads(int n);
int threads();

// Chunk width used by deterministic reductions. Partial sums are computed
// per chunk (chunk boundaries depend only on the array length) and combined
// left to right.
inline constexpr std::size_t kDetChunk = 4096;

}  // namespace gf::par
