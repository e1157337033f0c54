#pragma once

#include <cstdint>
#include <functional>

namespace hybridreg {

// Process-wide worker count used by voxel-parallel loops. 0 selects the
// hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [begin, end), split into contiguous chunks across
// workers. Callers that reduce must write per-index partials and sum them in
// index order so results do not depend on the thread count.
void parallel_for(std::int64_t begin, std::int64_t end, const std::function<void(std::int64_t)>& fn);

}  // namespace hybridreg
