#pragma once

#include <cstdint>
#include <functional>

namespace lsnet {

/// Number of worker threads kernels may use. Defaults to the hardware
/// concurrency; the LSNET_THREADS environment variable overrides it.
int num_threads();
void set_num_threads(int n);

/// Runs fn(begin, end) over disjoint chunks of [0, count), possibly on
/// several threads. Chunking never splits the work item itself, so any
/// computation whose output elements are independent stays deterministic
/// regardless of the thread count.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace lsnet
