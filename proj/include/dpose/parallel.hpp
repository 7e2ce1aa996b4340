// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace dpose {

// Worker count used by parallel kernels. Defaults to DPOSE_THREADS when set,
// otherwise hardware concurrency. Results never depend on this value: work is
// split by independent index and reductions happen in index order afterwards.
int num_threads();
void set_num_threads(int n);

/// Runs fn(i) for i in [0, n). Blocks until all calls return; rethrows the
/// first exception raised by any worker.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace dpose
