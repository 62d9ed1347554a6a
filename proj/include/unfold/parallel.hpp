#ifndef UNFOLD_PARALLEL_HPP_
#define UNFOLD_PARALLEL_HPP_

#include <functional>

namespace unfold {

/// Runs task(0..n_tasks-1) on up to `workers` threads. Tasks must be
/// independent; determinism comes from indexing results, not run order.
/// The first thrown exception is rethrown after all threads join.
void run_parallel(int n_tasks, int workers, const std::function<void(int)>& task);

}  // namespace unfold

#endif  // UNFOLD_PARALLEL_HPP_
