#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace mindreg {

/// Number of worker threads used by the voxel kernels. Defaults to the
/// number of logical cores.
int thread_count();
void set_thread_count(int threads);

/// Runs body(i) for every i in [begin, end), split into contiguous chunks
/// across the worker threads. Iterations must touch disjoint outputs.
void parallel_for(Eigen::Index begin, Eigen::Index end,
                  const std::function<void(Eigen::Index)>& body);

/// Deterministic sum: each slice value is produced independently, then the
/// partials are accumulated in slice order so the result does not depend on
/// the thread count.
double ordered_sum(Eigen::Index slices, const std::function<double(Eigen::Index)>& slice_sum);

}  // namespace mindreg
