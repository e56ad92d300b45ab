#pragma once

#include <cstddef>
#include <functional>

#ifdef LAYERLAB_HAVE_OPENMP
#include <omp.h>
#endif

namespace layerlab {

/// Serial reference loop. Kept alongside the OpenMP kernel so results can be
/// compared point-for-point in tests and in the benchmark.
template <class F>
void for_each_index_serial(std::size_t n, F&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

/// OpenMP-parallel loop over independent grid points. Each index writes only
/// its own slot, so the reduction is a deterministic index-ordered gather and
/// the output is identical to the serial loop for any thread count.
template <class F>
void for_each_index(std::size_t n, int jobs, F&& fn) {
#ifdef LAYERLAB_HAVE_OPENMP
  if (jobs > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
    for (long long i = 0; i < static_cast<long long>(n); ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  (void)jobs;
  for_each_index_serial(n, fn);
}

inline int hardware_jobs() {
#ifdef LAYERLAB_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace layerlab
