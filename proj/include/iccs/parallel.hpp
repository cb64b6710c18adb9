#pragma once

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace iccs {

// Process-wide switch for the OpenMP kernels. Each loop iteration writes
// disjoint outputs with a fixed per-element formula, so parallel and serial
// execution produce identical results; reductions are never parallelized.
inline bool& parallel_enabled() {
  static bool enabled = true;
  return enabled;
}

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
#ifdef _OPENMP
  if (parallel_enabled() && n > 1) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace iccs
