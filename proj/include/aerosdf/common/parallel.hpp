#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aerosdf::parallel {

/// Number of OpenMP workers a parallel region will use; 1 when built without OpenMP.
inline int max_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_workers(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int worker_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

/// Scoped override of the OpenMP worker count.
class WorkerScope {
 public:
  explicit WorkerScope(int n) : previous_(max_workers()) { set_workers(n); }
  ~WorkerScope() { set_workers(previous_); }
  WorkerScope(const WorkerScope&) = delete;
  WorkerScope& operator=(const WorkerScope&) = delete;

 private:
  int previous_;
};

}  // namespace aerosdf::parallel
