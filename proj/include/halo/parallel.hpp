#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace halo::kernels {

enum class Mode { Serial, Parallel };

// Global execution mode for all kernels. Both modes execute identical
// arithmetic in identical order (parallelism is only over disjoint outputs,
// reductions use a fixed chunk decomposition), so results are bitwise equal
// regardless of mode or thread count.
Mode mode();
void set_mode(Mode m);

int max_threads();
void set_threads(int n);  // n <= 0 leaves the OpenMP default untouched

template <class F>
inline void parallel_for(int64_t n, F&& body) {
  if (mode() == Mode::Parallel && n > 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (int64_t i = 0; i < n; ++i) body(i);
  }
}

// Fixed chunk count for deterministic accumulations; independent of the
// number of threads so serial and parallel runs fold partials identically.
constexpr int kReduceChunks = 16;

inline int64_t chunk_begin(int64_t n, int chunk) { return n * chunk / kReduceChunks; }
inline int64_t chunk_end(int64_t n, int chunk) { return n * (chunk + 1) / kReduceChunks; }

}  // namespace halo::kernels
