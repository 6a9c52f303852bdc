#include "offtopic/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace offtopic::kernels {

namespace {
Backend g_backend =
#ifdef _OPENMP
    Backend::OpenMP;
#else
    Backend::Serial;
#endif
}

Backend backend() { return g_backend; }

void set_backend(Backend b) {
  if (b == Backend::OpenMP && !openmp_compiled()) {
    throw ValueError("kernels: OpenMP backend requested but this build has no OpenMP support");
  }
  g_backend = b;
}

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace offtopic::kernels
