#include "aal/exec.hpp"

#include <omp.h>

#include <cstdlib>

namespace aal {

int configure_threads_from_env() {
  if (const char* env = std::getenv("AAL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

}  // namespace aal
