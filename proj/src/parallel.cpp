#include "evogate/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evogate::parallel {

namespace {
int g_threads = 0;  // 0 = auto
}

void set_threads(int n) { g_threads = n < 0 ? 0 : n; }

int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int threads() {
    if (g_threads == 0) return hardware_threads();
    return g_threads;
}

bool enabled() {
#ifdef _OPENMP
    return threads() > 1;
#else
    return false;
#endif
}

}  // namespace evogate::parallel
