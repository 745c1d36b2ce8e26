#pragma once

#include <cstddef>

namespace evogate::parallel {

// Process-wide thread budget for the OpenMP kernels. 1 forces the serial
// paths; 0 means "use the hardware". Kernels are written so that results are
// bit-identical for every setting.
void set_threads(int n);
int threads();
bool enabled();

// Hardware concurrency as seen by the OpenMP runtime (1 when built without it).
int hardware_threads();

}  // namespace evogate::parallel
