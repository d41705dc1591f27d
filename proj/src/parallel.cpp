#include "kmf/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif
#include <thread>

namespace kmf {

int hardware_threads() {
#ifdef _OPENMP
    return omp_get_num_procs();
#else
    const unsigned n = std::thread::hardware_concurrency();
    return n > 0 ? static_cast<int>(n) : 1;
#endif
}

}  // namespace kmf
