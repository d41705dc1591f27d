#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <span>
#include <vector>

namespace kmf {

/// Static-schedule parallel loop over [0, n). Every iteration runs; if any
/// throw, the exception from the lowest index is rethrown, so the error seen
/// by the caller does not depend on the thread count.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    std::exception_ptr error;
    std::size_t error_index = n;
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : 1)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(kmf_parallel_for_error)
            {
                if (static_cast<std::size_t>(i) < error_index) {
                    error_index = static_cast<std::size_t>(i);
                    error = std::current_exception();
                }
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

/// Sum whose result depends only on the multiset of values: the terms are
/// sorted, then added by pairwise halving.
inline double reproducible_sum(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    for (std::size_t width = v.size(); width > 1;) {
        const std::size_t half = (width + 1) / 2;
        for (std::size_t i = 0; i + half < width; ++i) v[i] += v[i + half];
        width = half;
    }
    return v[0];
}

int hardware_threads();

}  // namespace kmf
