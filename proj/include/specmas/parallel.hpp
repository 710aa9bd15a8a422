#pragma once

#include <exception>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace specmas {

enum class ExecPolicy { serial, parallel };

// Index-parallel map with exception transport.  Bodies must be independent;
// results are written by index so the outcome is identical for both
// policies and any thread count.
template <class F>
void for_each_index(int n, ExecPolicy policy, F&& body) {
    std::exception_ptr err = nullptr;
#ifdef _OPENMP
    if (policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
#pragma omp critical
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#else
    (void)policy;
#endif
    for (int i = 0; i < n; ++i) body(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace specmas
