#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace graphvl {

inline std::atomic<int>& thread_limit_storage() {
    static std::atomic<int> limit{1};
    return limit;
}

/// Cap on worker threads used by parallel_for. Results never depend on it:
/// parallel bodies only write to their own index.
inline void set_thread_limit(int n) { thread_limit_storage().store(std::max(1, n)); }
inline int thread_limit() { return thread_limit_storage().load(); }

/// Run body(i) for i in [0, n), split into contiguous chunks across at most
/// thread_limit() threads. Bodies must not share mutable state. The first
/// exception thrown by any chunk is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_chunk = 32) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_limit()),
                                                      std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body, &failure, &failure_mutex] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace graphvl
