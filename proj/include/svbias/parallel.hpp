#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace svbias {

namespace detail {
inline std::atomic<unsigned>& thread_count_slot() {
    static std::atomic<unsigned> n{0};
    return n;
}
} // namespace detail

/// Worker count used by parallel_for. 0 means hardware concurrency.
inline void set_thread_count(unsigned n) { detail::thread_count_slot().store(n); }

inline unsigned thread_count() {
    unsigned n = detail::thread_count_slot().load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Runs body(i) for i in [0, n). Each index is visited exactly once; bodies
/// must write disjoint outputs. Results never depend on the worker count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (workers <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    constexpr std::size_t chunk = 32;
    auto run = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n) return;
            const std::size_t end = std::min(n, begin + chunk);
            for (std::size_t i = begin; i < end; ++i) body(i);
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
}

/// Pairwise summation; the association order depends only on the length.
template <typename It>
double pairwise_sum(It first, It last) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    if (n <= 16) {
        double s = 0.0;
        for (; first != last; ++first) s += *first;
        return s;
    }
    It mid = first;
    std::advance(mid, n / 2);
    return pairwise_sum(first, mid) + pairwise_sum(mid, last);
}

} // namespace svbias
