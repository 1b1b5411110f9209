#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace rgi {

// Kernel-level thread cap. RGI_THREADS overrides hardware concurrency; read
// once per process.
inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("RGI_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

// Runs f(i) for i in [0, n). Each index is handled by exactly one thread, so
// any per-index computation with a fixed internal reduction order yields
// bitwise-identical results for every thread count.
template <typename F>
void parallel_for(int64_t n, F&& f, int64_t grain = 512) {
    if (n <= 0) return;
    const int threads = static_cast<int>(std::min<int64_t>(max_threads(), (n + grain - 1) / grain));
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    const int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int64_t begin = t * chunk;
        const int64_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&f, begin, end] {
            for (int64_t i = begin; i < end; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace rgi
