#pragma once

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace convcrf {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline int default_thread_count() {
    if (const char* env = std::getenv("CONVCRF_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, n) into contiguous chunks, one worker thread per chunk.
// Each index must write only its own outputs; results are then identical
// for any thread count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body,
                         int threads = 0) {
    if (threads <= 0) threads = default_thread_count();
    if (n <= 0) return;
    if (threads == 1 || n < 256) {
        body(0, n);
        return;
    }
    std::int64_t workers = std::min<std::int64_t>(threads, n);
    std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t t = 0; t < workers; ++t) {
        std::int64_t lo = t * chunk;
        std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace convcrf
