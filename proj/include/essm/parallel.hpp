#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace essm {

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{[] {
        if (const char* env = std::getenv("ESSM_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }()};
    return cap;
}
}  // namespace detail

/// Current cap on internal parallelism (ESSM_THREADS env var, default: cores).
inline int max_threads() { return detail::thread_cap().load(); }

inline void set_max_threads(int n) { detail::thread_cap().store(std::max(1, n)); }

/// RAII override of the thread cap, e.g. to pin a timed region to one worker.
class ThreadCapGuard {
public:
    explicit ThreadCapGuard(int n) : saved_(max_threads()) { set_max_threads(n); }
    ~ThreadCapGuard() { set_max_threads(saved_); }
    ThreadCapGuard(const ThreadCapGuard&) = delete;
    ThreadCapGuard& operator=(const ThreadCapGuard&) = delete;

private:
    int saved_;
};

/// Runs fn(begin, end) over disjoint chunks of [0, count). The partition is a
/// pure function of (count, worker count), so results are reproducible for any
/// deterministic fn. Falls back to a single inline call for small ranges.
inline void parallel_for_chunks(std::ptrdiff_t count,
                                const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& fn,
                                std::ptrdiff_t min_chunk = 1) {
    if (count <= 0) return;
    int workers = std::min<std::ptrdiff_t>(max_threads(), (count + min_chunk - 1) / min_chunk);
    if (workers <= 1) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::ptrdiff_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::ptrdiff_t lo = w * chunk;
        std::ptrdiff_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace essm
