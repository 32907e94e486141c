#pragma once

#include <algorithm>
#include <chrono>
#include <vector>

namespace essm {

/// Median wall time of fn() over `reps` repetitions after `warmup` unrecorded
/// calls. fn must keep its result observable (return or side effect) so the
/// work cannot be optimized away.
template <typename F>
double time_median_seconds(F&& fn, int reps = 5, int warmup = 1) {
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = clock::now();
        fn();
        const auto t1 = clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace essm
