#pragma once
// Thread helpers. Work is split by replica index, never by thread: replica r
// always uses the same RNG stream and writes only replica-indexed slots, and
// reductions combine per-replica values in a fixed pairwise order. Results
// are therefore byte-identical for any worker count. LANGEVIN_THREADS
// overrides the worker count.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace langevin {

inline unsigned thread_count() {
    if (const char* env = std::getenv("LANGEVIN_THREADS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Run fn(i) for i in [0, n), contiguous blocks per worker. fn must only touch
// state indexed by i. The first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned n_threads = 0) {
    if (n == 0) return;
    unsigned nt = n_threads ? n_threads : thread_count();
    nt = static_cast<unsigned>(std::min<std::size_t>(nt, n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> workers;
    workers.reserve(nt);
    std::exception_ptr err;
    std::mutex err_mu;
    for (unsigned t = 0; t < nt; ++t) {
        const std::size_t lo = static_cast<std::size_t>(t) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&fn, &err, &err_mu, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (err) std::rethrow_exception(err);
}

// Pairwise tree sum: the summation order is a fixed function of v.size(), so
// floating-point results do not depend on how replicas were scheduled.
// T needs operator+ (double, Eigen vectors/matrices, ...).
template <class T>
T tree_sum(std::vector<T> v) {
    if (v.empty()) return T{};
    while (v.size() > 1) {
        std::size_t m = v.size() / 2;
        for (std::size_t i = 0; i < m; ++i) v[i] = v[2 * i] + v[2 * i + 1];
        if (v.size() % 2) {
            v[m] = v.back();
            ++m;
        }
        v.resize(m);
    }
    return v[0];
}

} // namespace langevin
