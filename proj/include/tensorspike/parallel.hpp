#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tensorspike {

// Process-wide worker cap (CLI --threads). 0 means hardware concurrency.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over contiguous blocks of [0, count). Callers must
// ensure the result does not depend on block boundaries (e.g. disjoint
// outputs with per-element deterministic work).
template <typename Fn>
void parallel_for_blocks(std::size_t count, Fn&& fn, int threads = 0) {
    if (threads <= 0) threads = max_threads();
    std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    if (nt <= 1 || count == 0) {
        if (count > 0) fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::exception_ptr err;
    std::mutex err_mu;
    std::size_t chunk = (count + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t b = t * chunk;
        std::size_t e = std::min(count, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&, b, e]() {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace tensorspike
