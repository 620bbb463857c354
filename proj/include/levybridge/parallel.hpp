#ifndef LEVYBRIDGE_PARALLEL_HPP
#define LEVYBRIDGE_PARALLEL_HPP

// Index-parallel loop. Each index writes only its own result slot, so output
// is independent of the thread count and scheduling.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace levybridge {

/// LEVYBRIDGE_THREADS if set and positive, else the hardware concurrency.
inline int default_threads() {
    if (const char* env = std::getenv("LEVYBRIDGE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Calls f(i) for i in [0,n). If any call throws, the exception from the
/// smallest failing index is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    if (threads <= 0) threads = default_threads();
    threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::size_t fail_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr fail_ptr;
    constexpr std::size_t chunk = 64;

    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n || failed.load(std::memory_order_relaxed)) return;
            const std::size_t end = std::min(n, begin + chunk);
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (i < fail_index) {
                        fail_index = i;
                        fail_ptr = std::current_exception();
                    }
                    failed = true;
                    return;
                }
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fail_ptr) std::rethrow_exception(fail_ptr);
}

}  // namespace levybridge

#endif
