#include "parisi/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace parisi {

namespace {
std::atomic<int> g_workers{1};
}

void set_workers(int n) { g_workers = std::max(1, n); }
int workers() { return g_workers; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers()), n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t k = 0; k < w; ++k) {
        const std::size_t lo = k * chunk, hi = std::min(n, lo + chunk);
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace parisi
