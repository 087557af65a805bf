#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace memforest {

// Runs fn(item) over all items with up to `budget` worker threads. Tasks must
// be independent and must not throw; callers record their own failures.
template <typename T, typename F>
void parallel_for_each(std::vector<T>& items, int budget, F&& fn) {
    if (budget <= 1 || items.size() <= 1) {
        for (auto& item : items) fn(item);
        return;
    }
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(budget), items.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= items.size()) return;
                fn(items[i]);
            }
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace memforest
