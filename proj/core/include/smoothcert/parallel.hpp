#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace smoothcert {

/// Runs body(i) for i in [0, count) on up to `parallelism` threads.
///
/// Indices are handed out in increasing order. If bodies throw, the exception of the
/// smallest failing index is rethrown after all workers stop; indices above it are skipped.
template <typename Body>
void parallel_for(std::size_t count, std::size_t parallelism, Body&& body) {
    if (count == 0) return;
    const std::size_t workers = std::clamp<std::size_t>(parallelism, 1, count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> first_failure{count};
    std::mutex failure_mutex;
    std::exception_ptr failure;

    auto work = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || i > first_failure.load()) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (i < first_failure.load()) {
                    first_failure.store(i);
                    failure = std::current_exception();
                }
            }
        }
    };

    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace smoothcert
