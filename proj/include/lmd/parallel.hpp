#pragma once

#include <cstddef>
#include <memory>
#include <thread>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace lmd {

/// Fixed-size worker pool. Work items write into index-addressed slots, so
/// results never depend on the number of threads or the schedule.
class WorkerPool {
public:
    explicit WorkerPool(unsigned threads = 0)
        : threads_(threads == 0 ? default_threads() : threads),
          arena_(std::make_unique<tbb::task_arena>(static_cast<int>(threads_))) {}

    unsigned threads() const noexcept { return threads_; }

    template <typename F>
    void parallel_for(std::size_t n, F&& body) const {
        if (n == 0) return;
        if (threads_ == 1) {
            for (std::size_t i = 0; i < n; ++i) body(i);
            return;
        }
        arena_->execute([&] {
            tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n), [&](const tbb::blocked_range<std::size_t>& r) {
                for (std::size_t i = r.begin(); i != r.end(); ++i) body(i);
            });
        });
    }

    static unsigned default_threads() {
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : hc;
    }

private:
    unsigned threads_;
    std::unique_ptr<tbb::task_arena> arena_;
};

} // namespace lmd
