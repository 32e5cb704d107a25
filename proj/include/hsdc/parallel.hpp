#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hsdc {

/// Deterministic parallel-for over step indices. Each task touches only its
/// own step's data, so worker scheduling changes who computes, never what:
/// results are bitwise identical for any worker count, including the
/// 0-worker logical emulation mode (a plain loop on the calling thread).
/// Exceptions are collected per index and the lowest-index one is rethrown.
class WorkerPool {
public:
    /// workers = 0 runs every task inline (emulation mode).
    explicit WorkerPool(int workers = 0);
    ~WorkerPool();

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    int workers() const { return static_cast<int>(threads_.size()); }

    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

private:
    void worker_loop();

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_job_, cv_done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_size_ = 0;
    std::size_t next_index_ = 0;
    std::size_t remaining_ = 0;
    std::size_t generation_ = 0;
    bool shutdown_ = false;
    std::vector<std::exception_ptr>* errors_ = nullptr;
};

} // namespace hsdc
