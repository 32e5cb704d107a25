#include "hsdc/parallel.hpp"

namespace hsdc {

WorkerPool::WorkerPool(int workers) {
    if (workers < 0) workers = 0;
    threads_.reserve(workers);
    for (int i = 0; i < workers; ++i)
        threads_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard<std::mutex> lk(mutex_);
        shutdown_ = true;
    }
    cv_job_.notify_all();
    for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop() {
    std::size_t seen_generation = 0;
    for (;;) {
        std::unique_lock<std::mutex> lk(mutex_);
        cv_job_.wait(lk, [&] { return shutdown_ || generation_ != seen_generation; });
        if (shutdown_) return;
        seen_generation = generation_;
        while (next_index_ < job_size_) {
            const std::size_t i = next_index_++;
            lk.unlock();
            try {
                (*job_)(i);
            } catch (...) {
                (*errors_)[i] = std::current_exception();
            }
            lk.lock();
            --remaining_;
        }
        if (remaining_ == 0) cv_done_.notify_all();
    }
}

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::vector<std::exception_ptr> errors(n);
    if (threads_.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        {
            std::lock_guard<std::mutex> lk(mutex_);
            job_ = &fn;
            job_size_ = n;
            next_index_ = 0;
            remaining_ = n;
            errors_ = &errors;
            ++generation_;
        }
        cv_job_.notify_all();
        std::unique_lock<std::mutex> lk(mutex_);
        cv_done_.wait(lk, [&] { return remaining_ == 0; });
        job_ = nullptr;
        errors_ = nullptr;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

} // namespace hsdc
