#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace driveby {

// Persistent worker pool for data-parallel loops. Tasks must write only to
// caller-provided disjoint slots; any cross-task reduction is done by the
// caller afterwards in a fixed order, so results do not depend on the worker
// count or scheduling.
class ThreadPool {
public:
    explicit ThreadPool(unsigned workers = std::thread::hardware_concurrency()) {
        if (workers < 1) workers = 1;
        // worker 0 is the calling thread
        for (unsigned w = 1; w < workers; ++w)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~ThreadPool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    unsigned size() const { return static_cast<unsigned>(threads_.size()) + 1; }

    // Runs fn(i) for i in [0, n). Blocks until all complete. Exceptions from
    // tasks propagate as NumericalError-agnostic rethrow on the caller.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (threads_.empty() || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::lock_guard lk(mu_);
            fn_ = &fn;
            total_ = n;
            next_ = 0;
            pending_ = n;
            error_ = nullptr;
        }
        cv_.notify_all();
        drain();
        {
            std::unique_lock lk(mu_);
            done_cv_.wait(lk, [this] { return pending_ == 0; });
            fn_ = nullptr;
            if (error_) std::rethrow_exception(error_);
        }
    }

    static ThreadPool& global() {
        static ThreadPool pool;
        return pool;
    }

private:
    void run_one(std::size_t i, const std::function<void(std::size_t)>& fn) {
        try {
            fn(i);
        } catch (...) {
            std::lock_guard lk(mu_);
            if (!error_) error_ = std::current_exception();
        }
        std::lock_guard lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
    }

    void drain() {
        for (;;) {
            std::size_t i;
            const std::function<void(std::size_t)>* fn;
            {
                std::lock_guard lk(mu_);
                if (next_ >= total_) return;
                i = next_++;
                fn = fn_;
            }
            run_one(i, *fn);
        }
    }

    void worker_loop() {
        for (;;) {
            std::size_t i;
            const std::function<void(std::size_t)>* fn;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [this] { return stop_ || (fn_ && next_ < total_); });
                if (stop_) return;
                if (!fn_ || next_ >= total_) continue;
                i = next_++;
                fn = fn_;
            }
            run_one(i, *fn);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t)>* fn_ = nullptr;
    std::size_t total_ = 0;
    std::size_t next_ = 0;
    std::size_t pending_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

} // namespace driveby
