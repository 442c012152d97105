#include "mmv/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace mmv {
namespace {

thread_local bool t_in_parallel = false;

class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this, i] { loop(i + 1); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return static_cast<int>(threads_.size()) + 1; }

  void run(std::size_t n,
           const std::function<void(std::size_t, std::size_t)>& fn) {
    std::lock_guard<std::mutex> serial(run_mu_);
    {
      std::lock_guard<std::mutex> lock(mu_);
      fn_ = &fn;
      n_ = n;
      pending_ = static_cast<int>(threads_.size());
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work(0, fn);
    std::unique_lock<std::mutex> lock(mu_);
    done_cv_.wait(lock, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void work(int slot, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t parts = static_cast<std::size_t>(size());
    const std::size_t begin = n_ * slot / parts;
    const std::size_t end = n_ * (slot + 1) / parts;
    if (begin >= end) return;
    const bool outer = t_in_parallel;
    t_in_parallel = true;
    try {
      fn(begin, end);
      t_in_parallel = outer;
    } catch (...) {
      t_in_parallel = outer;
      std::lock_guard<std::mutex> lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void loop(int slot) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* fn = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        fn = fn_;
      }
      work(slot, *fn);
      {
        std::lock_guard<std::mutex> lock(mu_);
        --pending_;
      }
      done_cv_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex run_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::size_t n_ = 0;
  std::size_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

std::mutex g_config_mu;
int g_threads = 1;
std::shared_ptr<Pool> g_pool;

}  // namespace

void set_thread_count(int threads) {
  std::lock_guard<std::mutex> lock(g_config_mu);
  const int t = std::max(threads, 1);
  if (t == g_threads) return;
  g_threads = t;
  g_pool.reset();
  if (t > 1) g_pool = std::make_shared<Pool>(t - 1);
}

int thread_count() {
  std::lock_guard<std::mutex> lock(g_config_mu);
  return g_threads;
}

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain) {
  if (n == 0) return;
  std::shared_ptr<Pool> pool;
  {
    std::lock_guard<std::mutex> lock(g_config_mu);
    pool = g_pool;
  }
  if (!pool || n < grain || t_in_parallel) {
    fn(0, n);
    return;
  }
  pool->run(n, fn);
}

}  // namespace mmv
