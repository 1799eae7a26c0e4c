#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bfpn {

// Exit-code bearing error categories. main() maps these to process exit codes.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 9 significant digits, enough to round-trip float32 exactly.
inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline int env_int(const char* name, int fallback) {
  const char* s = std::getenv(name);
  if (!s || !*s) return fallback;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0') return fallback;
  return static_cast<int>(v);
}

inline bool env_u64(const char* name, uint64_t& out) {
  const char* s = std::getenv(name);
  if (!s || !*s) return false;
  char* end = nullptr;
  unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0') return false;
  out = v;
  return true;
}

inline int thread_count() {
  static int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    int v = env_int("BFPN_THREADS", hw);
    return v < 1 ? 1 : v;
  }();
  return n;
}

// Persistent pool for data-parallel loops. Work is split into contiguous
// chunks; every output element is produced entirely inside one chunk, so
// results do not depend on the thread count or schedule.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool(thread_count());
    return pool;
  }

  void run(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    int workers = static_cast<int>(threads_.size()) + 1;
    if (workers == 1 || n == 1) {
      body(0, n);
      return;
    }
    int chunks = workers < n ? workers : static_cast<int>(n);
    {
      std::unique_lock<std::mutex> lk(mu_);
      body_ = &body;
      total_ = n;
      chunks_ = chunks;
      next_chunk_ = 0;
      pending_ = chunks;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work();  // caller participates
    std::exception_ptr err;
    {
      std::unique_lock<std::mutex> lk(mu_);
      done_cv_.wait(lk, [&] { return pending_ == 0; });
      body_ = nullptr;
      err = error_;
    }
    if (err) std::rethrow_exception(err);
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

 private:
  explicit ThreadPool(int n) {
    for (int i = 0; i < n - 1; ++i)
      threads_.emplace_back([this] { worker_loop(); });
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
    }
  }

  void work() {
    for (;;) {
      int chunk;
      const std::function<void(int64_t, int64_t)>* body;
      int64_t n;
      int chunks;
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (!body_ || next_chunk_ >= chunks_) return;
        chunk = next_chunk_++;
        body = body_;
        n = total_;
        chunks = chunks_;
      }
      int64_t lo = n * chunk / chunks;
      int64_t hi = n * (chunk + 1) / chunks;
      try {
        (*body)(lo, hi);
      } catch (...) {
        std::unique_lock<std::mutex> lk(mu_);
        if (!error_) error_ = std::current_exception();
      }
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::exception_ptr error_ = nullptr;
  const std::function<void(int64_t, int64_t)>* body_ = nullptr;
  int64_t total_ = 0;
  int chunks_ = 0;
  int next_chunk_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

template <typename F>
void parallel_for(int64_t n, F&& body) {
  std::function<void(int64_t, int64_t)> fn = std::forward<F>(body);
  ThreadPool::instance().run(n, fn);
}

}  // namespace bfpn
