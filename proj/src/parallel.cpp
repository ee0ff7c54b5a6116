#include "mindreg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace mindreg {
namespace {

std::atomic<int>& configured_threads() {
  static std::atomic<int> threads{
      static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
  return threads;
}

}  // namespace

int thread_count() { return configured_threads().load(); }

void set_thread_count(int threads) { configured_threads().store(std::max(1, threads)); }

void parallel_for(Eigen::Index begin, Eigen::Index end,
                  const std::function<void(Eigen::Index)>& body) {
  const Eigen::Index n = end - begin;
  if (n <= 0) return;
  const Eigen::Index workers = std::min<Eigen::Index>(thread_count(), n);
  if (workers <= 1) {
    for (Eigen::Index i = begin; i < end; ++i) body(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Eigen::Index w = 0; w < workers; ++w) {
    const Eigen::Index lo = begin + n * w / workers;
    const Eigen::Index hi = begin + n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (Eigen::Index i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

double ordered_sum(Eigen::Index slices, const std::function<double(Eigen::Index)>& slice_sum) {
  std::vector<double> partial(static_cast<std::size_t>(std::max<Eigen::Index>(slices, 0)), 0.0);
  parallel_for(0, slices, [&](Eigen::Index s) { partial[static_cast<std::size_t>(s)] = slice_sum(s); });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace mindreg
