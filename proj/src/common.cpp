#include "gabornet/common.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

namespace gabornet {

namespace {
std::atomic<int> g_num_threads{0};  // 0 = pick from hardware
thread_local int t_thread_limit = 0;

int effective_threads() {
  if (t_thread_limit > 0) return t_thread_limit;
  int n = g_num_threads.load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void set_num_threads(int n) { g_num_threads.store(n); }

int num_threads() { return effective_threads(); }

ThreadLimitGuard::ThreadLimitGuard(int n) : saved_(t_thread_limit) {
  t_thread_limit = n;
}

ThreadLimitGuard::~ThreadLimitGuard() { t_thread_limit = saved_; }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = std::min<int64_t>(effective_threads(), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers));
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t begin = w * chunk;
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, begin, end]() {
      ThreadLimitGuard guard(1);  // no nested parallelism
      fn(begin, end);
    });
  }
  for (auto& t : threads) t.join();
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace gabornet
