// Shared utilities: error types, deterministic RNG, parallel loops.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gabornet {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, bad config files, invalid hyperparameters. CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Unreadable/malformed data files (audio, protocols, manifests). Exit code 3.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf escaped a numeric kernel. Exit code 4.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& msg) : Error(msg) {}
};

// Violated internal contract (shape mismatch, bad tape state).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Deterministic PRNG. splitmix64 stream with explicit bounded-int and
// unit-double helpers so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

  // Mixes several keys into one stream, e.g. (seed, epoch, utterance).
  static Rng keyed(uint64_t seed, uint64_t k1, uint64_t k2 = 0) {
    Rng r(seed);
    r.state_ ^= 0xbf58476d1ce4e5b9ULL * (k1 + 1);
    r.next_u64();
    r.state_ ^= 0x94d049bb133111ebULL * (k2 + 1);
    r.next_u64();
    return r;
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [lo, hi] inclusive. Rejection sampling keeps it exact.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ContractError("Rng::uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  // Uniform double in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (always consumes two draws).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)],
                v[static_cast<size_t>(uniform_int(0, i))]);
    }
  }

 private:
  uint64_t state_;
};

// Intra-op parallelism. Worker threads in the training batch pool set the
// thread-local limit to 1 so nested loops stay sequential.
void set_num_threads(int n);
int num_threads();

class ThreadLimitGuard {
 public:
  explicit ThreadLimitGuard(int n);
  ~ThreadLimitGuard();

 private:
  int saved_;
};

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. Deterministic as long as chunks write disjoint outputs.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace gabornet
