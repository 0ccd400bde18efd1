#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace btm {

inline constexpr const char* kVersion = "btm 0.1.0";

/// Malformed or inconsistent input data (files, shapes, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (nonfinite parameters, degenerate estimates).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow in either tail.
inline double log1pexp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logsumexp(const std::vector<double>& xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double m = xs[0];
  for (double x : xs)
    if (x > m) m = x;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Streaming log-sum-exp; accepts terms one at a time without storing them.
class RunningLogSum {
 public:
  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }
  double value() const {
    if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

/// Entropy of a Bernoulli(p) in nats; 0 log 0 taken as 0.
inline double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

/// Entropy of a categorical distribution in nats.
inline double categorical_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double q : p)
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, one per
/// worker; each item must be independent so results do not depend on the
/// worker count.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int block = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * block;
    int hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Worker count from BTM_WORKERS; defaults to 1 (fully serial).
inline int env_worker_count() {
  const char* v = std::getenv("BTM_WORKERS");
  if (!v || !*v) return 1;
  int n = std::atoi(v);
  return n > 0 ? n : 1;
}

}  // namespace btm
