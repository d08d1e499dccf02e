#pragma once

// Deterministic parallel Monte Carlo. Work is cut into a fixed number of
// chunks, each driven by its own child stream, and partial sums are reduced
// in chunk order. The thread count only affects wall clock, never output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "icl/rng.hpp"

namespace icl {

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n = 0;
};

inline int default_threads() {
  if (const char* env = std::getenv("ICL_LAB_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

namespace detail {
struct ChunkMoments {
  double sum = 0.0;
  double sum_sq = 0.0;
  long n = 0;
};
}  // namespace detail

// Runs `trials` evaluations of sample(rng) -> double and returns mean/stderr.
// Chunk layout is fixed (independent of `threads`), each chunk gets the child
// stream split("chunk-<index>") of `base`.
inline MeanStderr mc_mean(const RngStream& base, long trials,
                          const std::function<double(RngStream&)>& sample,
                          int threads = 0) {
  if (trials < 1) throw std::invalid_argument("mc_mean: trials must be >= 1");
  if (threads <= 0) threads = default_threads();
  const long chunk_size = 4096;
  const long n_chunks = (trials + chunk_size - 1) / chunk_size;
  std::vector<detail::ChunkMoments> partial(n_chunks);

  auto run_chunk = [&](long c) {
    RngStream rng = base.split("chunk-" + std::to_string(c));
    const long lo = c * chunk_size;
    const long hi = std::min(trials, lo + chunk_size);
    detail::ChunkMoments m;
    for (long i = lo; i < hi; ++i) {
      const double v = sample(rng);
      m.sum += v;
      m.sum_sq += v * v;
      ++m.n;
    }
    partial[c] = m;
  };

  if (threads == 1 || n_chunks == 1) {
    for (long c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<long> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (long c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (const auto& m : partial) {  // in chunk order
    sum += m.sum;
    sum_sq += m.sum_sq;
    n += m.n;
  }
  MeanStderr out;
  out.n = n;
  out.mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum_sq / n - out.mean * out.mean);
  out.stderr_ = std::sqrt(var / static_cast<double>(n));
  return out;
}

}  // namespace icl
