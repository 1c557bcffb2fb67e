// Benchmarks the pairwise diversity kernel: serial reference vs the OpenMP
// path, checking that both agree to reduction-order rounding.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "crucible/common.hpp"
#include "crucible/metrics.hpp"

namespace {

std::vector<crucible::metrics::AttackEmbedding> synthetic_embeddings(std::size_t n,
                                                                    std::size_t dim,
                                                                    std::uint64_t seed) {
  crucible::common::Rng rng(seed);
  std::vector<crucible::metrics::AttackEmbedding> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].label = "e" + std::to_string(i);
    out[i].combined.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      out[i].combined[d] = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    }
  }
  return out;
}

template <typename F>
double time_ms(F&& fn, int repeats, double& result) {
  using clock = std::chrono::steady_clock;
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto begin = clock::now();
    result = fn();
    const auto end = clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(end - begin).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairwise diversity kernel benchmark"};
  std::size_t n = 2000;
  std::size_t dim = 128;
  int repeats = 3;
  std::uint64_t seed = 123;
  app.add_option("--n", n, "number of embeddings");
  app.add_option("--dim", dim, "embedding dimension");
  app.add_option("--repeats", repeats, "timing repeats, best-of");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  const auto embeddings = synthetic_embeddings(n, dim, seed);

  double serial_value = 0.0;
  double parallel_value = 0.0;
  const double serial_ms =
      time_ms([&] { return crucible::metrics::diversity_serial(embeddings); }, repeats,
              serial_value);
  const double parallel_ms =
      time_ms([&] { return crucible::metrics::diversity_parallel(embeddings); }, repeats,
              parallel_value);

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif

  const double diff = std::fabs(serial_value - parallel_value);
  std::printf("n=%zu dim=%zu pairs=%zu threads=%d\n", n, dim, n * (n - 1) / 2, threads);
  std::printf("serial:   %10.3f ms  value=%.12f\n", serial_ms, serial_value);
  std::printf("parallel: %10.3f ms  value=%.12f\n", parallel_ms, parallel_value);
  std::printf("speedup:  %10.2fx  |diff|=%.3e\n", serial_ms / parallel_ms, diff);
  if (diff > 1e-9 * std::max(1.0, std::fabs(serial_value))) {
    std::fprintf(stderr, "kernel disagreement beyond tolerance\n");
    return 1;
  }
  return 0;
}
