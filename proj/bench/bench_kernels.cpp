// Serial reference vs OpenMP kernels at pipeline-sized inputs.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "smacs/kernels.hpp"

namespace {

namespace k = smacs::kernels;

std::vector<double> random_doubles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <auto Fn>
void similarity_scan(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), dim = static_cast<std::size_t>(state.range(1));
  const auto bank = random_doubles(rows * dim, 1);
  const auto query = random_doubles(dim, 2);
  std::vector<double> out(rows);
  for (auto _ : state) {
    Fn(bank, dim, query, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}

template <auto Fn>
void masked_matvec(benchmark::State& state) {
  const std::size_t models = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> bits(models * n);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1u);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < n; j += 2) cols.push_back(j);
  const auto weights = random_doubles(cols.size(), 4);
  std::vector<double> out(models);
  for (auto _ : state) {
    Fn(bits, n, cols, weights, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void gram_clamped(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = static_cast<std::size_t>(state.range(1));
  const auto vecs = random_doubles(n * dim, 5);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Fn(vecs, dim, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void ranking_pair_counts(benchmark::State& state) {
  const std::size_t questions = static_cast<std::size_t>(state.range(0)), width = 15;
  const auto priors = random_doubles(questions * width, 6);
  std::mt19937_64 rng(7);
  std::vector<std::uint8_t> correct(questions * width);
  for (auto& c : correct) c = static_cast<std::uint8_t>(rng() & 1u);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(priors, correct, width));
}

}  // namespace

BENCHMARK(similarity_scan<k::serial::similarity_scan>)->Name("similarity_scan/serial")->Args({2000, 256})->Args({20000, 4096});
BENCHMARK(similarity_scan<k::omp::similarity_scan>)->Name("similarity_scan/omp")->Args({2000, 256})->Args({20000, 4096});
BENCHMARK(masked_matvec<k::serial::masked_matvec>)->Name("masked_matvec/serial")->Args({15, 2000})->Args({64, 50000});
BENCHMARK(masked_matvec<k::omp::masked_matvec>)->Name("masked_matvec/omp")->Args({15, 2000})->Args({64, 50000});
BENCHMARK(gram_clamped<k::serial::gram_clamped>)->Name("gram_clamped/serial")->Args({8, 4096})->Args({64, 4096});
BENCHMARK(gram_clamped<k::omp::gram_clamped>)->Name("gram_clamped/omp")->Args({8, 4096})->Args({64, 4096});
BENCHMARK(ranking_pair_counts<k::serial::ranking_pair_counts>)->Name("ranking_pair_counts/serial")->Arg(2000)->Arg(100000);
BENCHMARK(ranking_pair_counts<k::omp::ranking_pair_counts>)->Name("ranking_pair_counts/omp")->Arg(2000)->Arg(100000);

BENCHMARK_MAIN();
