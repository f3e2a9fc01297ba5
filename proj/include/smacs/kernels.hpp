#pragma once

// Dense inner loops of the pipeline. Each kernel has a straight serial
// reference and an OpenMP version; the two must agree bit-for-bit on the
// per-element results (no cross-element reductions are reordered except in
// ranking_pair_counts, whose counts are integers).

#include <cstddef>
#include <cstdint>
#include <span>

namespace smacs::kernels {

struct PairCounts {
  std::uint64_t ordered = 0;  // correct-model prior strictly above incorrect-model prior
  std::uint64_t total = 0;    // |P| * |N| summed over questions
};

namespace serial {

// out[i] = max(0, <rows[i], query>) for an N x dim row-major matrix.
void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out);

// out[r] = sum_k bits[r * stride + cols[k]] * weights[k].
void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out);

// out[i * n + j] = max(0, <v_i, v_j>) for n unit vectors of length dim.
void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out);

// priors and correct are question-major, models per question = width.
PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width);

}  // namespace serial

namespace omp {

void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out);
void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out);
void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out);
PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width);

}  // namespace omp

// Work size (multiply-adds) above which the dispatchers below use OpenMP.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out);
void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out);
void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out);
PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width);

}  // namespace smacs::kernels
