#include "smacs/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace smacs::kernels {

namespace {

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

inline PairCounts count_question(const double* prior, const std::uint8_t* correct, std::size_t width) {
  PairCounts c;
  for (std::size_t j = 0; j < width; ++j) {
    if (!correct[j]) continue;
    for (std::size_t k = 0; k < width; ++k) {
      if (correct[k]) continue;
      ++c.total;
      if (prior[j] > prior[k]) ++c.ordered;
    }
  }
  return c;
}

}  // namespace

namespace serial {

void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(0.0, dot(rows.data() + i * dim, query.data(), dim));
  }
}

void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out) {
  for (std::size_t r = 0; r < out.size(); ++r) {
    const std::uint8_t* row = bits.data() + r * stride;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (row[cols[k]]) acc += weights[k];
    }
    out[r] = acc;
  }
}

void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out) {
  const std::size_t n = dim == 0 ? 0 : vecs.size() / dim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::max(0.0, dot(vecs.data() + i * dim, vecs.data() + j * dim, dim));
    }
  }
}

PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width) {
  PairCounts total;
  const std::size_t q = width == 0 ? 0 : correct.size() / width;
  for (std::size_t i = 0; i < q; ++i) {
    const PairCounts c = count_question(priors.data() + i * width, correct.data() + i * width, width);
    total.ordered += c.ordered;
    total.total += c.total;
  }
  return total;
}

}  // namespace serial

namespace omp {

void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = std::max(0.0, dot(rows.data() + i * dim, query.data(), dim));
  }
}

void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out) {
  const auto rows = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::uint8_t* row = bits.data() + r * stride;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (row[cols[k]]) acc += weights[k];
    }
    out[r] = acc;
  }
}

void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out) {
  const std::size_t n = dim == 0 ? 0 : vecs.size() / dim;
  const auto sn = static_cast<std::int64_t>(n);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t i = 0; i < sn; ++i) {
    for (std::int64_t j = 0; j < sn; ++j) {
      out[i * n + j] = std::max(0.0, dot(vecs.data() + i * dim, vecs.data() + j * dim, dim));
    }
  }
}

PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width) {
  const auto q = static_cast<std::int64_t>(width == 0 ? 0 : correct.size() / width);
  std::uint64_t ordered = 0;
  std::uint64_t total = 0;
#pragma omp parallel for reduction(+ : ordered, total) schedule(static)
  for (std::int64_t i = 0; i < q; ++i) {
    const PairCounts c = count_question(priors.data() + i * width, correct.data() + i * width, width);
    ordered += c.ordered;
    total += c.total;
  }
  return {ordered, total};
}

}  // namespace omp

void similarity_scan(std::span<const double> rows, std::size_t dim, std::span<const double> query,
                     std::span<double> out) {
  if (out.size() * dim >= kParallelThreshold) {
    omp::similarity_scan(rows, dim, query, out);
  } else {
    serial::similarity_scan(rows, dim, query, out);
  }
}

void masked_matvec(std::span<const std::uint8_t> bits, std::size_t stride,
                   std::span<const std::size_t> cols, std::span<const double> weights,
                   std::span<double> out) {
  if (out.size() * cols.size() >= kParallelThreshold) {
    omp::masked_matvec(bits, stride, cols, weights, out);
  } else {
    serial::masked_matvec(bits, stride, cols, weights, out);
  }
}

void gram_clamped(std::span<const double> vecs, std::size_t dim, std::span<double> out) {
  if (out.size() * dim >= kParallelThreshold) {
    omp::gram_clamped(vecs, dim, out);
  } else {
    serial::gram_clamped(vecs, dim, out);
  }
}

PairCounts ranking_pair_counts(std::span<const double> priors, std::span<const std::uint8_t> correct,
                               std::size_t width) {
  if (correct.size() * width >= kParallelThreshold) {
    return omp::ranking_pair_counts(priors, correct, width);
  }
  return serial::ranking_pair_counts(priors, correct, width);
}

}  // namespace smacs::kernels
