#pragma once

// Brute-force reference computations used only by the tests. They follow the
// textbook definitions directly (long double where it helps) and share no
// code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

namespace oracle {

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  long double n2 = 0;
  for (auto& x : v) {
    x = g(rng);
    n2 += static_cast<long double>(x) * x;
  }
  const double n = static_cast<double>(std::sqrt(n2));
  for (auto& x : v) x /= n;
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(s);
}

inline std::vector<double> similarity(const std::vector<std::vector<double>>& bank, const std::vector<double>& q) {
  std::vector<double> out;
  for (const auto& row : bank) out.push_back(std::max(0.0, dot(row, q)));
  return out;
}

// Threshold from the n_base-th largest value (or the smallest when the bank is
// shorter), then a full scan.
inline std::set<std::size_t> support(const std::vector<double>& s, std::size_t n_base, double gamma) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double pivot = n_base <= sorted.size() ? sorted[n_base - 1] : sorted.back();
  const double thr = gamma * pivot;
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] >= thr) out.insert(i);
  }
  return out;
}

inline std::vector<double> prior(const std::vector<std::vector<int>>& bits, const std::vector<std::size_t>& idx,
                                 const std::vector<double>& sims) {
  std::vector<double> out;
  for (const auto& row : bits) {
    long double acc = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) acc += row[idx[k]] * static_cast<long double>(sims[k]);
    out.push_back(static_cast<double>(acc));
  }
  return out;
}

inline double ranking(const std::vector<std::vector<double>>& prior, const std::vector<std::vector<int>>& correct) {
  long double num = 0, den = 0;
  for (std::size_t q = 0; q < prior.size(); ++q) {
    for (std::size_t j = 0; j < prior[q].size(); ++j) {
      for (std::size_t k = 0; k < prior[q].size(); ++k) {
        if (correct[q][j] == 1 && correct[q][k] == 0) {
          den += 1;
          if (prior[q][j] > prior[q][k]) num += 1;
        }
      }
    }
  }
  return static_cast<double>(num / den);
}

inline std::vector<double> mean_pairwise(const std::vector<std::vector<double>>& v) {
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double s = 0;
    for (std::size_t j = 0; j < v.size(); ++j) s += std::max(0.0, dot(v[i], v[j]));
    out.push_back(static_cast<double>(s / v.size()));
  }
  return out;
}

inline std::vector<double> drop_distribution(const std::vector<double>& p) {
  const std::size_t k = p.size();
  long double mean = 0;
  for (double x : p) mean += x;
  mean /= k;
  long double var = 0;
  for (double x : p) var += (x - mean) * (x - mean);
  var /= k;
  const long double sd = std::sqrt(var);
  std::vector<double> out(k);
  if (sd == 0) {
    for (auto& x : out) x = 1.0 / static_cast<double>(k);
    return out;
  }
  long double z_sum = 0;
  std::vector<long double> e(k);
  for (std::size_t i = 0; i < k; ++i) {
    e[i] = std::exp((p[i] - mean) / sd);
    z_sum += e[i];
  }
  for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<double>(e[i] / z_sum);
  return out;
}

// Probability of every kept subset (ascending index list) for sequential
// draws without replacement of `size` elements, by walking every ordered
// path.
inline std::map<std::vector<std::size_t>, double> subset_law(const std::vector<double>& d, std::size_t size) {
  std::map<std::vector<std::size_t>, double> law;
  std::vector<std::size_t> path;
  std::vector<bool> used(d.size(), false);
  std::function<void(long double, long double)> walk = [&](long double prob, long double remaining) {
    if (path.size() == size) {
      auto key = path;
      std::sort(key.begin(), key.end());
      law[key] += static_cast<double>(prob);
      return;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      path.push_back(i);
      walk(prob * d[i] / remaining, remaining - d[i]);
      path.pop_back();
      used[i] = false;
    }
  };
  long double total = 0;
  for (double x : d) total += x;
  walk(1.0L, total);
  return law;
}

}  // namespace oracle
