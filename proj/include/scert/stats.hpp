#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scert/error.hpp"
#include "scert/knn.hpp"
#include "scert/rng.hpp"

namespace scert {

// |top-K retrieved ∩ relevant| / min(K, |relevant|); the capped denominator
// lets a query with fewer than K relevant docs reach 1.0.
inline double recall_at_k(const NeighborList& retrieved,
                          const std::set<std::string>& relevant,
                          std::size_t K) {
  if (relevant.empty()) throw EmptyInputError("empty relevant set");
  if (K < 1) throw RangeError("K must be >= 1");
  const std::size_t limit = std::min(K, retrieved.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (relevant.count(retrieved[i].id)) ++hits;
  }
  return static_cast<double>(hits) /
         static_cast<double>(std::min(K, relevant.size()));
}

namespace detail {

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateError("zero variance in correlation input");
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks, ties averaged; 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 +
                       1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

// Pearson on values; Spearman as Pearson on tie-averaged ranks. Keys are
// joined and processed in sorted order, so the result is order-independent.
inline Correlation correlate(const std::map<std::string, double>& scores,
                             const std::map<std::string, double>& recalls) {
  std::vector<double> x, y;
  for (const auto& [qid, s] : scores) {
    const auto it = recalls.find(qid);
    if (it != recalls.end()) {
      x.push_back(s);
      y.push_back(it->second);
    }
  }
  if (x.size() < 3) {
    throw InsufficientDataError("correlation needs >= 3 shared query ids");
  }
  Correlation c;
  c.pearson = detail::pearson(x, y);
  c.spearman =
      detail::pearson(detail::average_ranks(x), detail::average_ranks(y));
  return c;
}

struct BootstrapCI {
  double low = 0.0;
  double high = 0.0;
  double point = 0.0;
};

namespace detail {

inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Percentile bootstrap of the mean at 95%; seeded, so intervals reproduce.
inline BootstrapCI bootstrap_ci(const std::vector<double>& values,
                                std::size_t resamples, std::uint64_t seed) {
  if (values.size() < 2) {
    throw InsufficientDataError("bootstrap needs >= 2 values");
  }
  if (resamples < 100) {
    throw ConfigError("bootstrap needs >= 100 resamples");
  }
  const std::size_t n = values.size();
  double point = 0.0;
  for (double v : values) point += v;
  point /= static_cast<double>(n);

  Rng rng(splitmix64(seed));
  std::vector<double> means;
  means.reserve(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += values[uniform_index(rng, n)];
    }
    means.push_back(acc / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());
  BootstrapCI ci;
  ci.low = detail::percentile_sorted(means, 0.025);
  ci.high = detail::percentile_sorted(means, 0.975);
  ci.point = point;
  return ci;
}

namespace detail {

// Exact two-sided signed-rank p via the sign-flip distribution of W+ over
// doubled ranks (doubling keeps tie-averaged ranks integral).
inline double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus) {
  const std::size_t n = ranks.size();
  std::vector<std::uint64_t> r2(n);
  std::uint64_t total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r2[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
    total2 += r2[i];
  }
  // counts[s] = number of sign assignments with doubled W+ equal to s
  std::vector<std::uint64_t> counts(total2 + 1, 0);
  counts[0] = 1;
  std::uint64_t upper = 0;
  for (std::size_t i = 0; i < n; ++i) {
    upper += r2[i];
    for (std::uint64_t s = upper + 1; s-- > r2[i];) {
      counts[s] += counts[s - r2[i]];
    }
  }
  const std::uint64_t w2 =
      static_cast<std::uint64_t>(std::llround(2.0 * w_plus));
  const std::uint64_t mirror = total2 - w2;
  const std::uint64_t lo_tail = std::min(w2, mirror);
  const std::uint64_t hi_tail = std::max(w2, mirror);
  double tail = 0.0;
  for (std::uint64_t s = 0; s <= lo_tail; ++s) tail += counts[s];
  for (std::uint64_t s = hi_tail; s <= total2; ++s) tail += counts[s];
  const double denom = std::pow(2.0, static_cast<double>(n));
  return std::min(1.0, tail / denom);
}

}  // namespace detail

// Two-sided Wilcoxon signed-rank test on paired per-query values. Zero
// differences are dropped; exact distribution for n <= 20, normal
// approximation with tie correction above.
inline double paired_test(const std::map<std::string, double>& a,
                          const std::map<std::string, double>& b) {
  std::vector<double> diffs;
  for (const auto& [qid, va] : a) {
    const auto it = b.find(qid);
    if (it != b.end()) {
      const double d = va - it->second;
      if (d != 0.0) diffs.push_back(d);
    }
  }
  std::size_t shared = 0;
  for (const auto& [qid, va] : a) shared += b.count(qid);
  if (shared < 5) {
    throw InsufficientDataError("paired test needs >= 5 shared query ids");
  }
  if (diffs.empty()) {
    throw DegenerateError("all paired differences are zero");
  }

  const std::size_t n = diffs.size();
  std::vector<double> abs_d(n);
  for (std::size_t i = 0; i < n; ++i) abs_d[i] = std::abs(diffs[i]);
  const std::vector<double> ranks = detail::average_ranks(abs_d);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) w_plus += ranks[i];
  }

  if (n <= 20) {
    return detail::wilcoxon_exact_p(ranks, w_plus);
  }

  // Tie-corrected normal approximation.
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  double tie_term = 0.0;
  std::sort(abs_d.begin(), abs_d.end());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[j + 1] == abs_d[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double var =
      dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) throw DegenerateError("degenerate variance in paired test");
  const double z = (w_plus - mean) / std::sqrt(var);
  const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  return std::min(1.0, p);
}

}  // namespace scert
