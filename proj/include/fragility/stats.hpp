#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

// Small descriptive-statistics helpers shared across modules.
namespace fragility::stats {

enum class QuantileMethod {
  Type7,        // linear interpolation between order statistics
  InvertedCdf,  // smallest order statistic with ECDF >= p (returns an observed value)
};

/// Empirical quantile of `values` (copied and sorted internally).
template <typename Range>
double quantile(const Range& values, double p, QuantileMethod method = QuantileMethod::Type7) {
  std::vector<double> v(std::begin(values), std::end(values));
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  if (method == QuantileMethod::InvertedCdf) {
    auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return v[k - 1];
  }
  double h = (static_cast<double>(n) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return v[n - 1];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

template <typename Derived>
double mean(const Eigen::DenseBase<Derived>& x) {
  return x.mean();
}

/// Sample standard deviation (divisor n-1).
template <typename Derived>
double sample_std(const Eigen::DenseBase<Derived>& x) {
  const auto n = x.size();
  if (n < 2) return 0.0;
  const double m = x.mean();
  return std::sqrt((x.derived().array() - m).square().sum() / static_cast<double>(n - 1));
}

template <typename A, typename B>
double pearson(const Eigen::DenseBase<A>& x, const Eigen::DenseBase<B>& y) {
  const Eigen::ArrayXd xc = x.derived().array() - x.mean();
  const Eigen::ArrayXd yc = y.derived().array() - y.mean();
  const double den = std::sqrt(xc.square().sum() * yc.square().sum());
  return den > 0 ? (xc * yc).sum() / den : 0.0;
}

/// Average ranks (1-based), ties share the mean rank.
inline Eigen::VectorXd average_ranks(const Eigen::VectorXd& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

/// z-score with sample std; a constant series maps to zeros.
inline Eigen::VectorXd zscore(const Eigen::VectorXd& x) {
  const double s = sample_std(x);
  Eigen::VectorXd out = x.array() - x.mean();
  if (s > 0) out /= s;
  return out;
}

}  // namespace fragility::stats
