#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fragility/common.hpp"

// Dependence estimators for a T x N window of returns (rows = days, columns = categories).
namespace fragility {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class CovarianceKind { Sample, LedoitWolf };

template <typename Scalar>
struct CovarianceEstimate {
  MatrixX<Scalar> matrix;
  MatrixX<Scalar> sample;  // S; equals `matrix` for the sample estimator
  CovarianceKind estimator = CovarianceKind::Sample;
  std::optional<Scalar> shrinkage;     // lambda in [0, 1]
  std::optional<Scalar> target_scale;  // mu, the mean sample variance
};

enum class CorrelationSource { Shrinkage, Pearson, GlassoPartial };

template <typename Scalar>
struct CorrelationMatrix {
  MatrixX<Scalar> matrix;
  CorrelationSource source = CorrelationSource::Shrinkage;
  Date window_end{};
};

/// Column-demeaned copy of a window.
template <typename Derived>
MatrixX<typename Derived::Scalar> demeaned(const Eigen::MatrixBase<Derived>& window) {
  return window.rowwise() - window.colwise().mean();
}

/// Sample covariance with divisor T.
template <typename Derived>
CovarianceEstimate<typename Derived::Scalar> sample_covariance(const Eigen::MatrixBase<Derived>& window) {
  using Scalar = typename Derived::Scalar;
  const auto t = window.rows();
  if (t < 2) throw DataError("sample covariance needs at least 2 observations, got " + std::to_string(t));
  const MatrixX<Scalar> x = demeaned(window);
  MatrixX<Scalar> s = (x.transpose() * x) / static_cast<Scalar>(t);
  s = (s + s.transpose()) / Scalar(2);  // exact symmetry
  CovarianceEstimate<Scalar> est;
  est.matrix = s;
  est.sample = std::move(s);
  est.estimator = CovarianceKind::Sample;
  return est;
}

/// Shrinkage toward mu*I with the optimal intensity of the 2004 well-conditioned estimator:
///   lambda = min(b2, d2) / d2,  d2 = ||S - mu I||_F^2,
///   b2 = (1/T^2) sum_t ||x_t x_t' - S||_F^2 = (sum_t ||x_t||^4 / T - ||S||_F^2) / T.
template <typename Derived>
CovarianceEstimate<typename Derived::Scalar> ledoit_wolf(const Eigen::MatrixBase<Derived>& window,
                                                         Diagnostics* diag = nullptr) {
  using Scalar = typename Derived::Scalar;
  const auto t = window.rows();
  const auto n = window.cols();
  CovarianceEstimate<Scalar> est = sample_covariance(window);
  const MatrixX<Scalar>& s = est.sample;
  const Scalar mu = s.trace() / static_cast<Scalar>(n);

  Scalar lambda(0);
  if (n == 1) {
    warn(diag, "Ledoit-Wolf on a single column; shrinkage forced to 0");
  } else {
    const MatrixX<Scalar> x = demeaned(window);
    const Scalar d2 = (s - mu * MatrixX<Scalar>::Identity(n, n)).squaredNorm();
    const Scalar sum_fourth = x.rowwise().squaredNorm().array().square().sum();
    Scalar b2 = (sum_fourth / static_cast<Scalar>(t) - s.squaredNorm()) / static_cast<Scalar>(t);
    b2 = std::max(b2, Scalar(0));
    if (d2 > Scalar(0)) lambda = std::clamp(std::min(b2, d2) / d2, Scalar(0), Scalar(1));
  }

  est.matrix = (Scalar(1) - lambda) * s + lambda * mu * MatrixX<Scalar>::Identity(n, n);
  est.estimator = CovarianceKind::LedoitWolf;
  est.shrinkage = lambda;
  est.target_scale = mu;
  return est;
}

/// C_ij = Sigma_ij / sqrt(Sigma_ii Sigma_jj), clamped to [-1, 1], unit diagonal.
template <typename Scalar>
CorrelationMatrix<Scalar> to_correlation(const CovarianceEstimate<Scalar>& cov,
                                         const std::vector<std::string>* names = nullptr) {
  const auto n = cov.matrix.rows();
  VectorX<Scalar> inv_sd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar v = cov.matrix(i, i);
    if (!(v > Scalar(0))) {
      const std::string who = names && static_cast<std::size_t>(i) < names->size()
                                  ? "'" + (*names)[static_cast<std::size_t>(i)] + "'"
                                  : "column " + std::to_string(i);
      throw DataError("degenerate variance for " + who);
    }
    inv_sd[i] = Scalar(1) / std::sqrt(v);
  }
  CorrelationMatrix<Scalar> c;
  c.matrix = (inv_sd.asDiagonal() * cov.matrix * inv_sd.asDiagonal()).cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  c.matrix.diagonal().setOnes();
  c.source = cov.estimator == CovarianceKind::LedoitWolf ? CorrelationSource::Shrinkage : CorrelationSource::Pearson;
  return c;
}

template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> pearson_correlation(const Eigen::MatrixBase<Derived>& window,
                                                                const std::vector<std::string>* names = nullptr) {
  auto c = to_correlation(sample_covariance(window), names);
  c.source = CorrelationSource::Pearson;
  return c;
}

template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> shrinkage_correlation(const Eigen::MatrixBase<Derived>& window,
                                                                  const std::vector<std::string>* names = nullptr,
                                                                  Diagnostics* diag = nullptr) {
  return to_correlation(ledoit_wolf(window, diag), names);
}

struct GlassoOptions {
  double tolerance = 1e-4;  // duality gap
  int max_sweeps = 200;
  int max_inner = 1000;
  double inner_tolerance = 1e-8;
};

template <typename Scalar>
struct GlassoResult {
  MatrixX<Scalar> covariance;  // W
  MatrixX<Scalar> precision;   // Theta
  Scalar duality_gap{};
  int sweeps = 0;
};

/// L1-penalised Gaussian likelihood (off-diagonal penalty) by block coordinate descent on
/// the covariance W, one lasso subproblem per column, stopped on the duality gap
///   tr(S Theta) - N + rho * sum_{i != j} |Theta_ij|.
template <typename Scalar>
GlassoResult<Scalar> graphical_lasso(const MatrixX<Scalar>& s, Scalar rho, const GlassoOptions& opt = {}) {
  const auto n = s.rows();
  if (!(rho >= Scalar(0))) throw ValidationError("glasso penalty must be nonnegative");
  GlassoResult<Scalar> out;
  MatrixX<Scalar> w = s;
  MatrixX<Scalar> beta = MatrixX<Scalar>::Zero(n - 1, n);  // column j holds the coefficients for node j
  MatrixX<Scalar> theta(n, n);

  auto index_without = [n](Eigen::Index j) {
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != j) idx.push_back(k);
    }
    return idx;
  };

  auto precision_from = [&]() {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto idx = index_without(j);
      VectorX<Scalar> w12 = w(idx, j);
      const Scalar denom = w(j, j) - w12.dot(beta.col(j));
      const Scalar t22 = Scalar(1) / denom;
      theta(j, j) = t22;
      for (std::size_t k = 0; k < idx.size(); ++k) theta(idx[k], j) = -beta(static_cast<Eigen::Index>(k), j) * t22;
    }
    theta = (theta + theta.transpose()) / Scalar(2);
  };

  auto gap = [&]() {
    const Scalar off = theta.cwiseAbs().sum() - theta.diagonal().cwiseAbs().sum();
    return (s.cwiseProduct(theta)).sum() - static_cast<Scalar>(n) + rho * off;
  };

  if (n == 1) {
    out.covariance = w;
    out.precision = w.cwiseInverse();
    return out;
  }

  Scalar last_gap = std::numeric_limits<Scalar>::infinity();
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto idx = index_without(j);
      const MatrixX<Scalar> v = w(idx, idx);
      const VectorX<Scalar> u = s(idx, j);
      auto b = beta.col(j);
      // Coordinate descent for min 0.5 b'Vb - u'b + rho |b|_1.
      for (int it = 0; it < opt.max_inner; ++it) {
        Scalar max_step(0);
        for (Eigen::Index k = 0; k < n - 1; ++k) {
          const Scalar r = u[k] - v.row(k).dot(b) + v(k, k) * b[k];
          const Scalar soft = std::copysign(std::max(std::abs(r) - rho, Scalar(0)), r);
          const Scalar nb = soft / v(k, k);
          max_step = std::max(max_step, std::abs(nb - b[k]));
          b[k] = nb;
        }
        if (max_step < static_cast<Scalar>(opt.inner_tolerance)) break;
      }
      const VectorX<Scalar> w12 = v * b;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        w(idx[k], j) = w12[static_cast<Eigen::Index>(k)];
        w(j, idx[k]) = w12[static_cast<Eigen::Index>(k)];
      }
    }
    precision_from();
    last_gap = gap();
    out.sweeps = sweep;
    if (std::abs(last_gap) < static_cast<Scalar>(opt.tolerance)) {
      out.covariance = w;
      out.precision = theta;
      out.duality_gap = last_gap;
      return out;
    }
  }
  throw ConvergenceError("graphical lasso did not converge in " + std::to_string(opt.max_sweeps) +
                             " sweeps (duality gap " + format_double(static_cast<double>(last_gap)) + ")",
                         static_cast<double>(last_gap));
}

/// Partial correlations P_ij = -Theta_ij / sqrt(Theta_ii Theta_jj) from a graphical lasso fit
/// on the window standardised to unit variance per column.
template <typename Derived>
CorrelationMatrix<typename Derived::Scalar> glasso_partial_correlation(const Eigen::MatrixBase<Derived>& window,
                                                                       typename Derived::Scalar rho,
                                                                       const GlassoOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  if (!(rho > Scalar(0))) throw ValidationError("glasso penalty must be positive");
  const MatrixX<Scalar> s = to_correlation(sample_covariance(window)).matrix;
  const auto fit = graphical_lasso<Scalar>(s, rho, opt);
  const VectorX<Scalar> inv_sd = fit.precision.diagonal().cwiseSqrt().cwiseInverse();
  CorrelationMatrix<Scalar> c;
  c.matrix = (-(inv_sd.asDiagonal() * fit.precision * inv_sd.asDiagonal())).cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  c.matrix.diagonal().setOnes();
  c.source = CorrelationSource::GlassoPartial;
  return c;
}

std::string to_string(CorrelationSource s);
CorrelationSource correlation_source_from_string(const std::string& s);

}  // namespace fragility
