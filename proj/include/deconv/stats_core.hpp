#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "deconv/errors.hpp"

namespace deconv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Seeded random source. A (seed, stream) pair fully determines the draw
/// sequence, so independent chains use distinct stream ids rather than
/// sharing one object across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u = 0.0;
    while (u <= 0.0) u = std::generate_canonical<double, 53>(engine_);
    return u;
  }

  double normal() { return normal_(engine_); }

  double exponential() { return -std::log(uniform()); }

  /// Log of a Gamma(shape, 1) variate; stays finite for very small shapes.
  double log_gamma_variate(double shape) {
    if (shape >= 1.0) return std::log(std::gamma_distribution<double>(shape, 1.0)(engine_));
    const double boosted = std::gamma_distribution<double>(shape + 1.0, 1.0)(engine_);
    return std::log(boosted) + std::log(uniform()) / shape;
  }

  /// Gamma with shape/rate parameterisation.
  double gamma(double shape, double rate = 1.0) { return std::exp(log_gamma_variate(shape)) / rate; }

  /// Inverse-gamma with shape/scale parameterisation (mean scale/(shape-1)).
  double inverse_gamma(double shape, double scale) {
    return scale * std::exp(-log_gamma_variate(shape));
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Dense kernels

inline double mean_diagonal(const Matrix& m) { return m.diagonal().mean(); }

/// Lower Cholesky factor. On failure a jitter of 1e-10 * mean(diag) is added
/// and doubled up to six times before giving up.
inline Matrix chol_factor(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw Error(Errc::dimension_mismatch, "chol_factor expects a non-empty square matrix");
  auto attempt = [](const Matrix& a, Matrix& out) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) return false;
    out = llt.matrixL();
    return out.allFinite();
  };
  Matrix lower;
  if (attempt(m, lower)) return lower;
  double base = std::abs(mean_diagonal(m));
  if (!(base > 0.0) || !std::isfinite(base)) base = 1.0;
  double jitter = 1e-10 * base;
  for (int doubling = 0; doubling <= 6; ++doubling, jitter *= 2.0) {
    Matrix shifted = m;
    shifted.diagonal().array() += jitter;
    if (attempt(shifted, lower)) return lower;
  }
  throw Error(Errc::not_positive_definite,
              "matrix of dimension " + std::to_string(m.rows()) + " not positive definite after jitter");
}

/// mean + L z with z iid standard normal.
inline Vector sample_mvn(const Vector& mean, const Matrix& chol, RngStream& rng) {
  if (chol.rows() != mean.size() || chol.cols() != mean.size())
    throw Error(Errc::dimension_mismatch, "sample_mvn: mean and factor dimensions differ");
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + chol.triangularView<Eigen::Lower>() * z;
}

/// Draw from N(P^{-1} b, P^{-1}) given the precision P and linear term b.
inline Vector sample_mvn_canonical(const Matrix& precision, const Vector& linear, RngStream& rng) {
  if (precision.rows() != linear.size())
    throw Error(Errc::dimension_mismatch, "sample_mvn_canonical: precision and linear term differ");
  const Matrix lower = chol_factor(precision);
  const auto L = lower.triangularView<Eigen::Lower>();
  Vector mean = L.solve(linear);
  mean = L.transpose().solve(mean);
  Vector z(linear.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + L.transpose().solve(z);
}

/// Inverse of an SPD matrix through its Cholesky factor.
inline Matrix spd_inverse(const Matrix& m) {
  const Matrix lower = chol_factor(m);
  const auto L = lower.triangularView<Eigen::Lower>();
  Matrix inv = L.solve(Matrix::Identity(m.rows(), m.cols()));
  inv = L.transpose().solve(inv);
  return 0.5 * (inv + inv.transpose());
}

/// Draw from IW_p(df, scale) with mean scale/(df-p-1). Uses the Bartlett
/// factor A of a Wishart(df, I): draw = Ls A^{-T} A^{-1} Ls^T with scale = Ls Ls^T.
inline Matrix sample_inverse_wishart(double df, const Matrix& scale, RngStream& rng) {
  const auto p = scale.rows();
  if (!(df > static_cast<double>(p) - 1.0))
    throw Error(Errc::invalid_degrees_of_freedom,
                "inverse-Wishart needs df > p-1 (df=" + std::to_string(df) + ")");
  const Matrix ls = chol_factor(scale);
  Matrix a = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double chi = rng.chi_squared(df - static_cast<double>(i));
    // floor keeps draws numerically SPD as df approaches p-1
    a(i, i) = std::max(std::sqrt(chi), 1e-6);
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix a_inv = a.triangularView<Eigen::Lower>().solve(Matrix::Identity(p, p));
  const Matrix t = ls * a_inv.transpose();
  Matrix draw = t * t.transpose();
  return 0.5 * (draw + draw.transpose());
}

inline Vector sample_dirichlet(const Vector& conc, RngStream& rng) {
  if (conc.size() == 0) throw Error(Errc::non_positive_concentration, "empty concentration vector");
  Vector logs(conc.size());
  for (Eigen::Index k = 0; k < conc.size(); ++k) {
    if (!(conc(k) > 0.0))
      throw Error(Errc::non_positive_concentration,
                  "concentration " + std::to_string(k) + " is " + std::to_string(conc(k)));
    logs(k) = rng.log_gamma_variate(conc(k));
  }
  const double top = logs.maxCoeff();
  Vector w = (logs.array() - top).exp();
  w /= w.sum();
  return w;
}

// ---------------------------------------------------------------------------
// Normal CDF helpers

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double log_normal_cdf(double z) {
  if (z == -std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  if (z > -30.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  // asymptotic Mills-ratio expansion, accurate to ~1e-12 relative beyond -30
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(-z) - 0.5 * kLog2Pi + std::log(series);
}

/// Quantile of the standard normal at probability exp(log_p).
inline double normal_quantile_from_log(double log_p) {
  if (log_p >= 0.0) return std::numeric_limits<double>::infinity();
  if (log_p > -690.0) {
    const double p = std::exp(log_p);
    if (p < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
  }
  // Newton on log Phi for the far lower tail
  double x = -std::sqrt(-2.0 * log_p);
  for (int it = 0; it < 50; ++it) {
    const double lc = log_normal_cdf(x);
    const double log_pdf = -0.5 * x * x - 0.5 * kLog2Pi;
    const double step = (lc - log_p) / std::exp(log_pdf - lc);
    x -= step;
    if (std::abs(step) < 1e-12 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

/// Truncated normal on [lo, hi] by inverse CDF. Infinite bounds are allowed.
/// Intervals in the upper tail are reflected so the inversion always works
/// on the lower tail in log space. sd == 0 returns the clamped mean.
inline double sample_truncated_normal(double mean, double sd, double lo, double hi, RngStream& rng) {
  if (!(lo < hi)) throw Error(Errc::empty_interval, "truncation interval is empty");
  if (!(sd > 0.0)) return std::clamp(mean, lo, hi);
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (lo == -inf && hi == inf) return mean + sd * rng.normal();
  double a = (lo - mean) / sd;
  double b = (hi - mean) / sd;
  double sign = 1.0;
  if (a > 0.0) {
    const double na = -b;
    b = -a;
    a = na;
    sign = -1.0;
  }
  const double la = log_normal_cdf(a);
  const double lb = log_normal_cdf(b);
  const double u = rng.uniform();
  const double ratio = (la == -inf) ? 0.0 : std::exp(la - lb);
  const double lp = lb + std::log(u + (1.0 - u) * ratio);
  double z = normal_quantile_from_log(lp);
  z = std::clamp(z, a, b);
  return std::clamp(mean + sign * sd * z, lo, hi);
}

// ---------------------------------------------------------------------------
// Gaussian kernel with a precomputed inverse factor. log_density does no
// allocation, which matters inside label and likelihood loops.

class GaussianKernel {
 public:
  GaussianKernel() = default;

  GaussianKernel(const Vector& mean, const Matrix& covariance) : dim_(static_cast<int>(mean.size())) {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
      throw Error(Errc::dimension_mismatch, "GaussianKernel: mean/covariance dimensions differ");
    const Matrix lower = chol_factor(covariance);
    const Matrix inv = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(dim_, dim_));
    mean_.assign(mean.data(), mean.data() + dim_);
    inv_factor_.resize(static_cast<std::size_t>(dim_) * dim_);
    for (int r = 0; r < dim_; ++r)
      for (int c = 0; c < dim_; ++c) inv_factor_[static_cast<std::size_t>(r) * dim_ + c] = inv(r, c);
    log_norm_ = -0.5 * dim_ * kLog2Pi - lower.diagonal().array().log().sum();
  }

  int dim() const noexcept { return dim_; }
  double log_normaliser() const noexcept { return log_norm_; }

  /// Squared Mahalanobis distance of x (length dim) from the mean.
  double mahalanobis_sq(const double* x) const noexcept {
    double q = 0.0;
    const double* row = inv_factor_.data();
    for (int r = 0; r < dim_; ++r, row += dim_) {
      double s = 0.0;
      for (int c = 0; c <= r; ++c) s += row[c] * (x[c] - mean_[c]);
      q += s * s;
    }
    return q;
  }

  double log_density(const double* x) const noexcept { return log_norm_ - 0.5 * mahalanobis_sq(x); }
  double log_density(const Vector& x) const noexcept { return log_density(x.data()); }

 private:
  int dim_ = 0;
  std::vector<double> mean_;
  std::vector<double> inv_factor_;  // row-major lower-triangular L^{-1}
  double log_norm_ = 0.0;
};

inline double log_mvn_density(const Vector& x, const Vector& mean, const Matrix& cov) {
  return GaussianKernel(mean, cov).log_density(x);
}

inline double normal_log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

/// Categorical draw from unnormalised log weights (max-subtracted).
inline int sample_log_categorical(const double* log_w, int k, RngStream& rng) {
  double top = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) top = std::max(top, log_w[j]);
  if (!std::isfinite(top))
    throw Error(Errc::all_responsibilities_underflow, "every component has zero responsibility");
  double total = 0.0;
  double w[64];
  std::vector<double> heap;
  double* buf = w;
  if (k > 64) {
    heap.resize(static_cast<std::size_t>(k));
    buf = heap.data();
  }
  for (int j = 0; j < k; ++j) {
    buf[j] = std::exp(log_w[j] - top);
    total += buf[j];
  }
  double u = rng.uniform() * total;
  for (int j = 0; j < k; ++j) {
    u -= buf[j];
    if (u <= 0.0) return j;
  }
  for (int j = k - 1; j >= 0; --j)
    if (buf[j] > 0.0) return j;
  return k - 1;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace deconv
