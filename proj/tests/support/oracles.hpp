#pragma once

// Independent reference computations used only by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Kolmogorov limiting survival function Q(lambda).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double p_value;
};

inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double en = std::sqrt(n);
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)};
}

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Sample covariance of column vectors.
inline Eigen::MatrixXd sample_cov(const std::vector<Eigen::VectorXd>& xs) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) m += x;
  m /= static_cast<double>(xs.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m.size(), m.size());
  for (const auto& x : xs) c += (x - m) * (x - m).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

inline Eigen::VectorXd sample_mean(const std::vector<Eigen::VectorXd>& xs) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

/// Cox-de Boor recursion, evaluated directly from the definition.
inline double cox_de_boor(const std::vector<double>& t, int i, int degree, double x, bool last_interval) {
  if (degree == 0) {
    if (t[i] <= x && x < t[i + 1]) return 1.0;
    if (last_interval && x == t[i + 1] && t[i] < t[i + 1]) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double d1 = t[i + degree] - t[i];
  const double d2 = t[i + degree + 1] - t[i + 1];
  if (d1 > 0) out += (x - t[i]) / d1 * cox_de_boor(t, i, degree - 1, x, last_interval);
  if (d2 > 0) out += (t[i + degree + 1] - x) / d2 * cox_de_boor(t, i + 1, degree - 1, x, last_interval);
  return out;
}

/// Basis vector via the recursion; the right end point is folded into the
/// last nondegenerate interval.
inline std::vector<double> cox_de_boor_basis(const std::vector<double>& t, int degree, double x) {
  const int J = static_cast<int>(t.size()) - degree - 1;
  const bool at_end = x == t.back();
  std::vector<double> out(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    // only the last nondegenerate interval is closed on the right
    out[static_cast<std::size_t>(j)] = cox_de_boor(t, j, degree, x, at_end);
  }
  return out;
}

/// Gaussian conditioning by Schur complement: for z ~ N(m, S) and a linear
/// constraint A z = 0 (A full row rank), returns the conditional mean and covariance.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> condition_on_zero(const Eigen::VectorXd& m, const Eigen::MatrixXd& s,
                                                                    const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sa = s * a.transpose();
  const Eigen::MatrixXd aa = a * s * a.transpose();
  const Eigen::MatrixXd gain = sa * aa.inverse();
  return {m - gain * (a * m), s - gain * sa.transpose()};
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace oracle
