#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deconv/stats_core.hpp"

namespace deconv {

/// Clamped knot sequence on [A, B]: q+1 copies of A, L-1 strictly increasing
/// interior knots, q+1 copies of B. Length 2q+L+1, giving J = q+L bases.
class KnotVector {
 public:
  KnotVector() = default;

  KnotVector(int degree, double lower, double upper, const std::vector<double>& interior)
      : degree_(degree), interior_count_(static_cast<int>(interior.size()) + 1) {
    if (degree < 0) throw Error(Errc::invalid_config, "spline degree must be non-negative");
    if (!(lower < upper)) throw Error(Errc::invalid_config, "knot range needs A < B");
    double prev = lower;
    for (double t : interior) {
      if (!(t > prev) || !(t < upper))
        throw Error(Errc::invalid_config, "interior knots must be strictly increasing inside (A, B)");
      prev = t;
    }
    knots_.assign(static_cast<std::size_t>(degree) + 1, lower);
    knots_.insert(knots_.end(), interior.begin(), interior.end());
    knots_.insert(knots_.end(), static_cast<std::size_t>(degree) + 1, upper);
  }

  /// L equal subintervals of [lower, upper].
  static KnotVector equidistant(int degree, int intervals, double lower, double upper) {
    if (intervals < 1) throw Error(Errc::invalid_config, "need at least one knot interval");
    std::vector<double> interior;
    for (int i = 1; i < intervals; ++i)
      interior.push_back(lower + (upper - lower) * static_cast<double>(i) / intervals);
    return KnotVector(degree, lower, upper, interior);
  }

  int degree() const noexcept { return degree_; }
  int interior_count() const noexcept { return interior_count_; }
  int basis_count() const noexcept { return degree_ + interior_count_; }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }
  const std::vector<double>& knots() const noexcept { return knots_; }
  bool contains(double x) const { return x >= lower() && x <= upper(); }

 private:
  int degree_ = 0;
  int interior_count_ = 0;
  std::vector<double> knots_;
};

namespace detail {

/// Index of the knot span holding x, with the right end folded into the last span.
inline int knot_span(const KnotVector& kv, double x) {
  const auto& t = kv.knots();
  const int q = kv.degree();
  const int last = kv.basis_count() - 1;
  if (x >= t[static_cast<std::size_t>(last) + 1]) return last;
  int lo = q, hi = last + 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (x < t[static_cast<std::size_t>(mid)]) hi = mid;
    else lo = mid;
  }
  return lo;
}

/// The q+1 nonzero basis values on `span`, written into out[0..q].
inline void nonzero_basis(const KnotVector& kv, int span, double x, double* out) {
  const auto& t = kv.knots();
  const int q = kv.degree();
  double left[32], right[32];
  out[0] = 1.0;
  for (int j = 1; j <= q; ++j) {
    left[j] = x - t[static_cast<std::size_t>(span + 1 - j)];
    right[j] = t[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace detail

/// All J basis values at x (de Boor's triangular scheme).
inline Vector bspline_basis(double x, const KnotVector& kv) {
  if (!kv.contains(x))
    throw Error(Errc::out_of_support, "x=" + std::to_string(x) + " outside [" +
                                          std::to_string(kv.lower()) + ", " + std::to_string(kv.upper()) + "]");
  if (kv.degree() > 30) throw Error(Errc::invalid_config, "spline degree above 30 unsupported");
  Vector basis = Vector::Zero(kv.basis_count());
  const int span = detail::knot_span(kv, x);
  double local[32];
  detail::nonzero_basis(kv, span, x, local);
  for (int r = 0; r <= kv.degree(); ++r) basis(span - kv.degree() + r) = local[r];
  return basis;
}

/// P = D^T D with D the (J-2) x J second-difference operator.
inline Matrix second_difference_penalty(int J) {
  if (J < 3) throw Error(Errc::too_few_coefficients, "second differences need J >= 3, got " + std::to_string(J));
  Matrix d = Matrix::Zero(J - 2, J);
  for (int r = 0; r < J - 2; ++r) {
    d(r, r) = 1.0;
    d(r, r + 1) = -2.0;
    d(r, r + 2) = 1.0;
  }
  return d.transpose() * d;
}

/// v(x) = B(x) . exp(xi), a positive mixture of B-splines.
struct VarianceFunction {
  KnotVector knots;
  Vector xi;
  double sigma_xi_sq = 1.0;

  double variance_at(double x) const {
    if (!knots.contains(x))
      throw Error(Errc::out_of_support, "variance function evaluated outside its knot range");
    const int span = detail::knot_span(knots, x);
    double local[32];
    detail::nonzero_basis(knots, span, x, local);
    double v = 0.0;
    for (int r = 0; r <= knots.degree(); ++r) v += local[r] * std::exp(xi(span - knots.degree() + r));
    return v;
  }

  double scale_at(double x) const { return std::sqrt(variance_at(x)); }
};

inline double variance_at(const VarianceFunction& vf, double x) { return vf.variance_at(x); }

struct Interval {
  double lower;
  double upper;
};

/// [min - f*range, max + f*range] of the values; a degenerate range is
/// padded so that lower < upper always holds.
inline Interval inflated_range(const Vector& values, double fraction = 0.1) {
  if (values.size() == 0) throw Error(Errc::empty_dataset, "range of an empty set");
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  double pad = fraction * (hi - lo);
  if (!(pad > 0.0)) pad = 0.1 * std::max(1.0, std::abs(lo));
  return {lo - pad, hi + pad};
}

}  // namespace deconv
