#pragma once

#include <limits>
#include <vector>

#include "deconv/mixture.hpp"

namespace deconv {

struct Clustering {
  int k = 0;
  Matrix centers;  // p x k
  Labels labels;
  std::vector<int> sizes;
  double bic = 0.0;
};

namespace detail {

inline double squared_distance(const PointSet& x, Eigen::Index i, const Matrix& centers, Eigen::Index c) {
  return (x.col(i) - centers.col(c)).squaredNorm();
}

/// Lloyd iterations from a k-means++ seeding.
inline Clustering lloyd(const PointSet& x, int k, RngStream& rng, int max_iter = 100) {
  const auto n = x.cols();
  const auto p = x.rows();
  Clustering out;
  out.k = k;
  out.centers.resize(p, k);
  out.centers.col(0) = x.col(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], squared_distance(x, i, out.centers, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    out.centers.col(c) = x.col(pick);
  }
  out.labels.assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(x, i, out.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(x, i, out.centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (out.labels[static_cast<std::size_t>(i)] != best) {
        changed = true;
        out.labels[static_cast<std::size_t>(i)] = best;
      }
    }
    out.sizes.assign(static_cast<std::size_t>(k), 0);
    Matrix sums = Matrix::Zero(p, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = out.labels[static_cast<std::size_t>(i)];
      sums.col(c) += x.col(i);
      ++out.sizes[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c)
      if (out.sizes[static_cast<std::size_t>(c)] > 0) out.centers.col(c) = sums.col(c) / out.sizes[static_cast<std::size_t>(c)];
    if (!changed && it > 0) break;
  }
  return out;
}

/// Within-cluster sum of squares.
inline double inertia(const PointSet& x, const Clustering& c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) s += squared_distance(x, i, c.centers, c.labels[static_cast<std::size_t>(i)]);
  return s;
}

/// BIC of the hard-assignment spherical Gaussian mixture (own variance per cluster).
inline double spherical_bic(const PointSet& x, const Clustering& c, double var_floor) {
  const double n = static_cast<double>(x.cols());
  const double p = static_cast<double>(x.rows());
  std::vector<double> ss(static_cast<std::size_t>(c.k), 0.0);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto lab = static_cast<std::size_t>(c.labels[static_cast<std::size_t>(i)]);
    ss[lab] += squared_distance(x, i, c.centers, static_cast<Eigen::Index>(lab));
  }
  double loglik = 0.0;
  int used = 0;
  for (int j = 0; j < c.k; ++j) {
    const double nj = c.sizes[static_cast<std::size_t>(j)];
    if (nj == 0) continue;
    ++used;
    const double var = std::max(ss[static_cast<std::size_t>(j)] / (nj * p), var_floor);
    loglik += nj * std::log(nj / n) - 0.5 * nj * p * (kLog2Pi + std::log(var)) - 0.5 * ss[static_cast<std::size_t>(j)] / var;
  }
  const double params = used * p + used + (used - 1);
  return -2.0 * loglik + params * std::log(n);
}

}  // namespace detail

/// k-means (k-means++ seeding, best of `restarts`) for k = 1..k_max, with k
/// chosen by BIC under spherical Gaussian clusters.
inline Clustering kmeans_bic(const PointSet& x, RngStream& rng, int k_max = 8, int restarts = 5) {
  const auto n = x.cols();
  if (n == 0) throw Error(Errc::empty_dataset, "clustering needs at least one point");
  const Vector mean = x.rowwise().mean();
  const double total_var = n > 1 ? (x.colwise() - mean).squaredNorm() / static_cast<double>(n * x.rows()) : 0.0;
  const double floor = std::max(1e-6 * total_var, 1e-12);
  Clustering best;
  best.bic = std::numeric_limits<double>::infinity();
  const int top = static_cast<int>(std::min<Eigen::Index>(k_max, std::max<Eigen::Index>(1, n / 2)));
  for (int k = 1; k <= top; ++k) {
    Clustering pick;
    double pick_inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < (k == 1 ? 1 : restarts); ++r) {
      Clustering c = detail::lloyd(x, k, rng);
      const double in = detail::inertia(x, c);
      if (in < pick_inertia) {
        pick_inertia = in;
        pick = std::move(c);
      }
    }
    pick.bic = detail::spherical_bic(x, pick, floor);
    if (pick.bic < best.bic) best = std::move(pick);
  }
  // drop empty clusters so k counts occupied ones
  Clustering out;
  std::vector<int> remap(static_cast<std::size_t>(best.k), -1);
  for (int c = 0; c < best.k; ++c)
    if (best.sizes[static_cast<std::size_t>(c)] > 0) remap[static_cast<std::size_t>(c)] = out.k++;
  out.centers.resize(x.rows(), out.k);
  out.sizes.assign(static_cast<std::size_t>(out.k), 0);
  for (int c = 0; c < best.k; ++c)
    if (remap[static_cast<std::size_t>(c)] >= 0) {
      out.centers.col(remap[static_cast<std::size_t>(c)]) = best.centers.col(c);
      out.sizes[static_cast<std::size_t>(remap[static_cast<std::size_t>(c)])] = best.sizes[static_cast<std::size_t>(c)];
    }
  out.labels.resize(best.labels.size());
  for (std::size_t i = 0; i < best.labels.size(); ++i)
    out.labels[i] = remap[static_cast<std::size_t>(best.labels[i])];
  out.bic = best.bic;
  return out;
}

}  // namespace deconv
