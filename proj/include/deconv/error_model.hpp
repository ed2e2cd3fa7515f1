#pragma once

#include <vector>

#include "deconv/dataset.hpp"
#include "deconv/mixture.hpp"
#include "deconv/splines.hpp"

namespace deconv {

/// Joint conditional of the stacked component means before the mean-zero
/// restriction: block-diagonal, one (mean, covariance) block per component.
struct StackedConditional {
  std::vector<Vector> means;
  std::vector<Matrix> blocks;

  int components() const { return static_cast<int>(means.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  Vector stacked_mean() const {
    const int p = dim();
    Vector out(static_cast<Eigen::Index>(components()) * p);
    for (int k = 0; k < components(); ++k) out.segment(static_cast<Eigen::Index>(k) * p, p) = means[static_cast<std::size_t>(k)];
    return out;
  }

  Matrix dense_covariance() const {
    const int p = dim();
    const auto n = static_cast<Eigen::Index>(components()) * p;
    Matrix out = Matrix::Zero(n, n);
    for (int k = 0; k < components(); ++k)
      out.block(static_cast<Eigen::Index>(k) * p, static_cast<Eigen::Index>(k) * p, p, p) = blocks[static_cast<std::size_t>(k)];
    return out;
  }
};

/// Per-component conjugate conditional with prior N(0, Sigma0).
inline StackedConditional unconstrained_mean_conditional(const PointSet& residuals, const Labels& labels,
                                                         const std::vector<Matrix>& covariances,
                                                         const HyperParams& hyper) {
  const int K = static_cast<int>(covariances.size());
  const int p = static_cast<int>(residuals.rows());
  const auto counts = label_counts(labels, K);
  std::vector<Vector> sums(static_cast<std::size_t>(K), Vector::Zero(p));
  for (Eigen::Index i = 0; i < residuals.cols(); ++i) sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += residuals.col(i);
  const Matrix prior_prec = spd_inverse(hyper.Sigma0);
  StackedConditional out;
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (counts[kk] == 0) {
      out.means.push_back(Vector::Zero(p));
      out.blocks.push_back(hyper.Sigma0);
      continue;
    }
    const Matrix cov_inv = spd_inverse(covariances[kk]);
    const Matrix post_cov = spd_inverse(symmetrize(prior_prec + counts[kk] * cov_inv));
    out.means.push_back(post_cov * (cov_inv * sums[kk]));
    out.blocks.push_back(post_cov);
  }
  return out;
}

/// Index of the component that closes the restriction: the last one, unless
/// its weight is numerically zero, in which case the heaviest component.
inline int closing_component(const Vector& weights) {
  const auto K = weights.size();
  if (weights(K - 1) >= 1e-12) return static_cast<int>(K - 1);
  Eigen::Index best = 0;
  weights.maxCoeff(&best);
  return static_cast<int>(best);
}

/// Draws the component means from the stacked conditional further conditioned
/// on sum_k pi_k mu_k = 0. The K-1 free blocks follow their Gaussian
/// conditional (cov(mu_k, mu_R) = pi_k Sigma_k^0, cov(mu_R) = sum pi_k^2 Sigma_k^0),
/// drawn by correcting an unconstrained draw: z_k - pi_k Sigma_k^0 cov(mu_R)^{-1} z_R.
/// This has the same law as factoring the (K-1)p conditional covariance but
/// stays stable when the closing weight is tiny. The closing block is then
/// solved from the restriction.
inline std::vector<Vector> sample_constrained_means(const StackedConditional& cond, const Vector& weights,
                                                    RngStream& rng, int closing = -1) {
  const int K = cond.components();
  const int p = cond.dim();
  if (weights.size() != K) throw Error(Errc::dimension_mismatch, "weights and conditional blocks differ");
  if (closing < 0) closing = K - 1;
  if (K == 1) return {Vector::Zero(p)};
  if (!(weights(closing) >= 1e-12))
    throw Error(Errc::degenerate_weight, "closing component has weight " + std::to_string(weights(closing)));

  std::vector<Vector> draws(static_cast<std::size_t>(K));
  Vector z_r = Vector::Zero(p);
  Matrix cov_rr = Matrix::Zero(p, p);
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    draws[kk] = sample_mvn(cond.means[kk], chol_factor(cond.blocks[kk]), rng);
    z_r += weights(k) * draws[kk];
    cov_rr += weights(k) * weights(k) * cond.blocks[kk];
  }
  const Matrix lower = chol_factor(symmetrize(cov_rr));
  Vector solved = lower.triangularView<Eigen::Lower>().solve(z_r);
  solved = lower.transpose().triangularView<Eigen::Upper>().solve(solved);

  std::vector<Vector> means(static_cast<std::size_t>(K));
  Vector acc = Vector::Zero(p);
  for (int k = 0; k < K; ++k) {
    if (k == closing) continue;
    const auto kk = static_cast<std::size_t>(k);
    means[kk] = draws[kk] - weights(k) * (cond.blocks[kk] * solved);
    acc += weights(k) * means[kk];
  }
  means[static_cast<std::size_t>(closing)] = -acc / weights(closing);
  return means;
}

/// Error-density mixture carrying the mean-zero restriction.
struct RestrictedMixture {
  MixtureState inner;

  Vector constraint_residual() const {
    Vector r = Vector::Zero(inner.dim());
    for (int k = 0; k < inner.components(); ++k) r += inner.weights(k) * inner.means[static_cast<std::size_t>(k)];
    return r;
  }
};

/// Weights, labels, restricted means, then covariance parameters.
inline void sweep_restricted_mixture(const PointSet& residuals, Labels& labels, RestrictedMixture& mix,
                                     const HyperParams& hyper, RngStream& rng) {
  MixtureState& s = mix.inner;
  const int K = s.components();
  s.weights = update_weights(labels, hyper.alpha, K, rng);
  labels = update_labels(residuals, s, rng);
  const auto cond = unconstrained_mean_conditional(residuals, labels, s.covariances, hyper);
  s.means = sample_constrained_means(cond, s.weights, rng, closing_component(s.weights));
  if (s.model == CovarianceModel::miw) {
    s.covariances = update_covs_miw(residuals, labels, s.means, hyper, rng);
  } else {
    s.factors = update_factor_block(residuals, labels, s.means, std::move(*s.factors), hyper, rng);
    s.materialize();
  }
}

/// Diagonal scale S(X) = diag(s_1(X_1), ..., s_p(X_p)); empty means identity.
struct ScaleField {
  std::vector<VarianceFunction> functions;

  bool identity() const { return functions.empty(); }

  double scale(int coord, double x) const {
    if (identity()) return 1.0;
    return functions[static_cast<std::size_t>(coord)].scale_at(x);
  }

  Vector scales(const Vector& x) const {
    Vector s(x.size());
    for (Eigen::Index l = 0; l < x.size(); ++l) s(l) = scale(static_cast<int>(l), x(l));
    return s;
  }
};

/// eps_ij = S(X_i)^{-1} (W_ij - X_i); the identity field gives raw residuals.
inline PointSet scaled_residuals(const ReplicateDataset& data, const PointSet& x, const ScaleField& field) {
  if (x.cols() != data.subjects() || x.rows() != data.dim())
    throw Error(Errc::dimension_mismatch, "latent values do not match the dataset");
  PointSet eps(data.dim(), data.total());
  for (int i = 0; i < data.subjects(); ++i) {
    const Vector s = field.scales(x.col(i));
    if (s.minCoeff() < 1e-8) throw Error(Errc::scale_underflow, "scale below 1e-8 at subject " + std::to_string(i));
    for (int r = data.begin(i); r < data.end(i); ++r)
      eps.col(r) = (data.values().col(r) - x.col(i)).cwiseQuotient(s);
  }
  return eps;
}

}  // namespace deconv
