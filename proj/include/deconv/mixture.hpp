#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "deconv/stats_core.hpp"

namespace deconv {

/// Point sets are stored one point per column (p x n).
using PointSet = Eigen::MatrixXd;
using Labels = std::vector<int>;

enum class CovarianceModel { miw, mlfa, mlfad };

inline const char* to_string(CovarianceModel m) {
  switch (m) {
    case CovarianceModel::miw: return "miw";
    case CovarianceModel::mlfa: return "mlfa";
    case CovarianceModel::mlfad: return "mlfad";
  }
  return "?";
}

/// Truncation level max{2, floor((p+1)/2)}.
inline int default_factor_count(int p) { return std::max(2, (p + 1) / 2); }

struct HyperParams {
  double alpha = 1.0;
  Vector mu0;
  Matrix Sigma0;
  double nu0 = 0.0;
  Matrix Psi0;
  double a1 = 1.0;
  double ah = 2.0;
  double nu_shrink = 1.0;
  double a_sigma = 1.1;
  double b_sigma = 1.0;
  double a_xi = 0.01;
  double b_xi = 0.01;

  int dim() const { return static_cast<int>(mu0.size()); }

  void validate() const {
    const int p = dim();
    if (p < 1) throw Error(Errc::invalid_config, "hyper-parameters have no dimension");
    if (!(alpha > 0.0)) throw Error(Errc::invalid_config, "alpha must be positive");
    if (!(nu0 > p + 1)) throw Error(Errc::invalid_config, "nu0 must exceed p+1");
    if (Sigma0.rows() != p || Psi0.rows() != p) throw Error(Errc::dimension_mismatch, "prior matrix size");
    for (double v : {a1, ah, nu_shrink, a_sigma, b_sigma, a_xi, b_xi})
      if (!(v > 0.0)) throw Error(Errc::invalid_config, "shape/rate hyper-parameters must be positive");
  }

  /// Empirical-Bayes recipe: mu0 = mean of the starting values (or 0 for
  /// scaled errors), Psi0 = cov of the starting values, Sigma0 = 2 Psi0, nu0 = p+2.
  static HyperParams empirical(const PointSet& start, bool zero_mean, double alpha = 1.0) {
    const int p = static_cast<int>(start.rows());
    const auto n = start.cols();
    HyperParams h;
    h.alpha = alpha;
    const Vector mean = n > 0 ? Vector(start.rowwise().mean()) : Vector::Zero(p);
    h.mu0 = zero_mean ? Vector::Zero(p) : mean;
    Matrix cov = Matrix::Zero(p, p);
    if (n > 1) {
      const Matrix centred = start.colwise() - mean;
      cov = centred * centred.transpose() / static_cast<double>(n - 1);
    }
    const double floor = 1e-6 * std::max(1.0, cov.diagonal().mean());
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success || cov.diagonal().minCoeff() < floor)
      cov.diagonal().array() = cov.diagonal().array().max(floor);
    h.Psi0 = cov;
    h.Sigma0 = 2.0 * cov;
    h.nu0 = p + 2.0;
    return h;
  }
};

/// Factor-analytic covariance parameters for K components:
/// Sigma_k = Lambda_k Lambda_k^T + Omega (MLFA) or + sigma_k^2 I (MLFAD).
struct FactorBlock {
  std::vector<Matrix> loadings;      // Lambda_k, p x q
  std::vector<Matrix> local_shrink;  // phi_k, p x q
  std::vector<Vector> global_incr;   // delta_k, length q
  Matrix factors;                    // eta_i, q x n (one column per point)
  Vector idio;                       // length p (shared) or K (per component)
  bool per_component = false;

  int components() const { return static_cast<int>(loadings.size()); }
  int dim() const { return loadings.empty() ? 0 : static_cast<int>(loadings.front().rows()); }
  int truncation() const { return loadings.empty() ? 0 : static_cast<int>(loadings.front().cols()); }

  /// tau_{k,h} = prod_{l<=h} delta_{k,l}
  Vector tau(int k) const {
    const Vector& d = global_incr[static_cast<std::size_t>(k)];
    Vector t(d.size());
    double acc = 1.0;
    for (Eigen::Index h = 0; h < d.size(); ++h) t(h) = (acc *= d(h));
    return t;
  }

  Vector omega(int k) const {
    if (per_component) return Vector::Constant(dim(), idio(k));
    return idio;
  }

  Matrix covariance(int k) const {
    const Matrix& lam = loadings[static_cast<std::size_t>(k)];
    Matrix cov = lam * lam.transpose();
    cov.diagonal() += omega(k);
    return cov;
  }

  static FactorBlock zeros(int K, int p, int q, Eigen::Index n, bool per_component, const Vector& idio_init) {
    FactorBlock b;
    b.loadings.assign(static_cast<std::size_t>(K), Matrix::Zero(p, q));
    b.local_shrink.assign(static_cast<std::size_t>(K), Matrix::Ones(p, q));
    b.global_incr.assign(static_cast<std::size_t>(K), Vector::Ones(q));
    b.factors = Matrix::Zero(q, n);
    b.per_component = per_component;
    if (per_component) b.idio = Vector::Constant(K, idio_init.mean());
    else b.idio = idio_init;
    return b;
  }
};

struct MixtureState {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;  // always materialised
  CovarianceModel model = CovarianceModel::miw;
  std::optional<FactorBlock> factors;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  void materialize() {
    if (!factors) return;
    covariances.resize(static_cast<std::size_t>(factors->components()));
    for (int k = 0; k < factors->components(); ++k)
      covariances[static_cast<std::size_t>(k)] = factors->covariance(k);
  }
};

inline int nonempty_count(const Vector& weights, double threshold = 0.05) {
  return static_cast<int>((weights.array() > threshold).count());
}

inline std::vector<std::vector<int>> group_members(const Labels& labels, int K) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(K));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= K)
      throw Error(Errc::label_out_of_range, "label " + std::to_string(k) + " not in [0," + std::to_string(K) + ")");
    members[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
  }
  return members;
}

inline std::vector<int> label_counts(const Labels& labels, int K) {
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (int k : labels) {
    if (k < 0 || k >= K)
      throw Error(Errc::label_out_of_range, "label " + std::to_string(k) + " not in [0," + std::to_string(K) + ")");
    ++counts[static_cast<std::size_t>(k)];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Full conditionals

/// pi | labels ~ Dir(alpha/K + n_1, ..., alpha/K + n_K).
inline Vector update_weights(const Labels& labels, double alpha, int K, RngStream& rng) {
  const auto counts = label_counts(labels, K);
  Vector conc(K);
  for (int k = 0; k < K; ++k) conc(k) = alpha / K + counts[static_cast<std::size_t>(k)];
  return sample_dirichlet(conc, rng);
}

/// Independent categorical draws with p_ik proportional to pi_k N(x_i | mu_k, Sigma_k),
/// evaluated in log space with max subtraction.
inline Labels update_labels(const PointSet& points, const MixtureState& state, RngStream& rng) {
  const int K = state.components();
  Labels labels(static_cast<std::size_t>(points.cols()), 0);
  if (K == 1) return labels;
  std::vector<GaussianKernel> kernels;
  std::vector<double> log_pi(static_cast<std::size_t>(K));
  kernels.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    kernels.emplace_back(state.means[static_cast<std::size_t>(k)], state.covariances[static_cast<std::size_t>(k)]);
    log_pi[static_cast<std::size_t>(k)] = std::log(state.weights(k));
  }
  std::vector<double> lw(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double* x = points.col(i).data();
    for (int k = 0; k < K; ++k)
      lw[static_cast<std::size_t>(k)] = log_pi[static_cast<std::size_t>(k)] + kernels[static_cast<std::size_t>(k)].log_density(x);
    labels[static_cast<std::size_t>(i)] = sample_log_categorical(lw.data(), K, rng);
  }
  return labels;
}

/// mu_k ~ N(mu_k^(n), Sigma_k^(n)), Sigma_k^(n) = (Sigma0^{-1} + n_k Sigma_k^{-1})^{-1}.
inline std::vector<Vector> update_means_miw(const PointSet& points, const Labels& labels,
                                            const std::vector<Matrix>& covariances, const HyperParams& hyper,
                                            RngStream& rng) {
  const int K = static_cast<int>(covariances.size());
  const int p = static_cast<int>(points.rows());
  const Matrix prior_prec = spd_inverse(hyper.Sigma0);
  const Vector prior_lin = prior_prec * hyper.mu0;
  std::vector<Vector> sums(static_cast<std::size_t>(K), Vector::Zero(p));
  const auto counts = label_counts(labels, K);
  for (Eigen::Index i = 0; i < points.cols(); ++i) sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += points.col(i);
  std::vector<Vector> means(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (counts[kk] == 0) {
      means[kk] = sample_mvn_canonical(prior_prec, prior_lin, rng);
      continue;
    }
    const Matrix cov_inv = spd_inverse(covariances[kk]);
    const Matrix prec = prior_prec + counts[kk] * cov_inv;
    const Vector lin = cov_inv * sums[kk] + prior_lin;
    means[kk] = sample_mvn_canonical(symmetrize(prec), lin, rng);
  }
  return means;
}

/// Sigma_k ~ IW(n_k + nu0, sum (x_i - mu_k)(x_i - mu_k)^T + Psi0).
inline std::vector<Matrix> update_covs_miw(const PointSet& points, const Labels& labels,
                                           const std::vector<Vector>& means, const HyperParams& hyper,
                                           RngStream& rng) {
  const int K = static_cast<int>(means.size());
  const int p = static_cast<int>(points.rows());
  std::vector<Matrix> scatter(static_cast<std::size_t>(K), Matrix::Zero(p, p));
  const auto counts = label_counts(labels, K);
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    const Vector d = points.col(i) - means[k];
    scatter[k].noalias() += d * d.transpose();
  }
  std::vector<Matrix> covs(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    covs[kk] = sample_inverse_wishart(counts[kk] + hyper.nu0, symmetrize(scatter[kk] + hyper.Psi0), rng);
  }
  return covs;
}

namespace detail {

inline void check_factor_shapes(const PointSet& points, const std::vector<Vector>& means, const FactorBlock& block) {
  if (static_cast<int>(points.rows()) != block.dim() || static_cast<int>(means.size()) != block.components() ||
      block.factors.cols() != points.cols() || block.factors.rows() != block.truncation())
    throw Error(Errc::dimension_mismatch, "factor block shape disagrees with the data");
}

}  // namespace detail

/// eta_i | C_i = k ~ N((I + L^T W L)^{-1} L^T W (x_i - mu_k), (I + L^T W L)^{-1}), W = Omega_k^{-1}.
inline void update_factors(const PointSet& points, const std::vector<std::vector<int>>& members,
                           const std::vector<Vector>& means, FactorBlock& block, RngStream& rng) {
  const int q = block.truncation();
  Vector z(q);
  for (int k = 0; k < block.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (members[kk].empty()) continue;
    const Matrix& lam = block.loadings[kk];
    const Vector w = block.omega(k).cwiseInverse();
    const Matrix lt_w = lam.transpose() * w.asDiagonal();
    const Matrix lower = chol_factor(symmetrize(Matrix::Identity(q, q) + lt_w * lam));
    const auto L = lower.triangularView<Eigen::Lower>();
    for (int i : members[kk]) {
      Vector mean = L.solve(lt_w * (points.col(i) - means[kk]));
      mean = L.transpose().solve(mean);
      for (int h = 0; h < q; ++h) z(h) = rng.normal();
      block.factors.col(i) = mean + L.transpose().solve(z);
    }
  }
}

/// Loading rows: lambda_{k,j} ~ N(P^{-1} s_j^{-2} E^T r_j, P^{-1}), P = diag(phi_{k,j.} tau_k) + s_j^{-2} E^T E.
inline void update_loadings(const PointSet& points, const std::vector<std::vector<int>>& members,
                            const std::vector<Vector>& means, FactorBlock& block, RngStream& rng) {
  const int p = block.dim();
  const int q = block.truncation();
  for (int k = 0; k < block.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const auto& idx = members[kk];
    Matrix eta(static_cast<Eigen::Index>(idx.size()), q);
    for (std::size_t r = 0; r < idx.size(); ++r) eta.row(static_cast<Eigen::Index>(r)) = block.factors.col(idx[r]).transpose();
    const Matrix ete = eta.transpose() * eta;
    const Vector tau = block.tau(k);
    const Vector omega = block.omega(k);
    Vector resid(static_cast<Eigen::Index>(idx.size()));
    for (int j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < idx.size(); ++r) resid(static_cast<Eigen::Index>(r)) = points(j, idx[r]) - means[kk](j);
      const double inv_s = 1.0 / omega(j);
      Matrix prec = inv_s * ete;
      for (int h = 0; h < q; ++h) prec(h, h) += block.local_shrink[kk](j, h) * tau(h);
      const Vector lin = inv_s * (eta.transpose() * resid);
      block.loadings[kk].row(j) = sample_mvn_canonical(symmetrize(prec), lin, rng).transpose();
    }
  }
}

/// sigma_j^2 ~ IG(a_sigma + n/2, b_sigma + ss_j/2) shared across components,
/// or sigma_k^2 ~ IG(a_sigma + n_k p/2, b_sigma + ss_k/2) per component.
inline void update_idiosyncratic(const PointSet& points, const Labels& labels,
                                 const std::vector<std::vector<int>>& members, const std::vector<Vector>& means,
                                 FactorBlock& block, const HyperParams& hyper, RngStream& rng) {
  const int p = block.dim();
  if (!block.per_component) {
    Vector ss = Vector::Zero(p);
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      ss += (points.col(i) - means[k] - block.loadings[k] * block.factors.col(i)).cwiseAbs2();
    }
    for (int j = 0; j < p; ++j)
      block.idio(j) = rng.inverse_gamma(hyper.a_sigma + 0.5 * static_cast<double>(points.cols()), hyper.b_sigma + 0.5 * ss(j));
    return;
  }
  for (int k = 0; k < block.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    double ss = 0.0;
    for (int i : members[kk])
      ss += (points.col(i) - means[kk] - block.loadings[kk] * block.factors.col(i)).squaredNorm();
    const double shape = hyper.a_sigma + 0.5 * static_cast<double>(members[kk].size()) * p;
    block.idio(k) = rng.inverse_gamma(shape, hyper.b_sigma + 0.5 * ss);
  }
}

/// phi_{k,jh} ~ Ga((nu+1)/2, (nu + tau_h lambda_jh^2)/2).
inline void update_local_shrink(FactorBlock& block, const HyperParams& hyper, RngStream& rng) {
  const double nu = hyper.nu_shrink;
  for (int k = 0; k < block.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector tau = block.tau(k);
    for (int j = 0; j < block.dim(); ++j)
      for (int h = 0; h < block.truncation(); ++h) {
        const double lam = block.loadings[kk](j, h);
        block.local_shrink[kk](j, h) = rng.gamma(0.5 * (nu + 1.0), 0.5 * (nu + tau(h) * lam * lam));
      }
  }
}

struct GammaParams {
  double shape;
  double rate;
};

/// Conditional of delta_{k,h} (0-based h): shape a + p(q-h)/2 and rate
/// 1 + 1/2 sum_{l>=h} tau_l^(h) sum_j phi_jl lambda_jl^2, where tau^(h)
/// omits delta_h. Only columns l >= h involve delta_h, so only they enter.
inline GammaParams global_increment_conditional(const FactorBlock& block, int k, int h, const HyperParams& hyper) {
  const auto kk = static_cast<std::size_t>(k);
  const int q = block.truncation();
  const Vector& delta = block.global_incr[kk];
  double rate = 1.0;
  double tau_without = 1.0;
  for (int l = 0; l < q; ++l) {
    if (l != h) tau_without *= delta(l);
    if (l >= h) {
      const double col_ss =
          (block.local_shrink[kk].col(l).array() * block.loadings[kk].col(l).array().square()).sum();
      rate += 0.5 * tau_without * col_ss;
    }
  }
  const double shape = (h == 0 ? hyper.a1 : hyper.ah) + 0.5 * block.dim() * (q - h);
  return {shape, rate};
}

inline void update_global_incr(FactorBlock& block, const HyperParams& hyper, RngStream& rng) {
  for (int k = 0; k < block.components(); ++k)
    for (int h = 0; h < block.truncation(); ++h) {
      const auto g = global_increment_conditional(block, k, h, hyper);
      block.global_incr[static_cast<std::size_t>(k)](h) = rng.gamma(g.shape, g.rate);
    }
}

/// One sweep over the factor parameters: factors eta, loading rows,
/// idiosyncratic variances, local shrinkage phi, global increments delta.
/// eta goes first because labels and means are drawn with eta integrated out.
inline FactorBlock update_factor_block(const PointSet& points, const Labels& labels, const std::vector<Vector>& means,
                                       FactorBlock block, const HyperParams& hyper, RngStream& rng) {
  detail::check_factor_shapes(points, means, block);
  const auto members = group_members(labels, block.components());
  update_factors(points, members, means, block, rng);
  update_loadings(points, members, means, block, rng);
  update_idiosyncratic(points, labels, members, means, block, hyper, rng);
  update_local_shrink(block, hyper, rng);
  update_global_incr(block, hyper, rng);
  return block;
}

// ---------------------------------------------------------------------------
// Density evaluation

/// Sum_k pi_k N(x | mu_k, Sigma_k); zero-weight components are skipped.
inline double mixture_density(const MixtureState& state, const Vector& x) {
  double total = 0.0;
  for (int k = 0; k < state.components(); ++k) {
    if (!(state.weights(k) > 0.0)) continue;
    total += state.weights(k) * std::exp(log_mvn_density(x, state.means[static_cast<std::size_t>(k)],
                                                         state.covariances[static_cast<std::size_t>(k)]));
  }
  return total;
}

/// Marginal mixture on a subset of coordinates (Gaussian mixtures marginalise exactly).
inline MixtureState marginal_state(const MixtureState& state, const std::vector<int>& coords) {
  MixtureState out;
  out.weights = state.weights;
  out.model = CovarianceModel::miw;
  const auto d = static_cast<Eigen::Index>(coords.size());
  for (int k = 0; k < state.components(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    Vector m(d);
    Matrix c(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      m(a) = state.means[kk](coords[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < d; ++b)
        c(a, b) = state.covariances[kk](coords[static_cast<std::size_t>(a)], coords[static_cast<std::size_t>(b)]);
    }
    out.means.push_back(std::move(m));
    out.covariances.push_back(std::move(c));
  }
  return out;
}

/// Repeated-evaluation form of mixture_density with factors precomputed.
class MixtureEvaluator {
 public:
  MixtureEvaluator() = default;

  explicit MixtureEvaluator(const MixtureState& state) {
    for (int k = 0; k < state.components(); ++k) {
      if (!(state.weights(k) > 0.0)) continue;
      kernels_.emplace_back(state.means[static_cast<std::size_t>(k)], state.covariances[static_cast<std::size_t>(k)]);
      log_weights_.push_back(std::log(state.weights(k)));
    }
  }

  double density(const double* x) const {
    double total = 0.0;
    for (std::size_t k = 0; k < kernels_.size(); ++k) total += std::exp(log_weights_[k] + kernels_[k].log_density(x));
    return total;
  }
  double density(const Vector& x) const { return density(x.data()); }

 private:
  std::vector<GaussianKernel> kernels_;
  std::vector<double> log_weights_;
};

// ---------------------------------------------------------------------------
// Block sweep

/// Weights, labels, means and covariance parameters for an unrestricted mixture.
inline void sweep_mixture(const PointSet& points, Labels& labels, MixtureState& state, const HyperParams& hyper,
                          RngStream& rng) {
  const int K = state.components();
  state.weights = update_weights(labels, hyper.alpha, K, rng);
  labels = update_labels(points, state, rng);
  state.means = update_means_miw(points, labels, state.covariances, hyper, rng);
  if (state.model == CovarianceModel::miw) {
    state.covariances = update_covs_miw(points, labels, state.means, hyper, rng);
  } else {
    state.factors = update_factor_block(points, labels, state.means, std::move(*state.factors), hyper, rng);
    state.materialize();
  }
}

}  // namespace deconv
