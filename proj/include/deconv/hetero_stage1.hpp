#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "deconv/clustering.hpp"
#include "deconv/dataset.hpp"
#include "deconv/mh.hpp"
#include "deconv/mixture.hpp"
#include "deconv/parallel.hpp"
#include "deconv/splines.hpp"

namespace deconv {

/// Four free parameters of one mean-zero two-point normal mixture.
struct PelenisComponent {
  double p_tilde = 0.5;
  double mu_tilde = 0.0;
  double sig1_sq = 1.0;
  double sig2_sq = 1.0;
};

struct TwoPointMixture {
  double p1, mu1, var1;
  double p2, mu2, var2;

  double mean() const { return p1 * mu1 + p2 * mu2; }
  double second_moment() const { return p1 * (var1 + mu1 * mu1) + p2 * (var2 + mu2 * mu2); }
};

inline TwoPointMixture pelenis_expand(const PelenisComponent& c) {
  const double p = c.p_tilde, q = 1.0 - c.p_tilde;
  const double norm = std::sqrt(p * p + q * q);
  return {p, q / norm * c.mu_tilde, c.sig1_sq, q, -p / norm * c.mu_tilde, c.sig2_sq};
}

/// log sum_r p_r N(z | mu_r, var_r), with per-term constants folded in once.
class TwoPointKernel {
 public:
  TwoPointKernel() = default;
  explicit TwoPointKernel(const TwoPointMixture& t)
      : c1_(std::log(t.p1) - 0.5 * std::log(t.var1) - 0.5 * kLog2Pi),
        c2_(std::log(t.p2) - 0.5 * std::log(t.var2) - 0.5 * kLog2Pi),
        mu1_(t.mu1), mu2_(t.mu2), h1_(0.5 / t.var1), h2_(0.5 / t.var2) {}

  double log_density(double z) const {
    const double a = c1_ - h1_ * (z - mu1_) * (z - mu1_);
    const double b = c2_ - h2_ * (z - mu2_) * (z - mu2_);
    const double top = std::max(a, b);
    if (top == -std::numeric_limits<double>::infinity()) return top;
    return top + std::log1p(std::exp(std::min(a, b) - top));
  }

 private:
  double c1_ = 0.0, c2_ = 0.0, mu1_ = 0.0, mu2_ = 0.0, h1_ = 0.5, h2_ = 0.5;
};

/// log f_{U|X}(u | s) for U = s * eps, eps from the two-point mixture.
inline double log_conditional_u(double u, double s, const TwoPointKernel& k) { return k.log_density(u / s) - std::log(s); }

inline double conditional_likelihood_u(double u, double x, const VarianceFunction& vf, const PelenisComponent& comp) {
  return std::exp(log_conditional_u(u, vf.scale_at(x), TwoPointKernel(pelenis_expand(comp))));
}

struct Stage1Settings {
  int iterations = 1000;
  int burn_in = 500;
  int error_components = 5;
  int x_components = 5;
  int spline_degree = 2;
  int spline_intervals = 5;
  double alpha = 1.0;
  double a_xi = 0.01;
  double b_xi = 0.01;
  double mu_tilde_var = 1.0;
  double sig_shape = 1.1;
  double sig_scale = 1.0;
  int adapt_batch = 50;

  void validate() const {
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
      throw Error(Errc::invalid_config, "stage-1 schedule needs 0 <= burn_in < iterations");
    if (error_components < 1 || x_components < 1) throw Error(Errc::invalid_config, "stage-1 component counts must be positive");
    if (spline_degree < 0 || spline_intervals < 1 || spline_degree + spline_intervals < 3)
      throw Error(Errc::invalid_config, "stage-1 spline needs J = q + L >= 3");
    if (!(alpha > 0.0) || !(a_xi > 0.0) || !(b_xi > 0.0) || !(mu_tilde_var > 0.0) || !(sig_shape > 0.0) || !(sig_scale > 0.0))
      throw Error(Errc::invalid_config, "stage-1 prior parameters must be positive");
  }
};

/// State of one univariate heteroscedastic submodel W_ij = X_i + s(X_i) eps_ij.
struct UnivariateChain {
  Vector x;
  VarianceFunction vf;
  Vector err_weights;
  std::vector<PelenisComponent> comps;
  Labels err_labels;  // one per observation
  MixtureState x_prior;
  Labels x_labels;
  HyperParams x_hyper;

  std::vector<AdaptiveScale> xi_steps;
  std::vector<std::array<AdaptiveScale, 4>> comp_steps;
  AdaptiveScale x_step;
  Vector x_base;  // per-subject proposal sd before the adaptive multiplier
  long iter = 0;

  /// Second moment of the current error mixture.
  double error_variance() const {
    double v = 0.0;
    for (std::size_t k = 0; k < comps.size(); ++k) v += err_weights(static_cast<Eigen::Index>(k)) * pelenis_expand(comps[k]).second_moment();
    return v;
  }
};

namespace detail {

inline double penalty_form(const Vector& xi) {
  double s = 0.0;
  for (Eigen::Index j = 0; j + 2 < xi.size(); ++j) {
    const double d = xi(j + 2) - 2.0 * xi(j + 1) + xi(j);
    s += d * d;
  }
  return s;
}

/// Per-subject cache: basis support, variance and log-likelihood contribution.
struct SubjectCache {
  std::vector<int> first;
  std::vector<double> basis;  // (q+1) values per subject
  Vector var;
  Vector loglik;
  int width = 1;

  void fill_basis(const KnotVector& kv, int i, double x) {
    const int span = knot_span(kv, x);
    first[static_cast<std::size_t>(i)] = span - kv.degree();
    nonzero_basis(kv, span, x, basis.data() + static_cast<std::size_t>(i) * width);
  }

  double variance(const Vector& exp_xi, int i) const {
    double v = 0.0;
    const double* b = basis.data() + static_cast<std::size_t>(i) * width;
    for (int r = 0; r < width; ++r) v += b[r] * exp_xi(first[static_cast<std::size_t>(i)] + r);
    return v;
  }
};

inline double subject_loglik(const ReplicateDataset& data, int i, double x, double s, const Labels& labels,
                             const std::vector<TwoPointKernel>& kernels) {
  double ll = 0.0;
  const double log_s = std::log(s);
  for (int r = data.begin(i); r < data.end(i); ++r)
    ll += kernels[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])].log_density((data.values()(0, r) - x) / s) - log_s;
  return ll;
}

inline double log_theta_prior(const PelenisComponent& c, const Stage1Settings& st) {
  if (!(c.p_tilde > 0.0 && c.p_tilde < 1.0) || !(c.sig1_sq > 0.0) || !(c.sig2_sq > 0.0))
    return -std::numeric_limits<double>::infinity();
  auto log_ig = [&](double v) { return -(st.sig_shape + 1.0) * std::log(v) - st.sig_scale / v; };
  return -0.5 * c.mu_tilde * c.mu_tilde / st.mu_tilde_var + log_ig(c.sig1_sq) + log_ig(c.sig2_sq);
}

inline PelenisComponent draw_theta_prior(const Stage1Settings& st, RngStream& rng) {
  PelenisComponent c;
  c.p_tilde = rng.uniform();
  c.mu_tilde = std::sqrt(st.mu_tilde_var) * rng.normal();
  c.sig1_sq = rng.inverse_gamma(st.sig_shape, st.sig_scale);
  c.sig2_sq = rng.inverse_gamma(st.sig_shape, st.sig_scale);
  return c;
}

}  // namespace detail

/// Starting state: X at subject means, xi from basis-weighted local means of
/// within-subject variances, unit-variance error components, and the X prior
/// seeded from a k-means clustering of the subject means.
inline UnivariateChain init_univariate_chain(const ReplicateDataset& data, const Stage1Settings& st, RngStream& rng) {
  if (data.dim() != 1) throw Error(Errc::dimension_mismatch, "stage-1 chains take one coordinate");
  const int n = data.subjects();
  UnivariateChain c;
  const Matrix means = data.subject_means();
  c.x = means.row(0).transpose();
  const Interval range = inflated_range(c.x);
  c.vf.knots = KnotVector::equidistant(st.spline_degree, st.spline_intervals, range.lower, range.upper);
  const int J = c.vf.knots.basis_count();

  Vector num = Vector::Zero(J), den = Vector::Zero(J);
  double pooled = 0.0;
  int pooled_n = 0;
  for (int i = 0; i < n; ++i) {
    const int m = data.replicates(i);
    if (m < 2) continue;
    const auto w = data.subject(i);
    const double v = (w.array() - c.x(i)).square().sum() / (m - 1);
    num += bspline_basis(c.x(i), c.vf.knots) * v;
    den += bspline_basis(c.x(i), c.vf.knots);
    pooled += v;
    ++pooled_n;
  }
  pooled = pooled_n > 0 ? pooled / pooled_n : 0.0;
  const double var_floor = std::max(1e-6 * pooled, 1e-12 * std::pow(range.upper - range.lower, 2));
  c.vf.xi.resize(J);
  for (int j = 0; j < J; ++j) c.vf.xi(j) = std::log(std::max(den(j) > 1e-8 ? num(j) / den(j) : pooled, var_floor));
  c.vf.sigma_xi_sq = 1.0;

  const int K = st.error_components;
  c.err_weights = Vector::Constant(K, 1.0 / K);
  c.comps.assign(static_cast<std::size_t>(K), PelenisComponent{});
  c.err_labels.resize(static_cast<std::size_t>(data.total()));
  for (auto& l : c.err_labels) l = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(K)));

  const PointSet pts = c.x.transpose();
  c.x_hyper = HyperParams::empirical(pts, false, st.alpha);
  const Clustering cl = kmeans_bic(pts, rng, std::min(8, st.x_components));
  const int Kx = std::max(st.x_components, cl.k);
  c.x_prior.model = CovarianceModel::miw;
  c.x_prior.weights.resize(Kx);
  const double total_var = c.x_hyper.Psi0(0, 0);
  std::vector<double> ss(static_cast<std::size_t>(Kx), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto l = cl.labels[static_cast<std::size_t>(i)];
    ss[static_cast<std::size_t>(l)] += std::pow(c.x(i) - cl.centers(0, l), 2);
  }
  for (int k = 0; k < Kx; ++k) {
    const bool used = k < cl.k;
    const double nk = used ? cl.sizes[static_cast<std::size_t>(k)] : 0.0;
    c.x_prior.weights(k) = (nk + st.alpha / Kx) / (n + st.alpha);
    c.x_prior.means.push_back(Vector::Constant(1, used ? cl.centers(0, k) : c.x_hyper.mu0(0)));
    const double v = used && nk > 1 ? ss[static_cast<std::size_t>(k)] / nk : total_var;
    c.x_prior.covariances.push_back(Matrix::Constant(1, 1, std::max({v, 1e-6 * total_var, 1e-12})));
  }
  c.x_labels = cl.labels;

  c.xi_steps.assign(static_cast<std::size_t>(J), AdaptiveScale{0.3});
  std::array<AdaptiveScale, 4> cs{AdaptiveScale{0.5}, AdaptiveScale{0.3}, AdaptiveScale{0.3}, AdaptiveScale{0.3}};
  c.comp_steps.assign(static_cast<std::size_t>(K), cs);
  c.x_step.scale = 1.0;
  c.x_base.resize(n);
  for (int i = 0; i < n; ++i) c.x_base(i) = std::sqrt(c.vf.variance_at(c.x(i)) / data.replicates(i));
  return c;
}

inline std::vector<TwoPointKernel> component_kernels(const UnivariateChain& c) {
  std::vector<TwoPointKernel> out;
  out.reserve(c.comps.size());
  for (const auto& comp : c.comps) out.emplace_back(pelenis_expand(comp));
  return out;
}

/// Random-walk MH on each xi_j under the second-difference prior, then the
/// conjugate draw of sigma_xi^2. Only subjects whose basis support covers j
/// are re-evaluated.
inline void update_variance_function(UnivariateChain& c, const ReplicateDataset& data, const Stage1Settings& st,
                                     const std::vector<TwoPointKernel>& kernels, RngStream& rng) {
  const int n = data.subjects();
  const KnotVector& kv = c.vf.knots;
  const int J = kv.basis_count();
  const int q = kv.degree();

  detail::SubjectCache cache;
  cache.width = q + 1;
  cache.first.resize(static_cast<std::size_t>(n));
  cache.basis.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(cache.width));
  cache.var.resize(n);
  cache.loglik.resize(n);
  Vector exp_xi = c.vf.xi.array().exp();
  for (int i = 0; i < n; ++i) {
    cache.fill_basis(kv, i, c.x(i));
    cache.var(i) = cache.variance(exp_xi, i);
    cache.loglik(i) = detail::subject_loglik(data, i, c.x(i), std::sqrt(cache.var(i)), c.err_labels, kernels);
  }

  double pen = detail::penalty_form(c.vf.xi);
  Vector new_var(n), new_ll(n);
  std::vector<int> touched;
  touched.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < J; ++j) {
    AdaptiveScale& step = c.xi_steps[static_cast<std::size_t>(j)];
    if (!(step.scale > 0.0)) {
      step.record(true);
      continue;
    }
    const double old = c.vf.xi(j);
    const double prop = old + step.scale * rng.normal();
    c.vf.xi(j) = prop;
    const double new_pen = detail::penalty_form(c.vf.xi);
    const double diff = std::exp(prop) - exp_xi(j);
    double delta = -(new_pen - pen) / (2.0 * c.vf.sigma_xi_sq);
    touched.clear();
    for (int i = 0; i < n; ++i) {
      const int off = j - cache.first[static_cast<std::size_t>(i)];
      if (off < 0 || off > q) continue;
      const double b = cache.basis[static_cast<std::size_t>(i) * static_cast<std::size_t>(cache.width) + static_cast<std::size_t>(off)];
      if (b == 0.0) continue;
      new_var(i) = cache.var(i) + b * diff;
      new_ll(i) = new_var(i) > 0.0
                      ? detail::subject_loglik(data, i, c.x(i), std::sqrt(new_var(i)), c.err_labels, kernels)
                      : -std::numeric_limits<double>::infinity();
      delta += new_ll(i) - cache.loglik(i);
      touched.push_back(i);
    }
    const bool ok = mh_accept(delta, rng);
    step.record(ok);
    if (ok) {
      exp_xi(j) = std::exp(prop);
      pen = new_pen;
      for (int i : touched) {
        cache.var(i) = new_var(i);
        cache.loglik(i) = new_ll(i);
      }
    } else {
      c.vf.xi(j) = old;
    }
  }
  c.vf.sigma_xi_sq = rng.inverse_gamma(st.a_xi + 0.5 * J, st.b_xi + 0.5 * pen);
}

/// Componentwise MH on each occupied (p~, mu~, sig1^2, sig2^2) against the
/// conditional likelihood of U given X; empty components are redrawn from the prior.
inline void update_error_components(UnivariateChain& c, const ReplicateDataset& data, const Stage1Settings& st,
                                    std::vector<TwoPointKernel>& kernels, RngStream& rng) {
  const int n = data.subjects();
  const int K = static_cast<int>(c.comps.size());
  Vector scale(n);
  for (int i = 0; i < n; ++i) scale(i) = c.vf.scale_at(c.x(i));
  std::vector<std::vector<int>> members(static_cast<std::size_t>(K));
  for (int r = 0; r < data.total(); ++r) members[static_cast<std::size_t>(c.err_labels[static_cast<std::size_t>(r)])].push_back(r);
  const auto& subj = data.subject_of();
  auto comp_loglik = [&](const std::vector<int>& obs, const TwoPointKernel& kern) {
    double ll = 0.0;
    for (int r : obs) {
      const int i = subj[static_cast<std::size_t>(r)];
      ll += kern.log_density((data.values()(0, r) - c.x(i)) / scale(i));
    }
    return ll;
  };
  for (int k = 0; k < K; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (members[kk].empty()) {
      c.comps[kk] = detail::draw_theta_prior(st, rng);
      kernels[kk] = TwoPointKernel(pelenis_expand(c.comps[kk]));
      continue;
    }
    double cur_ll = comp_loglik(members[kk], kernels[kk]);
    for (int a = 0; a < 4; ++a) {
      AdaptiveScale& step = c.comp_steps[kk][static_cast<std::size_t>(a)];
      if (!(step.scale > 0.0)) {
        step.record(true);
        continue;
      }
      PelenisComponent prop = c.comps[kk];
      const double z = step.scale * rng.normal();
      double log_jac = 0.0;
      switch (a) {
        case 0: {
          const double cur = prop.p_tilde;
          prop.p_tilde = 1.0 / (1.0 + std::exp(-(std::log(cur / (1.0 - cur)) + z)));
          log_jac = std::log(prop.p_tilde * (1.0 - prop.p_tilde)) - std::log(cur * (1.0 - cur));
          break;
        }
        case 1:
          prop.mu_tilde += z;
          break;
        case 2:
          prop.sig1_sq *= std::exp(z);
          log_jac = z;
          break;
        default:
          prop.sig2_sq *= std::exp(z);
          log_jac = z;
          break;
      }
      const double prior_delta = detail::log_theta_prior(prop, st) - detail::log_theta_prior(c.comps[kk], st);
      if (!std::isfinite(prior_delta)) {
        step.record(false);
        continue;
      }
      const TwoPointKernel pk(pelenis_expand(prop));
      const double prop_ll = comp_loglik(members[kk], pk);
      const bool ok = mh_accept(prop_ll - cur_ll + prior_delta + log_jac, rng);
      step.record(ok);
      if (ok) {
        c.comps[kk] = prop;
        kernels[kk] = pk;
        cur_ll = prop_ll;
      }
    }
  }
}

/// Dirichlet draw of the outer error weights, then each observation's label.
inline void update_error_allocation(UnivariateChain& c, const ReplicateDataset& data, const Stage1Settings& st,
                                    const std::vector<TwoPointKernel>& kernels, RngStream& rng) {
  const int K = static_cast<int>(c.comps.size());
  c.err_weights = update_weights(c.err_labels, st.alpha, K, rng);
  const Vector log_pi = c.err_weights.array().log();
  std::vector<double> lw(static_cast<std::size_t>(K));
  const auto& subj = data.subject_of();
  int last = -1;
  double s = 1.0;
  for (int r = 0; r < data.total(); ++r) {
    const int i = subj[static_cast<std::size_t>(r)];
    if (i != last) {
      s = c.vf.scale_at(c.x(i));
      last = i;
    }
    const double z = (data.values()(0, r) - c.x(i)) / s;
    for (int k = 0; k < K; ++k) lw[static_cast<std::size_t>(k)] = log_pi(k) + kernels[static_cast<std::size_t>(k)].log_density(z);
    c.err_labels[static_cast<std::size_t>(r)] = sample_log_categorical(lw.data(), K, rng);
  }
}

/// MH on each X_i with a truncated-normal proposal on the knot range, targeting
/// the allocated X-mixture component times the replicate likelihood.
inline void update_latent_x(UnivariateChain& c, const ReplicateDataset& data, const std::vector<TwoPointKernel>& kernels,
                            RngStream& rng) {
  const double lo = c.vf.knots.lower(), hi = c.vf.knots.upper();
  for (int i = 0; i < data.subjects(); ++i) {
    const double sd = c.x_step.scale * c.x_base(i);
    if (!(sd > 0.0)) {
      c.x_step.record(true);
      continue;
    }
    const double cur = c.x(i);
    const double prop = sample_truncated_normal(cur, sd, lo, hi, rng);
    const auto lab = static_cast<std::size_t>(c.x_labels[static_cast<std::size_t>(i)]);
    const double mk = c.x_prior.means[lab](0), vk = c.x_prior.covariances[lab](0, 0);
    const double log_ratio = detail::subject_loglik(data, i, prop, c.vf.scale_at(prop), c.err_labels, kernels) -
                             detail::subject_loglik(data, i, cur, c.vf.scale_at(cur), c.err_labels, kernels) +
                             normal_log_density(prop, mk, vk) - normal_log_density(cur, mk, vk) +
                             truncated_log_mass(cur, sd, lo, hi) - truncated_log_mass(prop, sd, lo, hi);
    const bool ok = mh_accept(log_ratio, rng);
    c.x_step.record(ok);
    if (ok) c.x(i) = prop;
  }
}

inline void adapt_steps(UnivariateChain& c) {
  for (auto& s : c.xi_steps) s.adapt();
  for (auto& arr : c.comp_steps)
    for (auto& s : arr) s.adapt();
  c.x_step.adapt();
}

inline void reset_step_counts(UnivariateChain& c) {
  for (auto& s : c.xi_steps) s.reset_counts();
  for (auto& arr : c.comp_steps)
    for (auto& s : arr) s.reset_counts();
  c.x_step.reset_counts();
}

/// One full sweep: variance function, error components, error allocation,
/// latent X, then the X-prior mixture. Proposal scales adapt in batches while
/// `adapt` is set.
inline void mh_sweep_univariate(UnivariateChain& c, const ReplicateDataset& data, const Stage1Settings& st,
                                RngStream& rng, bool adapt) {
  std::vector<TwoPointKernel> kernels = component_kernels(c);
  update_variance_function(c, data, st, kernels, rng);
  update_error_components(c, data, st, kernels, rng);
  update_error_allocation(c, data, st, kernels, rng);
  update_latent_x(c, data, kernels, rng);
  const PointSet pts = c.x.transpose();
  sweep_mixture(pts, c.x_labels, c.x_prior, c.x_hyper, rng);
  ++c.iter;
  if (adapt && st.adapt_batch > 0 && c.iter % st.adapt_batch == 0) adapt_steps(c);
}

struct Stage1Coordinate {
  VarianceFunction variance;  // posterior mean of the conditional variance of U given X
  Vector x_mean;
  double error_variance = 0.0;  // posterior mean second moment of the unnormalised eps
  double xi_acceptance = 0.0;
  double theta_acceptance = 0.0;
  double x_acceptance = 0.0;
};

struct Stage1Result {
  std::vector<Stage1Coordinate> coords;

  std::vector<VarianceFunction> functions() const {
    std::vector<VarianceFunction> out;
    for (const auto& c : coords) out.push_back(c.variance);
    return out;
  }

  PointSet x_means() const {
    PointSet x(static_cast<Eigen::Index>(coords.size()), coords.empty() ? 0 : coords.front().x_mean.size());
    for (std::size_t l = 0; l < coords.size(); ++l) x.row(static_cast<Eigen::Index>(l)) = coords[l].x_mean.transpose();
    return x;
  }
};

/// Runs one univariate chain. Only the product s^2(x) var(eps) is identified
/// by the likelihood, so the returned variance function carries that product:
/// its coefficients are the posterior mean of exp(xi) times the error mixture's
/// second moment.
inline Stage1Coordinate run_univariate(const ReplicateDataset& data, const Stage1Settings& st, RngStream& rng) {
  st.validate();
  UnivariateChain c = init_univariate_chain(data, st, rng);
  const int J = c.vf.knots.basis_count();
  Vector coef_sum = Vector::Zero(J);
  Vector x_sum = Vector::Zero(data.subjects());
  double ev_sum = 0.0;
  int kept = 0;
  for (int t = 0; t < st.iterations; ++t) {
    const bool burning = t < st.burn_in;
    mh_sweep_univariate(c, data, st, rng, burning);
    if (t + 1 == st.burn_in) reset_step_counts(c);
    if (burning) continue;
    const double ev = c.error_variance();
    coef_sum += c.vf.xi.array().exp().matrix() * ev;
    x_sum += c.x;
    ev_sum += ev;
    ++kept;
  }
  Stage1Coordinate out;
  out.variance.knots = c.vf.knots;
  out.variance.xi = (coef_sum / kept).array().log();
  out.variance.sigma_xi_sq = c.vf.sigma_xi_sq;
  out.x_mean = x_sum / kept;
  out.error_variance = ev_sum / kept;
  double acc = 0.0;
  for (const auto& s : c.xi_steps) acc += s.acceptance();
  out.xi_acceptance = acc / J;
  acc = 0.0;
  long cnt = 0;
  for (const auto& arr : c.comp_steps)
    for (const auto& s : arr) {
      acc += static_cast<double>(s.accepted);
      cnt += s.proposed;
    }
  out.theta_acceptance = cnt ? acc / static_cast<double>(cnt) : 0.0;
  out.x_acceptance = c.x_step.acceptance();
  return out;
}

/// Fits the p univariate submodels; coordinate l uses stream 1000 + l so the
/// result does not depend on `jobs`.
inline Stage1Result fit_stage1(const ReplicateDataset& data, const Stage1Settings& st, std::uint64_t seed, int jobs = 1) {
  if (data.empty()) throw Error(Errc::empty_dataset, "no subjects");
  if (data.max_replicates() < 2)
    throw Error(Errc::insufficient_replicates, "variance functions need subjects with at least two replicates");
  st.validate();
  Stage1Result out;
  out.coords.resize(static_cast<std::size_t>(data.dim()));
  parallel_for(data.dim(), jobs, [&](int l) {
    RngStream rng(seed, 1000 + static_cast<std::uint64_t>(l));
    out.coords[static_cast<std::size_t>(l)] = run_univariate(data.coordinate(l), st, rng);
  });
  return out;
}

}  // namespace deconv
