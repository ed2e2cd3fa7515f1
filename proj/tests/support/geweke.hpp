#pragma once

// Successive-conditional checks for the f_X mixture updates. Each replicate
// chain starts from an exact prior draw, alternates "simulate data | params"
// with one Gibbs sweep, and keeps only its final state. If every conditional
// is right the final states are iid prior draws, so plain KS tests apply.

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "deconv/mixture.hpp"
#include "oracles.hpp"

namespace geweke {

using namespace deconv;

struct Draws {
  std::vector<double> weight0, mean00, cov00, idio0, loading00, delta0;
};

inline HyperParams test_hyper(int p) {
  HyperParams h;
  h.alpha = 1.0;
  h.mu0 = Vector::Zero(p);
  h.Sigma0 = Matrix::Identity(p, p);
  h.nu0 = p + 2.0;
  h.Psi0 = Matrix::Identity(p, p);
  return h;
}

struct Prior {
  MixtureState state;
  Labels labels;
};

inline Prior draw_prior(CovarianceModel model, int p, int K, int n, const HyperParams& hyper, RngStream& rng) {
  Prior out;
  MixtureState& s = out.state;
  s.model = model;
  s.weights = sample_dirichlet(Vector::Constant(K, hyper.alpha / K), rng);
  for (int k = 0; k < K; ++k) s.means.push_back(sample_mvn(hyper.mu0, chol_factor(hyper.Sigma0), rng));
  if (model == CovarianceModel::miw) {
    for (int k = 0; k < K; ++k) s.covariances.push_back(sample_inverse_wishart(hyper.nu0, hyper.Psi0, rng));
  } else {
    const int q = default_factor_count(p);
    const bool per = model == CovarianceModel::mlfad;
    FactorBlock b = FactorBlock::zeros(K, p, q, n, per, Vector::Ones(p));
    for (int k = 0; k < K; ++k) {
      auto kk = static_cast<std::size_t>(k);
      for (int h = 0; h < q; ++h) b.global_incr[kk](h) = rng.gamma(h == 0 ? hyper.a1 : hyper.ah, 1.0);
      const Vector tau = b.tau(k);
      for (int j = 0; j < p; ++j)
        for (int h = 0; h < q; ++h) {
          b.local_shrink[kk](j, h) = rng.gamma(0.5 * hyper.nu_shrink, 0.5 * hyper.nu_shrink);
          b.loadings[kk](j, h) = rng.normal() / std::sqrt(b.local_shrink[kk](j, h) * tau(h));
        }
    }
    for (Eigen::Index i = 0; i < b.idio.size(); ++i) b.idio(i) = rng.inverse_gamma(hyper.a_sigma, hyper.b_sigma);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int h = 0; h < q; ++h) b.factors(h, i) = rng.normal();
    s.factors = std::move(b);
    s.materialize();
  }
  out.labels.resize(static_cast<std::size_t>(n));
  for (auto& c : out.labels) {
    std::vector<double> lw(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) lw[static_cast<std::size_t>(k)] = std::log(s.weights(k));
    c = sample_log_categorical(lw.data(), K, rng);
  }
  return out;
}

inline PointSet simulate_points(const Prior& pr, RngStream& rng) {
  const MixtureState& s = pr.state;
  const int p = s.dim();
  const auto n = static_cast<Eigen::Index>(pr.labels.size());
  PointSet x(p, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(pr.labels[static_cast<std::size_t>(i)]);
    if (s.factors) {
      const FactorBlock& b = *s.factors;
      const Vector omega = b.omega(static_cast<int>(k));
      Vector v = s.means[k] + b.loadings[k] * b.factors.col(i);
      for (int j = 0; j < p; ++j) v(j) += std::sqrt(omega(j)) * rng.normal();
      x.col(i) = v;
    } else {
      x.col(i) = sample_mvn(s.means[k], chol_factor(s.covariances[k]), rng);
    }
  }
  return x;
}

inline void record(Draws& d, const MixtureState& s) {
  d.weight0.push_back(s.weights(0));
  d.mean00.push_back(s.means[0](0));
  d.cov00.push_back(s.covariances[0](0, 0));
  if (s.factors) {
    d.idio0.push_back(s.factors->idio(0));
    d.loading00.push_back(s.factors->loadings[0](0, 0));
    d.delta0.push_back(s.factors->global_incr[0](0));
  }
}

inline Draws successive(CovarianceModel model, int p, int K, int n, int chains, int cycles, std::uint64_t seed) {
  const HyperParams hyper = test_hyper(p);
  Draws d;
  for (int c = 0; c < chains; ++c) {
    RngStream rng(seed, static_cast<std::uint64_t>(c));
    Prior pr = draw_prior(model, p, K, n, hyper, rng);
    for (int t = 0; t < cycles; ++t) {
      const PointSet x = simulate_points(pr, rng);
      sweep_mixture(x, pr.labels, pr.state, hyper, rng);
    }
    record(d, pr.state);
  }
  return d;
}

inline Draws prior_only(CovarianceModel model, int p, int K, int n, int count, std::uint64_t seed) {
  const HyperParams hyper = test_hyper(p);
  Draws d;
  RngStream rng(seed, 999999);
  for (int c = 0; c < count; ++c) record(d, draw_prior(model, p, K, n, hyper, rng).state);
  return d;
}

struct Check {
  std::string name;
  double p_value;
};

/// KS p-values for each tracked marginal; closed-form CDFs where they exist,
/// two-sample against independent prior draws otherwise.
inline std::vector<Check> run(CovarianceModel model, int p, int K, int n, int chains, int cycles, std::uint64_t seed) {
  const HyperParams hyper = test_hyper(p);
  const Draws d = successive(model, p, K, n, chains, cycles, seed);
  const Draws ref = prior_only(model, p, K, n, chains, seed + 1);
  std::vector<Check> out;
  const double a = hyper.alpha / K;
  out.push_back({"weight", oracle::ks_one_sample(d.weight0, [&](double w) {
                   return boost::math::ibeta(a, a * (K - 1), std::clamp(w, 0.0, 1.0));
                 }).p_value});
  out.push_back({"mean", oracle::ks_one_sample(d.mean00, [](double m) { return normal_cdf(m); }).p_value});
  if (model == CovarianceModel::miw) {
    // diagonal entry of IW_p(nu0, I) is IG((nu0-p+1)/2, 1/2)
    const double shape = 0.5 * (hyper.nu0 - p + 1.0);
    out.push_back({"cov", oracle::ks_one_sample(d.cov00, [&](double v) {
                     return boost::math::gamma_q(shape, 0.5 / v);
                   }).p_value});
  } else {
    out.push_back({"idio", oracle::ks_one_sample(d.idio0, [&](double v) {
                     return boost::math::gamma_q(hyper.a_sigma, hyper.b_sigma / v);
                   }).p_value});
    out.push_back({"delta", oracle::ks_one_sample(d.delta0, [&](double v) {
                     return boost::math::gamma_p(hyper.a1, v);
                   }).p_value});
    out.push_back({"loading", oracle::ks_two_sample(d.loading00, ref.loading00).p_value});
    out.push_back({"cov", oracle::ks_two_sample(d.cov00, ref.cov00).p_value});
  }
  return out;
}

}  // namespace geweke
