#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deconv/clustering.hpp"
#include "deconv/dataset.hpp"
#include "deconv/error_model.hpp"
#include "deconv/hetero_stage1.hpp"
#include "deconv/mh.hpp"
#include "deconv/mixture.hpp"

namespace deconv {

enum class FitModel { miw, mlfa, mlfad, naive };

inline const char* to_string(FitModel m) {
  switch (m) {
    case FitModel::miw: return "miw";
    case FitModel::mlfa: return "mlfa";
    case FitModel::mlfad: return "mlfad";
    case FitModel::naive: return "naive";
  }
  return "?";
}

inline std::optional<FitModel> parse_fit_model(const std::string& name) {
  if (name == "miw") return FitModel::miw;
  if (name == "mlfa") return FitModel::mlfa;
  if (name == "mlfad") return FitModel::mlfad;
  if (name == "naive") return FitModel::naive;
  return std::nullopt;
}

inline CovarianceModel covariance_model(FitModel m) {
  switch (m) {
    case FitModel::mlfa: return CovarianceModel::mlfa;
    case FitModel::mlfad: return CovarianceModel::mlfad;
    default: return CovarianceModel::miw;
  }
}

/// Prior constants shared by both mixtures; location and scale hyper-parameters
/// are set empirically from the starting values.
struct PriorSettings {
  double alpha = 1.0;
  double a1 = 1.0;
  double ah = 2.0;
  double nu_shrink = 1.0;
  double a_sigma = 1.1;
  double b_sigma = 1.0;

  HyperParams hyper_for(const PointSet& start, bool zero_mean) const {
    HyperParams h = HyperParams::empirical(start, zero_mean, alpha);
    h.a1 = a1;
    h.ah = ah;
    h.nu_shrink = nu_shrink;
    h.a_sigma = a_sigma;
    h.b_sigma = b_sigma;
    return h;
  }
};

struct FitConfig {
  FitModel model = FitModel::mlfa;
  bool heteroscedastic = false;
  int k_x = 0;    // 0 picks clusters + 2
  int k_err = 0;  // 0 picks clusters + 2
  int factor_count = 0;  // 0 picks max{2, floor((p+1)/2)}
  int iterations = 3000;
  int burn_in = 1000;
  int thin = 5;
  int grid_points = 64;
  int adapt_batch = 50;
  PriorSettings prior;
  Stage1Settings stage1;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    if (iterations < 1) throw Error(Errc::invalid_config, "iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations) throw Error(Errc::invalid_config, "burn_in must satisfy 0 <= burn_in < iterations");
    if (thin < 1) throw Error(Errc::invalid_config, "thin must be at least 1");
    if (k_x < 0 || k_err < 0 || k_x > 64 || k_err > 64) throw Error(Errc::invalid_config, "component counts must lie in [0, 64]");
    if (factor_count < 0) throw Error(Errc::invalid_config, "factor_count must be non-negative");
    if (grid_points < 2) throw Error(Errc::invalid_config, "grid_points must be at least 2");
    if (!(prior.alpha > 0.0)) throw Error(Errc::invalid_config, "alpha must be positive");
    if (!(prior.a1 > 0.0) || !(prior.ah > 0.0) || !(prior.nu_shrink > 0.0) || !(prior.a_sigma > 0.0) || !(prior.b_sigma > 0.0))
      throw Error(Errc::invalid_config, "shrinkage and idiosyncratic prior constants must be positive");
    if (heteroscedastic && model != FitModel::naive) stage1.validate();
  }

  bool retained(int t) const { return t >= burn_in && (t - burn_in) % thin == 0; }
};

struct ChainState {
  PointSet x;  // p x n latent values
  MixtureState fx;
  RestrictedMixture ferr;
  Labels labels_x;
  Labels labels_err;  // one per replicate
  ScaleField scale;   // identity when homoscedastic
  HyperParams hyper_x;
  HyperParams hyper_err;
  Vector lower, upper;               // support box for heteroscedastic X moves
  Matrix x_base;                     // p x n proposal sd before the per-coordinate multiplier
  std::vector<AdaptiveScale> x_steps;  // one per coordinate
  long iter = 0;

  double x_acceptance() const {
    long acc = 0, prop = 0;
    for (const auto& s : x_steps) {
      acc += s.accepted;
      prop += s.proposed;
    }
    return prop ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
  }
};

namespace detail {

/// Mixture state seeded from a clustering: occupied clusters keep their
/// centres and relative sizes, the rest sit at `fill_mean` with zero weight.
inline MixtureState seeded_mixture(const PointSet& pts, const Clustering& cl, int K, CovarianceModel model, int q,
                                   const HyperParams& hyper, const Vector& fill_mean) {
  const int p = static_cast<int>(pts.rows());
  const auto n = pts.cols();
  MixtureState s;
  s.model = model;
  s.weights = Vector::Zero(K);
  const auto members = group_members(cl.labels, cl.k);
  for (int k = 0; k < K; ++k) {
    if (k < cl.k) {
      s.weights(k) = static_cast<double>(cl.sizes[static_cast<std::size_t>(k)]) / static_cast<double>(n);
      s.means.push_back(cl.centers.col(k));
    } else {
      s.means.push_back(fill_mean);
    }
  }
  if (model == CovarianceModel::miw) {
    for (int k = 0; k < K; ++k) {
      Matrix cov = hyper.Psi0;
      if (k < cl.k && static_cast<int>(members[static_cast<std::size_t>(k)].size()) > p + 1) {
        const auto& mem = members[static_cast<std::size_t>(k)];
        Matrix acc = Matrix::Zero(p, p);
        for (int i : mem) {
          const Vector d = pts.col(i) - s.means[static_cast<std::size_t>(k)];
          acc.noalias() += d * d.transpose();
        }
        cov = acc / static_cast<double>(mem.size() - 1);
        cov.diagonal() += 1e-6 * hyper.Psi0.diagonal();
      }
      s.covariances.push_back(symmetrize(cov));
    }
  } else {
    s.factors = FactorBlock::zeros(K, p, q, n, model == CovarianceModel::mlfad, hyper.Psi0.diagonal());
    s.materialize();
  }
  return s;
}

inline int resolve_components(int requested, const Clustering& cl) {
  return std::min(64, requested > 0 ? requested : cl.k + 2);
}

inline PointSet raw_residuals(const ReplicateDataset& data, const PointSet& x) {
  PointSet eps(data.dim(), data.total());
  for (int i = 0; i < data.subjects(); ++i)
    for (int r = data.begin(i); r < data.end(i); ++r) eps.col(r) = data.values().col(r) - x.col(i);
  return eps;
}

}  // namespace detail

/// Starting state. X starts at `start` (stage-1 posterior means) when given,
/// otherwise at the subject means. Both mixtures are seeded from k-means + BIC
/// clusterings of their starting points; the error means are centred so the
/// mean-zero restriction holds from the first iteration.
inline ChainState initialize(const ReplicateDataset& data, const FitConfig& cfg, RngStream& rng,
                             const ScaleField& scale = {}, const PointSet* start = nullptr) {
  if (data.empty()) throw Error(Errc::empty_dataset, "no subjects");
  const int p = data.dim();
  const int n = data.subjects();
  ChainState s;
  s.scale = scale;
  s.x = start ? *start : data.subject_means();
  if (s.x.rows() != p || s.x.cols() != n) throw Error(Errc::dimension_mismatch, "starting values do not match the dataset");

  const CovarianceModel model = covariance_model(cfg.model);
  const int q = cfg.factor_count > 0 ? cfg.factor_count : default_factor_count(p);

  s.hyper_x = cfg.prior.hyper_for(s.x, false);
  const Clustering cx = kmeans_bic(s.x, rng);
  const int kx = detail::resolve_components(cfg.k_x, cx);
  s.fx = detail::seeded_mixture(s.x, cx, std::max(kx, cx.k), model, q, s.hyper_x, s.hyper_x.mu0);
  if (kx < cx.k) {
    // an explicit K below the cluster count: fold the surplus into component 0
    s.fx.weights.conservativeResize(kx);
    s.fx.means.resize(static_cast<std::size_t>(kx));
    if (model == CovarianceModel::miw) {
      s.fx.covariances.resize(static_cast<std::size_t>(kx));
    } else {
      s.fx.factors = FactorBlock::zeros(kx, p, q, n, model == CovarianceModel::mlfad, s.hyper_x.Psi0.diagonal());
      s.fx.materialize();
    }
    s.fx.weights /= s.fx.weights.sum();
  }
  s.labels_x = cx.labels;
  for (auto& l : s.labels_x)
    if (l >= kx) l = 0;

  const PointSet eps = scale.identity() ? detail::raw_residuals(data, s.x) : scaled_residuals(data, s.x, scale);
  s.hyper_err = cfg.prior.hyper_for(eps, true);
  const Clustering ce = kmeans_bic(eps, rng);
  const int ke = detail::resolve_components(cfg.k_err, ce);
  const int ke_built = std::max(ke, ce.k);
  s.ferr.inner = detail::seeded_mixture(eps, ce, ke_built, model, q, s.hyper_err, Vector::Zero(p));
  if (ke < ce.k) {
    s.ferr.inner.weights.conservativeResize(ke);
    s.ferr.inner.means.resize(static_cast<std::size_t>(ke));
    if (model == CovarianceModel::miw) {
      s.ferr.inner.covariances.resize(static_cast<std::size_t>(ke));
    } else {
      s.ferr.inner.factors = FactorBlock::zeros(ke, p, q, eps.cols(), model == CovarianceModel::mlfad, s.hyper_err.Psi0.diagonal());
      s.ferr.inner.materialize();
    }
    s.ferr.inner.weights /= s.ferr.inner.weights.sum();
  }
  const Vector centre = s.ferr.constraint_residual();
  for (int k = 0; k < ke; ++k)
    if (s.ferr.inner.weights(k) > 0.0) s.ferr.inner.means[static_cast<std::size_t>(k)] -= centre;
  s.labels_err = ce.labels;
  for (auto& l : s.labels_err)
    if (l >= ke) l = 0;

  if (!scale.identity()) {
    s.lower.resize(p);
    s.upper.resize(p);
    for (int l = 0; l < p; ++l) {
      s.lower(l) = scale.functions[static_cast<std::size_t>(l)].knots.lower();
      s.upper(l) = scale.functions[static_cast<std::size_t>(l)].knots.upper();
    }
    s.x_base.resize(p, n);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < p; ++l)
        s.x_base(l, i) = std::sqrt(scale.functions[static_cast<std::size_t>(l)].variance_at(s.x(l, i)) / data.replicates(i));
    s.x_steps.assign(static_cast<std::size_t>(p), AdaptiveScale{1.0});
  }
  return s;
}

/// X_i | rest for homoscedastic errors: N with precision
/// Sigma_X,k^-1 + sum_j Sigma_eps,k_j^-1 and matching linear term.
inline void update_latent_x_closed_form(ChainState& s, const ReplicateDataset& data, RngStream& rng) {
  const int Kx = s.fx.components();
  const int Ke = s.ferr.inner.components();
  std::vector<Matrix> px(static_cast<std::size_t>(Kx)), pe(static_cast<std::size_t>(Ke));
  std::vector<Vector> lx(static_cast<std::size_t>(Kx));
  for (int k = 0; k < Kx; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    px[kk] = spd_inverse(s.fx.covariances[kk]);
    lx[kk] = px[kk] * s.fx.means[kk];
  }
  for (int k = 0; k < Ke; ++k) pe[static_cast<std::size_t>(k)] = spd_inverse(s.ferr.inner.covariances[static_cast<std::size_t>(k)]);
  for (int i = 0; i < data.subjects(); ++i) {
    const auto kx = static_cast<std::size_t>(s.labels_x[static_cast<std::size_t>(i)]);
    Matrix prec = px[kx];
    Vector lin = lx[kx];
    for (int r = data.begin(i); r < data.end(i); ++r) {
      const auto ke = static_cast<std::size_t>(s.labels_err[static_cast<std::size_t>(r)]);
      prec += pe[ke];
      lin.noalias() += pe[ke] * (data.values().col(r) - s.ferr.inner.means[ke]);
    }
    s.x.col(i) = sample_mvn_canonical(prec, lin, rng);
  }
}

/// X_i | rest for heteroscedastic errors: one MH step per coordinate with a
/// truncated-normal proposal on [A_l, B_l].
inline void update_latent_x_mh(ChainState& s, const ReplicateDataset& data, RngStream& rng) {
  const int p = data.dim();
  std::vector<GaussianKernel> kx, ke;
  for (int k = 0; k < s.fx.components(); ++k)
    kx.emplace_back(s.fx.means[static_cast<std::size_t>(k)], s.fx.covariances[static_cast<std::size_t>(k)]);
  for (int k = 0; k < s.ferr.inner.components(); ++k)
    ke.emplace_back(s.ferr.inner.means[static_cast<std::size_t>(k)], s.ferr.inner.covariances[static_cast<std::size_t>(k)]);
  Vector eps(p), sc(p), log_sc(p);
  auto log_target = [&](int i, const Vector& x) {
    double lt = kx[static_cast<std::size_t>(s.labels_x[static_cast<std::size_t>(i)])].log_density(x);
    double log_det = 0.0;
    for (int l = 0; l < p; ++l) {
      sc(l) = s.scale.scale(l, x(l));
      log_det += std::log(sc(l));
    }
    for (int r = data.begin(i); r < data.end(i); ++r) {
      eps = (data.values().col(r) - x).cwiseQuotient(sc);
      lt += ke[static_cast<std::size_t>(s.labels_err[static_cast<std::size_t>(r)])].log_density(eps) - log_det;
    }
    return lt;
  };
  Vector cur(p);
  for (int i = 0; i < data.subjects(); ++i) {
    cur = s.x.col(i);
    double cur_lt = log_target(i, cur);
    for (int l = 0; l < p; ++l) {
      AdaptiveScale& step = s.x_steps[static_cast<std::size_t>(l)];
      const double sd = step.scale * s.x_base(l, i);
      if (!(sd > 0.0)) {
        step.record(true);
        continue;
      }
      const double old = cur(l);
      const double prop = sample_truncated_normal(old, sd, s.lower(l), s.upper(l), rng);
      cur(l) = prop;
      const double prop_lt = log_target(i, cur);
      const double log_ratio = prop_lt - cur_lt + truncated_log_mass(old, sd, s.lower(l), s.upper(l)) -
                               truncated_log_mass(prop, sd, s.lower(l), s.upper(l));
      const bool ok = mh_accept(log_ratio, rng);
      step.record(ok);
      if (ok) cur_lt = prop_lt;
      else cur(l) = old;
    }
    s.x.col(i) = cur;
  }
}

/// f_X block, restricted f_eps block on raw residuals, closed-form X draws.
inline void gibbs_sweep_homoscedastic(ChainState& s, const ReplicateDataset& data, RngStream& rng) {
  sweep_mixture(s.x, s.labels_x, s.fx, s.hyper_x, rng);
  const PointSet eps = detail::raw_residuals(data, s.x);
  sweep_restricted_mixture(eps, s.labels_err, s.ferr, s.hyper_err, rng);
  update_latent_x_closed_form(s, data, rng);
  ++s.iter;
}

/// f_X block, restricted f_eps block on scaled residuals, MH X moves.
inline void gibbs_sweep_heteroscedastic(ChainState& s, const ReplicateDataset& data, RngStream& rng) {
  if (s.scale.identity()) throw Error(Errc::invalid_config, "heteroscedastic sweep needs a scale field");
  sweep_mixture(s.x, s.labels_x, s.fx, s.hyper_x, rng);
  const PointSet eps = scaled_residuals(data, s.x, s.scale);
  sweep_restricted_mixture(eps, s.labels_err, s.ferr, s.hyper_err, rng);
  update_latent_x_mh(s, data, rng);
  ++s.iter;
}

/// Retained f_X draws; the density estimate is their average.
struct PosteriorSummary {
  std::vector<MixtureState> draws;

  /// All retained draws as one mixture with weights divided by the draw count.
  MixtureState pooled() const {
    MixtureState out;
    out.model = CovarianceModel::miw;
    Eigen::Index total = 0;
    for (const auto& d : draws) total += d.components();
    out.weights.resize(total);
    Eigen::Index at = 0;
    const double share = draws.empty() ? 0.0 : 1.0 / static_cast<double>(draws.size());
    for (const auto& d : draws)
      for (int k = 0; k < d.components(); ++k) {
        if (!(d.weights(k) > 0.0)) continue;
        out.weights(at++) = d.weights(k) * share;
        out.means.push_back(d.means[static_cast<std::size_t>(k)]);
        out.covariances.push_back(d.covariances[static_cast<std::size_t>(k)]);
      }
    out.weights.conservativeResize(at);
    return out;
  }
};

/// Posterior-mean density on a regular grid: every 1-D marginal and every
/// pairwise 2-D marginal, evaluated exactly from the Gaussian components.
struct DensityGrid {
  std::vector<Vector> axes;
  std::vector<Vector> marginals;                  // one per coordinate
  std::vector<std::pair<int, int>> pairs;          // (a, b) with a < b
  std::vector<Matrix> pair_marginals;              // rows index axis a, columns axis b

  static DensityGrid over(const std::vector<Interval>& ranges, int points) {
    DensityGrid g;
    const int p = static_cast<int>(ranges.size());
    for (const auto& r : ranges) {
      g.axes.push_back(Vector::LinSpaced(points, r.lower, r.upper));
      g.marginals.push_back(Vector::Zero(points));
    }
    for (int a = 0; a < p; ++a)
      for (int b = a + 1; b < p; ++b) {
        g.pairs.emplace_back(a, b);
        g.pair_marginals.push_back(Matrix::Zero(points, points));
      }
    return g;
  }

  /// Adds weight * (marginals of one mixture draw).
  void accumulate(const MixtureState& state, double weight) {
    const int p = static_cast<int>(axes.size());
    for (int l = 0; l < p; ++l) {
      const MixtureEvaluator ev(marginal_state(state, {l}));
      Vector& m = marginals[static_cast<std::size_t>(l)];
      const Vector& ax = axes[static_cast<std::size_t>(l)];
      for (Eigen::Index g = 0; g < ax.size(); ++g) m(g) += weight * ev.density(&ax(g));
    }
    for (std::size_t c = 0; c < pairs.size(); ++c) {
      const auto [a, b] = pairs[c];
      const MixtureEvaluator ev(marginal_state(state, {a, b}));
      const Vector& xa = axes[static_cast<std::size_t>(a)];
      const Vector& xb = axes[static_cast<std::size_t>(b)];
      Matrix& m = pair_marginals[c];
      double pt[2];
      for (Eigen::Index i = 0; i < xa.size(); ++i) {
        pt[0] = xa(i);
        for (Eigen::Index j = 0; j < xb.size(); ++j) {
          pt[1] = xb(j);
          m(i, j) += weight * ev.density(pt);
        }
      }
    }
  }

  /// Trapezoid integral of the 1-D marginal of coordinate l.
  double marginal_mass(int l) const {
    const Vector& ax = axes[static_cast<std::size_t>(l)];
    const Vector& m = marginals[static_cast<std::size_t>(l)];
    double s = 0.0;
    for (Eigen::Index g = 0; g + 1 < ax.size(); ++g) s += 0.5 * (m(g) + m(g + 1)) * (ax(g + 1) - ax(g));
    return s;
  }
};

inline std::vector<Interval> grid_ranges(const ReplicateDataset& data) {
  const Matrix means = data.subject_means();
  std::vector<Interval> out;
  for (int l = 0; l < data.dim(); ++l) out.push_back(inflated_range(means.row(l).transpose()));
  return out;
}

struct FitDiagnostics {
  int k_x = 0;
  int k_err = 0;
  std::vector<int> nonempty_x;    // per iteration, weights above 0.05
  std::vector<int> nonempty_err;  // per iteration; empty for the naive fit
  double x_acceptance = 0.0;      // post-burn-in, heteroscedastic only
  std::vector<double> stage1_x_acceptance;
  std::vector<double> stage1_xi_acceptance;

  /// Most frequent post-burn-in value of a nonempty-count trace (ties to the smaller count).
  static int mode(const std::vector<int>& trace, int from) {
    std::vector<int> counts(65, 0);
    for (std::size_t t = static_cast<std::size_t>(std::max(0, from)); t < trace.size(); ++t) ++counts[static_cast<std::size_t>(trace[t])];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

struct FitResult {
  DensityGrid grid;
  PosteriorSummary posterior;
  FitDiagnostics diagnostics;
  std::optional<Stage1Result> stage1;
};

/// Called after every sweep with the 0-based iteration index.
using SweepObserver = std::function<void(const ChainState&, int)>;

namespace detail {

inline MixtureState snapshot(const MixtureState& s) {
  MixtureState out;
  out.model = CovarianceModel::miw;
  out.weights = s.weights;
  out.means = s.means;
  out.covariances = s.covariances;
  return out;
}

}  // namespace detail

/// Mixture fit to the subject means, treating them as error free.
inline FitResult fit_naive(const ReplicateDataset& data, const FitConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error(Errc::empty_dataset, "no subjects");
  RngStream init_rng(cfg.seed, 1), rng(cfg.seed, 0);
  const PointSet wbar = data.subject_means();
  const HyperParams hyper = cfg.prior.hyper_for(wbar, false);
  const Clustering cl = kmeans_bic(wbar, init_rng);
  const int K = detail::resolve_components(cfg.k_x, cl);
  MixtureState state = detail::seeded_mixture(wbar, cl, std::max(K, cl.k), CovarianceModel::miw, 0, hyper, hyper.mu0);
  if (K < cl.k) {
    state.weights.conservativeResize(K);
    state.weights /= state.weights.sum();
    state.means.resize(static_cast<std::size_t>(K));
    state.covariances.resize(static_cast<std::size_t>(K));
  }
  Labels labels = cl.labels;
  for (auto& l : labels)
    if (l >= K) l = 0;

  FitResult res;
  res.grid = DensityGrid::over(grid_ranges(data), cfg.grid_points);
  res.diagnostics.k_x = K;
  const int kept = (cfg.iterations - cfg.burn_in - 1) / cfg.thin + 1;
  for (int t = 0; t < cfg.iterations; ++t) {
    sweep_mixture(wbar, labels, state, hyper, rng);
    res.diagnostics.nonempty_x.push_back(nonempty_count(state.weights));
    if (!cfg.retained(t)) continue;
    res.grid.accumulate(state, 1.0 / kept);
    res.posterior.draws.push_back(detail::snapshot(state));
  }
  return res;
}

/// Full pipeline: stage-1 variance functions when heteroscedastic, starting
/// values, the Gibbs chain, and posterior-mean density accumulation over the
/// retained iterations.
inline FitResult run_fit(const ReplicateDataset& data, const FitConfig& cfg, const SweepObserver& observer = {}) {
  if (cfg.model == FitModel::naive) return fit_naive(data, cfg);
  cfg.validate();
  if (data.empty()) throw Error(Errc::empty_dataset, "no subjects");
  FitResult res;
  ScaleField scale;
  PointSet start;
  if (cfg.heteroscedastic) {
    res.stage1 = fit_stage1(data, cfg.stage1, cfg.seed, cfg.jobs);
    scale.functions = res.stage1->functions();
    start = res.stage1->x_means();
    for (const auto& c : res.stage1->coords) {
      res.diagnostics.stage1_x_acceptance.push_back(c.x_acceptance);
      res.diagnostics.stage1_xi_acceptance.push_back(c.xi_acceptance);
    }
  }
  RngStream init_rng(cfg.seed, 1), rng(cfg.seed, 0);
  ChainState s = initialize(data, cfg, init_rng, scale, cfg.heteroscedastic ? &start : nullptr);
  res.diagnostics.k_x = s.fx.components();
  res.diagnostics.k_err = s.ferr.inner.components();
  res.grid = DensityGrid::over(grid_ranges(data), cfg.grid_points);
  const int kept = (cfg.iterations - cfg.burn_in - 1) / cfg.thin + 1;
  for (int t = 0; t < cfg.iterations; ++t) {
    if (cfg.heteroscedastic) {
      gibbs_sweep_heteroscedastic(s, data, rng);
      if (t < cfg.burn_in && cfg.adapt_batch > 0 && (t + 1) % cfg.adapt_batch == 0)
        for (auto& step : s.x_steps) step.adapt();
      if (t + 1 == cfg.burn_in)
        for (auto& step : s.x_steps) step.reset_counts();
    } else {
      gibbs_sweep_homoscedastic(s, data, rng);
    }
    res.diagnostics.nonempty_x.push_back(nonempty_count(s.fx.weights));
    res.diagnostics.nonempty_err.push_back(nonempty_count(s.ferr.inner.weights));
    if (observer) observer(s, t);
    if (!cfg.retained(t)) continue;
    res.grid.accumulate(s.fx, 1.0 / kept);
    res.posterior.draws.push_back(detail::snapshot(s.fx));
  }
  if (cfg.heteroscedastic) res.diagnostics.x_acceptance = s.x_acceptance();
  return res;
}

}  // namespace deconv
