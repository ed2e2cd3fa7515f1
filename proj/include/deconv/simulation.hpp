#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deconv/dataset.hpp"
#include "deconv/mixture.hpp"
#include "deconv/parallel.hpp"

namespace deconv {

enum class Structure { identity, latent_factor, autoregressive, exponential };
enum class ErrorLaw { mvn, mixture, mvt, mvl };

inline const char* to_string(Structure s) {
  switch (s) {
    case Structure::identity: return "I";
    case Structure::latent_factor: return "LF";
    case Structure::autoregressive: return "AR";
    case Structure::exponential: return "EXP";
  }
  return "?";
}

inline std::optional<Structure> parse_structure(const std::string& s) {
  if (s == "I") return Structure::identity;
  if (s == "LF") return Structure::latent_factor;
  if (s == "AR") return Structure::autoregressive;
  if (s == "EXP") return Structure::exponential;
  return std::nullopt;
}

inline const char* to_string(ErrorLaw l) {
  switch (l) {
    case ErrorLaw::mvn: return "mvn";
    case ErrorLaw::mixture: return "mixture";
    case ErrorLaw::mvt: return "mvt";
    case ErrorLaw::mvl: return "mvl";
  }
  return "?";
}

inline std::optional<ErrorLaw> parse_error_law(const std::string& s) {
  if (s == "mvn" || s == "a") return ErrorLaw::mvn;
  if (s == "mixture" || s == "b") return ErrorLaw::mixture;
  if (s == "mvt") return ErrorLaw::mvt;
  if (s == "mvl") return ErrorLaw::mvl;
  return std::nullopt;
}

/// Parameters of the four correlation shapes.
struct StructureParams {
  double loading = 0.7;  // LF: every entry of the single loading column
  double idio = 0.51;    // LF: diagonal of Omega
  double rho = 0.7;      // AR: rho^|i-j|
  double rate = 0.5;     // EXP: exp(-rate |i-j|)

  static StructureParams for_x() { return {0.7, 0.51, 0.7, 0.5}; }
  static StructureParams for_errors() { return {0.5, 0.75, 0.5, 0.9}; }
};

/// Correlation-shape matrix conjugated by D = sqrt(scale_sq) I.
inline Matrix build_covariance(Structure s, int p, const StructureParams& par, double scale_sq = 1.0) {
  if (p < 1) throw Error(Errc::dimension_mismatch, "covariance dimension must be positive");
  Matrix c(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double d = std::abs(i - j);
      switch (s) {
        case Structure::identity: c(i, j) = i == j ? 1.0 : 0.0; break;
        case Structure::latent_factor: c(i, j) = par.loading * par.loading + (i == j ? par.idio : 0.0); break;
        case Structure::autoregressive: c(i, j) = std::pow(par.rho, d); break;
        case Structure::exponential: c(i, j) = std::exp(-par.rate * d); break;
        default: throw Error(Errc::unknown_structure, "unknown covariance structure");
      }
    }
  return scale_sq * c;
}

/// Gaussian mixture with exact density evaluation and sampling.
struct TruthMixture {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  int components() const { return static_cast<int>(weights.size()); }

  MixtureState state() const {
    MixtureState s;
    s.weights = weights;
    s.means = means;
    s.covariances = covariances;
    return s;
  }

  Vector sample(RngStream& rng, int* component = nullptr) const {
    double u = rng.uniform();
    int k = 0;
    while (k + 1 < components() && u >= weights(k)) u -= weights(k++);
    if (component) *component = k;
    const Matrix& cov = covariances[static_cast<std::size_t>(k)];
    if (cov.isZero(0.0)) return means[static_cast<std::size_t>(k)];
    return sample_mvn(means[static_cast<std::size_t>(k)], chol_factor(cov), rng);
  }

  void validate() const {
    if (components() < 1 || static_cast<int>(means.size()) != components() || static_cast<int>(covariances.size()) != components())
      throw Error(Errc::dimension_mismatch, "mixture weights, means and covariances differ in count");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
      throw Error(Errc::invalid_config, "mixture weights must lie on the simplex");
    for (int k = 0; k < components(); ++k)
      if (means[static_cast<std::size_t>(k)].size() != dim() || covariances[static_cast<std::size_t>(k)].rows() != dim() ||
          covariances[static_cast<std::size_t>(k)].cols() != dim())
        throw Error(Errc::dimension_mismatch, "mixture component dimensions differ");
  }
};

struct Scenario {
  int n = 500;
  int m = 3;
  TruthMixture fx;
  ErrorLaw law = ErrorLaw::mvn;
  Matrix err_cov;       // Sigma_eps (scale matrix for MVT and MVL)
  TruthMixture err_mix;  // law (b) only
  double mvt_df = 6.0;
  bool heteroscedastic = false;

  int dim() const { return fx.dim(); }

  /// Scaled-error conditional scale s(x) = |1 + x/4|.
  static double true_scale(double x) { return std::abs(1.0 + x / 4.0); }

  void validate() const {
    if (n < 1 || m < 1) throw Error(Errc::invalid_config, "n and m must be positive");
    fx.validate();
    if (err_cov.rows() != dim() || err_cov.cols() != dim()) throw Error(Errc::dimension_mismatch, "error covariance dimension differs");
    if (law == ErrorLaw::mixture) {
      err_mix.validate();
      if (err_mix.dim() != dim()) throw Error(Errc::dimension_mismatch, "error mixture dimension differs");
    }
    if (law == ErrorLaw::mvt && !(mvt_df > 2.0)) throw Error(Errc::invalid_config, "mvt degrees of freedom must exceed 2");
  }

  /// Three-component truth with weights (0.25, 0.5, 0.25); errors of law (a)
  /// or (b) with the given correlation shapes. Coordinates beyond the fourth
  /// are not defined, so p is limited to 1..4.
  static Scenario standard(ErrorLaw law, Structure x_structure, Structure err_structure, int n, int m, int p = 4,
                           bool heteroscedastic = false) {
    if (p < 1 || p > 4) throw Error(Errc::invalid_config, "standard scenarios define p from 1 to 4");
    static const double mu[3][4] = {{0.8, 6, 4, 5}, {2.5, 4, 5, 6}, {6, 4, 2, 4}};
    Scenario s;
    s.n = n;
    s.m = m;
    s.heteroscedastic = heteroscedastic;
    s.law = law;
    s.fx.weights = Eigen::Vector3d(0.25, 0.5, 0.25);
    const Matrix cx = build_covariance(x_structure, p, StructureParams::for_x(), 0.75);
    for (int k = 0; k < 3; ++k) {
      s.fx.means.push_back(Eigen::Map<const Vector>(mu[k], p));
      s.fx.covariances.push_back(cx);
    }
    s.err_cov = build_covariance(err_structure, p, StructureParams::for_errors(), 0.3);
    if (law == ErrorLaw::mixture) {
      static const double me[2][4] = {{-0.3, 0.0, 0.3, 0.0}, {-0.5, 0.4, 0.5, 0.0}};
      s.err_mix.weights = Eigen::Vector3d(0.2, 0.6, 0.2);
      const Vector m1 = Eigen::Map<const Vector>(me[0], p), m2 = Eigen::Map<const Vector>(me[1], p);
      s.err_mix.means = {m1, m2, Vector(-(0.2 * m1 + 0.6 * m2) / 0.2)};
      s.err_mix.covariances.assign(3, s.err_cov);
    }
    return s;
  }
};

/// One scaled error draw from the scenario's law.
inline Vector sample_error(const Scenario& s, RngStream& rng) {
  const int p = s.dim();
  switch (s.law) {
    case ErrorLaw::mvn:
      if (s.err_cov.isZero(0.0)) return Vector::Zero(p);
      return sample_mvn(Vector::Zero(p), chol_factor(s.err_cov), rng);
    case ErrorLaw::mixture: return s.err_mix.sample(rng);
    case ErrorLaw::mvt: {
      const Vector z = sample_mvn(Vector::Zero(p), chol_factor(s.err_cov), rng);
      const double y = 2.0 * rng.gamma(0.5 * s.mvt_df);  // chi-square with df degrees of freedom
      return std::sqrt(s.mvt_df / y) * z;
    }
    case ErrorLaw::mvl: {
      const Vector z = sample_mvn(Vector::Zero(p), chol_factor(s.err_cov), rng);
      return std::sqrt(rng.gamma(1.0)) * z;
    }
  }
  throw Error(Errc::invalid_config, "unknown error law");
}

struct SimulatedData {
  ReplicateDataset data;
  PointSet x;  // true latent values, p x n
};

inline SimulatedData generate_dataset(const Scenario& s, RngStream& rng) {
  s.validate();
  const int p = s.dim();
  SimulatedData out;
  out.x.resize(p, s.n);
  std::vector<std::string> ids;
  std::vector<Matrix> reps;
  const int width = std::max(1, static_cast<int>(std::to_string(s.n).size()));
  for (int i = 0; i < s.n; ++i) {
    const Vector x = s.fx.sample(rng);
    out.x.col(i) = x;
    Matrix w(p, s.m);
    for (int j = 0; j < s.m; ++j) {
      Vector e = sample_error(s, rng);
      if (s.heteroscedastic)
        for (int l = 0; l < p; ++l) e(l) *= Scenario::true_scale(x(l));
      w.col(j) = x + e;
    }
    std::string id = std::to_string(i + 1);
    ids.push_back("s" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
    reps.push_back(std::move(w));
  }
  out.data = ReplicateDataset(ids, reps);
  return out;
}

enum class ImportanceLaw { truth, uniform };

inline const char* to_string(ImportanceLaw l) { return l == ImportanceLaw::truth ? "truth" : "uniform"; }

/// Edges [min_k mu_k - 3, max_k mu_k + 3] per coordinate.
inline std::pair<Vector, Vector> uniform_box(const TruthMixture& truth) {
  Vector lo = truth.means.front(), hi = truth.means.front();
  for (const auto& m : truth.means) {
    lo = lo.cwiseMin(m);
    hi = hi.cwiseMax(m);
  }
  return {lo.array() - 3.0, hi.array() + 3.0};
}

struct IseEstimate {
  double ise = 0.0;
  double se = 0.0;  // Monte Carlo standard error
};

using DensityFn = std::function<double(const Vector&)>;

/// Importance-sampling estimate of the integral of (f - fhat)^2 with M draws
/// from p0, averaged (divided by M).
inline IseEstimate ise_estimate(const TruthMixture& truth, const DensityFn& estimate, ImportanceLaw law, int M, RngStream& rng) {
  if (M < 1) throw Error(Errc::invalid_config, "M must be positive");
  const MixtureEvaluator f(truth.state());
  const auto [lo, hi] = uniform_box(truth);
  const double log_vol = (hi - lo).array().log().sum();
  const int p = truth.dim();
  double sum = 0.0, sum_sq = 0.0;
  Vector x(p);
  for (int t = 0; t < M; ++t) {
    double p0;
    if (law == ImportanceLaw::truth) {
      x = truth.sample(rng);
      p0 = f.density(x);
    } else {
      for (int l = 0; l < p; ++l) x(l) = lo(l) + (hi(l) - lo(l)) * rng.uniform();
      p0 = std::exp(-log_vol);
    }
    if (!(p0 > 0.0)) throw Error(Errc::zero_importance_density, "importance density vanished at a sampled point");
    const double d = f.density(x) - estimate(x);
    const double term = d * d / p0;
    sum += term;
    sum_sq += term * term;
  }
  IseEstimate out;
  out.ise = sum / M;
  out.se = M > 1 ? std::sqrt(std::max(0.0, sum_sq / M - out.ise * out.ise) / (M - 1)) : 0.0;
  return out;
}

struct SimResult {
  std::vector<double> ise;
  std::vector<double> se;
  double mise = 0.0;
  double mise_se = 0.0;  // spread of the replication ISEs
};

inline SimResult summarize_ise(std::vector<IseEstimate> reps) {
  SimResult r;
  for (const auto& e : reps) {
    r.ise.push_back(e.ise);
    r.se.push_back(e.se);
  }
  const double B = static_cast<double>(reps.size());
  if (B == 0) return r;
  for (double v : r.ise) r.mise += v / B;
  if (B > 1) {
    double ss = 0.0;
    for (double v : r.ise) ss += (v - r.mise) * (v - r.mise);
    r.mise_se = std::sqrt(ss / (B - 1) / B);
  }
  return r;
}

/// ISE of each fitted estimate against the truth, replication b using stream `stream_base + b`.
inline SimResult mise_estimate(const TruthMixture& truth, const std::vector<DensityFn>& fits, ImportanceLaw law, int M,
                               std::uint64_t seed, std::uint64_t stream_base = 0, int jobs = 1) {
  if (fits.empty()) throw Error(Errc::invalid_config, "B must be at least 1");
  std::vector<IseEstimate> reps(fits.size());
  parallel_for(static_cast<int>(fits.size()), jobs, [&](int b) {
    RngStream rng(seed, stream_base + static_cast<std::uint64_t>(b));
    reps[static_cast<std::size_t>(b)] = ise_estimate(truth, fits[static_cast<std::size_t>(b)], law, M, rng);
  });
  return summarize_ise(std::move(reps));
}

}  // namespace deconv
