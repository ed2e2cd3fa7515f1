#include <gtest/gtest.h>

#include <map>

#include "deconv/simulation.hpp"
#include "oracles.hpp"

using namespace deconv;

namespace {

Matrix covariance_of(const std::vector<Vector>& xs) { return oracle::sample_cov(xs); }

double excess_kurtosis(const std::vector<double>& x) {
  const double m = oracle::mean(x);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    m2 += (v - m) * (v - m);
    m4 += std::pow(v - m, 4);
  }
  m2 /= static_cast<double>(x.size());
  m4 /= static_cast<double>(x.size());
  return m4 / (m2 * m2) - 3.0;
}

}  // namespace

TEST(BuildCovariance, IdentityScaled) {
  EXPECT_TRUE(build_covariance(Structure::identity, 4, StructureParams::for_x(), 0.75).isApprox(0.75 * Matrix::Identity(4, 4)));
}

TEST(BuildCovariance, ClosedFormsExact) {
  const int p = 4;
  const Matrix ar = build_covariance(Structure::autoregressive, p, StructureParams::for_errors());
  const Matrix ex = build_covariance(Structure::exponential, p, StructureParams::for_x());
  const Matrix lf = build_covariance(Structure::latent_factor, p, StructureParams::for_x());
  EXPECT_EQ(ar(0, 1), 0.5);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      EXPECT_EQ(ar(i, j), std::pow(0.5, std::abs(i - j)));
      EXPECT_EQ(ex(i, j), std::exp(-0.5 * std::abs(i - j)));
      EXPECT_EQ(lf(i, j), 0.7 * 0.7 + (i == j ? 0.51 : 0.0));
    }
  EXPECT_NEAR(lf(2, 2), 1.0, 1e-15);
}

TEST(BuildCovariance, AllSpd) {
  for (auto s : {Structure::identity, Structure::latent_factor, Structure::autoregressive, Structure::exponential})
    for (int p = 1; p <= 6; ++p)
      for (const auto& par : {StructureParams::for_x(), StructureParams::for_errors()}) {
        const Matrix c = build_covariance(s, p, par, 0.3);
        EXPECT_EQ(Eigen::LLT<Matrix>(c).info(), Eigen::Success);
        EXPECT_TRUE(c.isApprox(c.transpose()));
      }
}

TEST(BuildCovariance, ParseNames) {
  EXPECT_EQ(parse_structure("AR"), Structure::autoregressive);
  EXPECT_FALSE(parse_structure("ar1").has_value());
  EXPECT_EQ(parse_error_law("b"), ErrorLaw::mixture);
}

TEST(SampleTruth, MeanAndFrequencies) {
  RngStream rng(1);
  const auto s = Scenario::standard(ErrorLaw::mvn, Structure::identity, Structure::identity, 10, 3);
  const int draws = 100000;
  Vector sum = Vector::Zero(4);
  std::map<int, int> freq;
  for (int t = 0; t < draws; ++t) {
    int k;
    sum += s.fx.sample(rng, &k);
    ++freq[k];
  }
  const Vector mean = sum / draws;
  const Vector target = Eigen::Vector4d(2.95, 4.5, 4.0, 5.25);
  for (int l = 0; l < 4; ++l) EXPECT_NEAR(mean(l) / target(l), 1.0, 0.02);
  EXPECT_NEAR(freq[0] / double(draws), 0.25, 0.01);
  EXPECT_NEAR(freq[1] / double(draws), 0.5, 0.01);
  EXPECT_NEAR(freq[2] / double(draws), 0.25, 0.01);
}

TEST(SampleTruth, DegenerateSpec) {
  RngStream rng(2);
  TruthMixture t;
  t.weights = Eigen::Vector3d(1.0, 0.0, 0.0);
  t.means = {Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(5.0, 5.0), Eigen::Vector2d(-5.0, 0.0)};
  t.covariances.assign(3, Matrix::Zero(2, 2));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(t.sample(rng), t.means[0]);
}

TEST(SampleError, MixtureClosesMean) {
  const auto s = Scenario::standard(ErrorLaw::mixture, Structure::identity, Structure::identity, 10, 3);
  Vector r = Vector::Zero(4);
  for (int k = 0; k < 3; ++k) r += s.err_mix.weights(k) * s.err_mix.means[static_cast<std::size_t>(k)];
  EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SampleError, MvtCovariance) {
  RngStream rng(3);
  Scenario s = Scenario::standard(ErrorLaw::mvt, Structure::identity, Structure::identity, 10, 3);
  s.err_cov = Matrix::Identity(4, 4);
  std::vector<Vector> xs;
  for (int t = 0; t < 100000; ++t) xs.push_back(sample_error(s, rng));
  const Matrix c = covariance_of(xs);
  for (int l = 0; l < 4; ++l) EXPECT_NEAR(c(l, l) / 1.5, 1.0, 0.1);
  EXPECT_LT((c - 1.5 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.15);
}

TEST(SampleError, MvlCovarianceAndKurtosis) {
  RngStream rng(4);
  Scenario s = Scenario::standard(ErrorLaw::mvl, Structure::identity, Structure::identity, 10, 3);
  s.err_cov = Matrix::Identity(4, 4);
  std::vector<Vector> xs;
  std::vector<double> first;
  for (int t = 0; t < 100000; ++t) {
    xs.push_back(sample_error(s, rng));
    first.push_back(xs.back()(0));
  }
  const Matrix c = covariance_of(xs);
  for (int l = 0; l < 4; ++l) EXPECT_NEAR(c(l, l), 1.0, 0.1);
  EXPECT_LT((c - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.1);
  EXPECT_GT(excess_kurtosis(first), 0.0);
}

TEST(SampleError, MeansNearZero) {
  RngStream rng(5);
  for (auto law : {ErrorLaw::mvn, ErrorLaw::mixture, ErrorLaw::mvt, ErrorLaw::mvl}) {
    const auto s = Scenario::standard(law, Structure::autoregressive, Structure::latent_factor, 10, 3);
    std::vector<Vector> xs;
    for (int t = 0; t < 100000; ++t) xs.push_back(sample_error(s, rng));
    const Vector m = oracle::sample_mean(xs);
    const Matrix c = oracle::sample_cov(xs);
    for (int l = 0; l < 4; ++l) EXPECT_LT(std::abs(m(l)), 5.0 * std::sqrt(c(l, l) / 1e5)) << to_string(law) << " " << l;
  }
}

TEST(GenerateDataset, ZeroErrorCopiesTruth) {
  RngStream rng(6);
  Scenario s = Scenario::standard(ErrorLaw::mvn, Structure::identity, Structure::identity, 20, 3);
  s.err_cov.setZero();
  const auto sim = generate_dataset(s, rng);
  for (int i = 0; i < 20; ++i)
    for (int r = sim.data.begin(i); r < sim.data.end(i); ++r) EXPECT_EQ(sim.data.values().col(r), sim.x.col(i));
}

TEST(GenerateDataset, HeteroscedasticBinnedVariance) {
  RngStream rng(7);
  Scenario s = Scenario::standard(ErrorLaw::mvn, Structure::identity, Structure::identity, 20000, 3, 1, true);
  const auto sim = generate_dataset(s, rng);
  std::vector<double> near4;
  for (int i = 0; i < s.n; ++i) {
    if (std::abs(sim.x(0, i) - 4.0) > 0.1) continue;
    for (int r = sim.data.begin(i); r < sim.data.end(i); ++r) near4.push_back(sim.data.values()(0, r) - sim.x(0, i));
  }
  ASSERT_GT(near4.size(), 500u);
  EXPECT_NEAR(oracle::variance(near4) / (4.0 * 0.3), 1.0, 0.1);
}

TEST(GenerateDataset, Reproducible) {
  const auto s = Scenario::standard(ErrorLaw::mixture, Structure::exponential, Structure::autoregressive, 30, 2);
  RngStream a(8), b(8);
  const auto x = generate_dataset(s, a), y = generate_dataset(s, b);
  EXPECT_EQ(x.data.values(), y.data.values());
  EXPECT_EQ(x.data.ids(), y.data.ids());
  EXPECT_EQ(x.data.total(), 60);
}

TEST(Mise, ExactEstimateIsZero) {
  const auto s = Scenario::standard(ErrorLaw::mvn, Structure::identity, Structure::identity, 10, 3, 2);
  const MixtureEvaluator f(s.fx.state());
  const DensityFn same = [&](const Vector& x) { return f.density(x); };
  for (auto law : {ImportanceLaw::truth, ImportanceLaw::uniform}) {
    const auto r = mise_estimate(s.fx, {same, same}, law, 1000, 9);
    EXPECT_EQ(r.mise, 0.0);
    EXPECT_EQ(r.ise.size(), 2u);
  }
}

TEST(Mise, ShiftedNormalMatchesQuadrature) {
  TruthMixture t;
  t.weights = Vector::Ones(1);
  t.means = {Vector::Zero(1)};
  t.covariances = {Matrix::Identity(1, 1)};
  const DensityFn shifted = [](const Vector& x) { return std::exp(normal_log_density(x(0), 0.1, 1.0)); };
  const double exact = oracle::simpson(
      [](double x) {
        const double d = std::exp(normal_log_density(x, 0.0, 1.0)) - std::exp(normal_log_density(x, 0.1, 1.0));
        return d * d;
      },
      -12.0, 12.0, 20000);
  RngStream rng(10);
  const auto e = ise_estimate(t, shifted, ImportanceLaw::truth, 1000000, rng);
  EXPECT_NEAR(e.ise, exact, 3.0 * e.se);
}

TEST(Mise, ImportanceLawsAgree) {
  const auto s = Scenario::standard(ErrorLaw::mvn, Structure::identity, Structure::identity, 10, 3, 2);
  TruthMixture off = s.fx;
  for (auto& m : off.means) m.array() += 0.3;
  const MixtureEvaluator g(off.state());
  const DensityFn fit = [&](const Vector& x) { return g.density(x); };
  RngStream a(11), b(12);
  const auto t = ise_estimate(s.fx, fit, ImportanceLaw::truth, 200000, a);
  const auto u = ise_estimate(s.fx, fit, ImportanceLaw::uniform, 200000, b);
  EXPECT_NEAR(t.ise, u.ise, 3.0 * std::hypot(t.se, u.se));
}

TEST(Mise, ZeroImportanceDensity) {
  TruthMixture t;
  t.weights = Vector::Zero(1);
  t.means = {Vector::Zero(1)};
  t.covariances = {Matrix::Identity(1, 1)};
  RngStream rng(13);
  try {
    ise_estimate(t, [](const Vector&) { return 0.0; }, ImportanceLaw::truth, 10, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::zero_importance_density);
  }
}
