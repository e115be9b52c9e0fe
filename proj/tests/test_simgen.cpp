#include "etm/simgen.hpp"

#include <gtest/gtest.h>

using namespace etm;

namespace {

Scenario base(Design d) {
  Scenario s;
  s.pair = benchmark_pair();
  s.design = d;
  s.n = 400;
  s.n1 = 200;
  s.rho_l_star = 0.3;
  s.n2 = 1000;
  s.rho_u_star = 0.5;
  s.seed_base = 42;
  return s;
}

}  // namespace

TEST(TrueParams, BenchmarkScenario) {
  const TiltParams t = true_params(benchmark_pair());
  EXPECT_NEAR(t.beta0, -1.68, 1e-12);
  EXPECT_NEAR(t.beta1[0], 0.6, 1e-12);
  EXPECT_NEAR(t.beta1[1], 0.18, 1e-12);
}

TEST(TrueParams, IdenticalAndOneDim) {
  GaussianPair g = benchmark_pair();
  g.mu1 = g.mu0;
  const TiltParams z = true_params(g);
  EXPECT_EQ(z.beta0, 0);
  EXPECT_TRUE(z.beta1.isZero());
  GaussianPair h{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 2), Eigen::VectorXd::Ones(1)};
  const TiltParams t = true_params(h);
  EXPECT_DOUBLE_EQ(t.beta0, -2);
  EXPECT_DOUBLE_EQ(t.beta1[0], 2);
}

TEST(TrueParams, MatchesGaussianLogRatio) {
  const GaussianPair g = benchmark_pair();
  const TiltParams t = true_params(g);
  auto logpdf = [&](const Eigen::Vector2d& x, const Eigen::VectorXd& mu) {
    return -0.5 * ((x - mu).array().square() / g.sigma_diag.array()).sum();
  };
  for (const Eigen::Vector2d x : {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, -7), Eigen::Vector2d(-11, 20)})
    EXPECT_NEAR(t.beta0 + x.dot(t.beta1), logpdf(x, g.mu1) - logpdf(x, g.mu0), 1e-12);
}

TEST(Scenario, Validation) {
  Scenario s = base(Design::RandomSampling);
  s.rho_l_star = 1.0;
  EXPECT_THROW(s.validate(), Error);
  s = base(Design::OutcomeStratified);
  s.n1 = s.n;
  EXPECT_THROW(s.validate(), Error);
  s = base(Design::OutcomeStratified);
  s.rho_u_star = 0;
  EXPECT_THROW(s.validate(), Error);
  s = base(Design::OutcomeStratified);
  s.pair.sigma_diag[1] = 0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(GenRs, CountsAndDeterminism) {
  const Scenario s = base(Design::RandomSampling);
  const Dataset a = gen_rs(s, 3), b = gen_rs(s, 3), c = gen_rs(s, 4);
  EXPECT_EQ(a.n(), 400);
  EXPECT_EQ(a.n2(), 1000);
  EXPECT_EQ(a.labeled_z, b.labeled_z);
  EXPECT_EQ(a.unlabeled_z, b.unlabeled_z);
  EXPECT_EQ(a.labeled_y, b.labeled_y);
  EXPECT_NE(a.labeled_z, c.labeled_z);
  EXPECT_THROW(gen_oss(s, 0), Error);
}

TEST(GenRs, LabelFrequencyAndMixtureMean) {
  Scenario s = base(Design::RandomSampling);
  s.n = 100'000;
  s.n2 = 100'000;
  const Dataset ds = gen_rs(s, 0);
  const double se = std::sqrt(0.3 * 0.7 / s.n);
  EXPECT_NEAR(ds.ybar(), 0.3, 3 * se);
  const Eigen::VectorXd mean = ds.unlabeled_z.rightCols(2).colwise().mean();
  const Eigen::VectorXd target = 0.5 * (s.pair.mu0 + s.pair.mu1);
  for (int j = 0; j < 2; ++j) {
    // mixture variance = sigma^2 + (mu1-mu0)^2/4
    const double var = s.pair.sigma_diag[j] + std::pow(s.pair.mu1[j] - s.pair.mu0[j], 2) / 4;
    EXPECT_NEAR(mean[j], target[j], 3 * std::sqrt(var / s.n2));
  }
}

TEST(GenOss, StrataExact) {
  const Scenario s = base(Design::OutcomeStratified);
  for (std::uint64_t k = 0; k < 5; ++k) {
    const Dataset ds = gen_oss(s, k);
    EXPECT_EQ(ds.n1(), 200);
    EXPECT_EQ(ds.labeled_y.head(200).sum(), 0);
  }
  Scenario e = s;
  e.n2 = 0;
  EXPECT_EQ(gen_oss(e, 0).n2(), 0);
}

TEST(GenOss, ClassOneMean) {
  Scenario s = base(Design::OutcomeStratified);
  s.n = 200'000;
  s.n1 = 100'000;
  s.n2 = 0;
  const Dataset ds = gen_oss(s, 1);
  const Eigen::VectorXd mean = ds.labeled_z.bottomRows(s.n1).rightCols(2).colwise().mean();
  for (int j = 0; j < 2; ++j)
    EXPECT_NEAR(mean[j], s.pair.mu1[j], 3 * std::sqrt(s.pair.sigma_diag[j] / s.n1));
}

TEST(Seeds, MixingSeparatesStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(mix_seed(42, k));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(mix_seed(1, 0), mix_seed(0, 1));
}
