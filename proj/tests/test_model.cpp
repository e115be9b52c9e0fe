#include "etm/kappa.hpp"
#include "etm/simgen.hpp"

#include <gtest/gtest.h>

using namespace etm;

namespace {

TiltParams benchmark_params() { return {-1.68, Eigen::Vector2d(0.6, 0.18)}; }

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

Dataset random_dataset(std::uint64_t seed, int n, int n2, int d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd lx(n, d), ux(n2, d);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 2;
    for (int j = 0; j < d; ++j) lx(i, j) = nd(rng) + y[i];
  }
  for (int i = 0; i < n2; ++i)
    for (int j = 0; j < d; ++j) ux(i, j) = nd(rng) + (i % 3 == 0);
  return Dataset::from_x(lx, y, ux, Design::RandomSampling);
}

}  // namespace

TEST(TiltWeight, Examples) {
  EXPECT_DOUBLE_EQ(tilt_weight(Eigen::Vector2d(3, -7), {0, Eigen::Vector2d::Zero()}), 1.0);
  EXPECT_NEAR(tilt_weight(Eigen::Vector2d(-5, -8), benchmark_params()), 0.0021984559630425313, 1e-15);
  EXPECT_NEAR(tilt_weight(Eigen::Vector2d(10, 10), benchmark_params()), 454.864694499525, 1e-9);
  EXPECT_EQ(code_of([] { tilt_weight(Eigen::Vector3d::Zero(), benchmark_params()); }),
            Errc::DimensionMismatch);
}

TEST(Conditional, Examples) {
  EXPECT_DOUBLE_EQ(to_conditional(benchmark_params(), 0.5).beta0c, -1.68);
  EXPECT_NEAR(to_conditional(benchmark_params(), 0.75).beta0c, -0.5813877113318902, 1e-14);
  EXPECT_EQ(code_of([] { to_conditional({0, Eigen::Vector2d::Zero()}, 0.0); }), Errc::RhoOutOfRange);
  EXPECT_EQ(code_of([] { to_conditional({0, Eigen::Vector2d::Zero()}, 1.0); }), Errc::RhoOutOfRange);
}

TEST(Conditional, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99), b(-5, 5);
  for (int t = 0; t < 200; ++t) {
    TiltParams p{b(rng), Eigen::Vector3d(b(rng), b(rng), b(rng))};
    const double rho = u(rng);
    const TiltParams q = from_conditional(to_conditional(p, rho), rho);
    EXPECT_NEAR(q.beta0, p.beta0, 1e-13);
    EXPECT_EQ(q.beta1, p.beta1);
  }
}

TEST(Posterior, Examples) {
  const ConditionalParams c{-1.68, Eigen::Vector2d(0.6, 0.18)};
  EXPECT_NEAR(posterior_prob(Eigen::Vector2d(10, 10), c), 0.9978063666432913, 1e-15);
  const ConditionalParams zero{1.68, Eigen::Vector2d(0, 0)};
  EXPECT_DOUBLE_EQ(posterior_prob(Eigen::Vector2d(0, 0), {0, Eigen::Vector2d(0, 0)}), 0.5);
  EXPECT_DOUBLE_EQ(posterior_prob(Eigen::Vector2d(4, -3), zero), posterior_prob(Eigen::Vector2d(-9, 1), zero));
}

TEST(Posterior, MonotoneInPredictor) {
  double prev = 0;
  for (double eta = -30; eta <= 30; eta += 0.25) {
    const double p = posterior_prob(Eigen::VectorXd::Constant(1, eta), {0, Eigen::VectorXd::Ones(1)});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(G0Weights, Uniform) {
  const Eigen::MatrixXd z = augment(Eigen::MatrixXd::Random(7, 2));
  const G0Weights w = g0_weights(z, {0, Eigen::Vector2d::Zero()}, 0.3);
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(w.weights[i], 1.0 / 7, 1e-15);
}

TEST(G0Weights, TwoPoint) {
  // tilts e and 1/e via eta = +-1
  Eigen::MatrixXd z(2, 2);
  z << 1, 1, 1, -1;
  const G0Weights w = g0_weights(z, {0, Eigen::VectorXd::Ones(1)}, 0.5);
  EXPECT_NEAR(w.weights[0], 0.2689414213699951, 1e-15);
  EXPECT_NEAR(w.weights[1], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(w.weights.sum(), 1, 1e-15);
  EXPECT_NEAR(w.weights[0] * std::exp(1.0) + w.weights[1] * std::exp(-1.0), 1, 1e-15);
}

TEST(G0Weights, StaleAlphaAndRange) {
  Eigen::MatrixXd z(2, 2);
  z << 1, 1, 1, -1;
  const TiltParams p{0, Eigen::VectorXd::Ones(1)};
  EXPECT_EQ(code_of([&] { g0_weights(z, p, 0.2); }), Errc::NormalizationViolated);
  EXPECT_EQ(code_of([&] { g0_weights(z, p, 1.0); }), Errc::AlphaOutOfRange);
}

TEST(G0Weights, SolvedAlphaSatisfiesConstraints) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Dataset ds = random_dataset(seed, 12, 8, 2);
    const Eigen::MatrixXd z = ds.all_z();
    // centering the predictor puts mean(e) and mean(1/e) above 1, so the root is interior
    const Eigen::Vector2d b1(0.8, -0.4);
    const TiltParams p{-(z.rightCols(2) * b1).mean(), b1};
    const double a = solve_alpha(z, p);
    const G0Weights w = g0_weights(z, p, a);
    const Eigen::VectorXd e = linear_predictor(z, p.vec()).array().exp();
    EXPECT_NEAR(w.weights.sum(), 1, 1e-10);
    EXPECT_NEAR(w.weights.dot(e), 1, 1e-8);
    EXPECT_TRUE((w.weights.array() > 0).all());
  }
}

TEST(BayesBoundary, Examples) {
  EXPECT_NEAR(bayes_boundary(benchmark_params(), 0.5, Eigen::Vector2d(2.5, 1)), 0, 1e-14);
  const TiltParams p = benchmark_params();
  const Eigen::Vector2d x0(1.3, -0.7);
  for (double r : {0.1, 0.5, 0.8}) {
    const ConditionalParams c = to_conditional(p, r);
    EXPECT_NEAR(bayes_boundary(p, r, x0), c.beta0c + x0.dot(c.beta1c), 1e-14);
  }
  EXPECT_EQ(code_of([&] { bayes_boundary(p, 0, x0); }), Errc::RhoOutOfRange);
}

TEST(Dataset, OssSortsStrata) {
  Eigen::MatrixXd lx(4, 1);
  lx << 1, 2, 3, 4;
  const Dataset ds = Dataset::from_x(lx, Eigen::Vector4d(1, 0, 1, 0), Eigen::MatrixXd(0, 1),
                                     Design::OutcomeStratified);
  EXPECT_EQ(ds.labeled_y, Eigen::Vector4d(0, 0, 1, 1));
  EXPECT_EQ(ds.labeled_z.col(1), Eigen::Vector4d(2, 4, 1, 3));
  EXPECT_EQ(ds.n0(), 2);
  EXPECT_EQ(ds.N(), 4);
}

TEST(Dataset, Validation) {
  Eigen::MatrixXd lx(2, 1);
  lx << 1, 2;
  EXPECT_EQ(code_of([&] { Dataset::from_x(lx, Eigen::Vector2d(0, 2), Eigen::MatrixXd(0, 1), Design::RandomSampling); }),
            Errc::InvalidArgument);
  EXPECT_EQ(code_of([&] { Dataset::from_x(lx, Eigen::Vector3d(0, 1, 1), Eigen::MatrixXd(0, 1), Design::RandomSampling); }),
            Errc::DimensionMismatch);
  lx(1, 0) = std::nan("");
  EXPECT_EQ(code_of([&] { Dataset::from_x(lx, Eigen::Vector2d(0, 1), Eigen::MatrixXd(0, 1), Design::RandomSampling); }),
            Errc::NonFiniteInput);
}

TEST(LinearPredictor, OverflowGuard) {
  Eigen::MatrixXd z(1, 2);
  z << 1, 800;
  EXPECT_EQ(code_of([&] { linear_predictor(z, Eigen::Vector2d(0, 1)); }), Errc::OverflowGuardTripped);
}
