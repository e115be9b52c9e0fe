#pragma once

#include "etm/model.hpp"

#include <cstdint>
#include <random>

namespace etm {

// G0 = N(mu0, diag(sigma_diag)), G1 = N(mu1, diag(sigma_diag)); sigma_diag holds variances.
struct GaussianPair {
  Eigen::VectorXd mu0, mu1, sigma_diag;

  int d() const { return static_cast<int>(mu0.size()); }
  void validate() const {
    if (mu0.size() < 1 || mu1.size() != mu0.size() || sigma_diag.size() != mu0.size())
      throw Error(Errc::DimensionMismatch, "Gaussian pair dimensions");
    if (!mu0.allFinite() || !mu1.allFinite() || !sigma_diag.allFinite())
      throw Error(Errc::NonFiniteInput, "Gaussian pair entries");
    if ((sigma_diag.array() <= 0).any())
      throw Error(Errc::InvalidArgument, "sigma_diag must be positive");
  }
};

struct Scenario {
  GaussianPair pair;
  Design design = Design::OutcomeStratified;
  int n = 0;
  int n1 = 0;             // OSS
  double rho_l_star = 0;  // RS
  int n2 = 0;
  double rho_u_star = 0.5;
  int replications = 1;
  std::uint64_t seed_base = 0;

  double rho_l() const {
    return design == Design::OutcomeStratified ? static_cast<double>(n1) / n : rho_l_star;
  }

  void validate() const {
    pair.validate();
    if (n < 1 || n2 < 0) throw Error(Errc::InvalidArgument, "scenario sizes");
    if (design == Design::OutcomeStratified) {
      if (!(n1 >= 1 && n1 < n)) throw Error(Errc::InvalidArgument, "OSS needs 1 <= n1 < n");
    } else if (!(rho_l_star > 0 && rho_l_star < 1)) {
      throw Error(Errc::RhoOutOfRange, "rho_l_star must lie in (0,1)");
    }
    if (!(rho_u_star > 0 && rho_u_star < 1))
      throw Error(Errc::RhoOutOfRange, "rho_u_star must lie in (0,1)");
    if (replications < 1) throw Error(Errc::InvalidArgument, "replications must be >= 1");
  }
};

inline TiltParams true_params(const GaussianPair& g) {
  g.validate();
  const Eigen::ArrayXd inv = g.sigma_diag.array().inverse();
  TiltParams t;
  t.beta1 = ((g.mu1 - g.mu0).array() * inv).matrix();
  const double q1 = (g.mu1.array().square() * inv).sum();
  const double q0 = (g.mu0.array().square() * inv).sum();
  t.beta0 = -(q1 - q0) / 2;
  return t;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t k) {
  return splitmix64(splitmix64(base) ^ splitmix64(k + 0x632be59bd9b4e019ULL));
}

namespace detail {

struct GaussianSampler {
  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
  std::uniform_real_distribution<double> unif{0.0, 1.0};

  explicit GaussianSampler(std::uint64_t seed) : rng(seed) {}

  Eigen::RowVectorXd draw(const GaussianPair& g, bool one) {
    const Eigen::VectorXd& mu = one ? g.mu1 : g.mu0;
    Eigen::RowVectorXd out(g.d());
    for (int j = 0; j < g.d(); ++j) out[j] = mu[j] + std::sqrt(g.sigma_diag[j]) * normal(rng);
    return out;
  }
  bool bernoulli(double p) { return unif(rng) < p; }
};

inline Eigen::MatrixXd draw_unlabeled(detail::GaussianSampler& gs, const Scenario& s) {
  Eigen::MatrixXd ux(s.n2, s.pair.d());
  for (int i = 0; i < s.n2; ++i) ux.row(i) = gs.draw(s.pair, gs.bernoulli(s.rho_u_star));
  return ux;
}

}  // namespace detail

inline Dataset gen_rs(const Scenario& s, std::uint64_t rep_index) {
  s.validate();
  if (s.design != Design::RandomSampling) throw Error(Errc::InvalidArgument, "gen_rs needs RS");
  detail::GaussianSampler gs(mix_seed(s.seed_base, rep_index));
  Eigen::MatrixXd lx(s.n, s.pair.d());
  Eigen::VectorXd y(s.n);
  for (int i = 0; i < s.n; ++i) {
    const bool one = gs.bernoulli(s.rho_l_star);
    y[i] = one ? 1.0 : 0.0;
    lx.row(i) = gs.draw(s.pair, one);
  }
  const Eigen::MatrixXd ux = detail::draw_unlabeled(gs, s);
  return Dataset::from_x(lx, y, ux, Design::RandomSampling);
}

inline Dataset gen_oss(const Scenario& s, std::uint64_t rep_index) {
  s.validate();
  if (s.design != Design::OutcomeStratified)
    throw Error(Errc::InvalidArgument, "gen_oss needs OSS");
  detail::GaussianSampler gs(mix_seed(s.seed_base, rep_index));
  const int n0 = s.n - s.n1;
  Eigen::MatrixXd lx(s.n, s.pair.d());
  Eigen::VectorXd y(s.n);
  for (int i = 0; i < s.n; ++i) {
    const bool one = i >= n0;
    y[i] = one ? 1.0 : 0.0;
    lx.row(i) = gs.draw(s.pair, one);
  }
  const Eigen::MatrixXd ux = detail::draw_unlabeled(gs, s);
  return Dataset::from_x(lx, y, ux, Design::OutcomeStratified);
}

inline Dataset generate(const Scenario& s, std::uint64_t rep_index) {
  return s.design == Design::RandomSampling ? gen_rs(s, rep_index) : gen_oss(s, rep_index);
}

inline GaussianPair benchmark_pair() {
  GaussianPair g;
  g.mu0 = Eigen::Vector2d(-5, -8);
  g.mu1 = Eigen::Vector2d(10, 10);
  g.sigma_diag = Eigen::Vector2d(25, 100);
  return g;
}

}  // namespace etm
