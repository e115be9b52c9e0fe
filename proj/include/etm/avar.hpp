#pragma once

#include "etm/etm_oss.hpp"
#include "etm/simgen.hpp"

#include <algorithm>
#include <thread>

namespace etm {

enum class IntegrationMode { OracleMonteCarlo, EmpiricalPlugin };

// Balanced draws half the sample from G0 and half from G1 and reweights to
// G0 through the known tilt; PlainG0 averages over G0 draws only.
enum class OracleSampler { Balanced, PlainG0 };

struct IntegrationSpec {
  IntegrationMode mode = IntegrationMode::OracleMonteCarlo;
  long mc_draws = 1'000'000;
  std::uint64_t seed = 0;
  int workers = 1;
  OracleSampler sampler = OracleSampler::Balanced;

  void validate() const {
    if (mode == IntegrationMode::OracleMonteCarlo && mc_draws < 1)
      throw Error(Errc::InvalidArgument, "mc_draws must be >= 1");
  }
};

// Discrete stand-in for G0: integral of f is sum_i w_i f(x_i).
struct DiscreteMeasure {
  Eigen::MatrixXd x;
  Eigen::VectorXd w;
};

struct SampleCounts {
  Design design = Design::RandomSampling;
  int n = 0, n1 = 0, n2 = 0;

  int N() const { return n + n2; }
  static SampleCounts of(const Dataset& ds) { return {ds.design, ds.n(), ds.n1(), ds.n2()}; }
  static SampleCounts of(const Scenario& s) {
    const int n1 = s.design == Design::OutcomeStratified
                       ? s.n1
                       : static_cast<int>(std::lround(s.rho_l_star * s.n));
    return {s.design, s.n, n1, s.n2};
  }
};

struct BlockParams {
  TiltParams beta;
  double rho_l = 0.5;
  double rho_u = 0.5;
  SampleCounts counts;
};

struct SBlocks {
  Eigen::MatrixXd S11, S11_tilde;
  Eigen::VectorXd S12, S13;
  double s22 = 0, s33 = 0, s44 = 0;
  Eigen::MatrixXd Sl11;
  Eigen::VectorXd Sl12;
  double delta_l = 0, delta_r = 0, delta_s = 0, alpha_star = 0;
  double a = 0;
  Eigen::VectorXd B;
  Eigen::MatrixXd D;

  BlockParams params;
  bool degenerate = false;
  double normalization_gap = 0;  // |int e dG0 - 1|
  double mass_gap = 0;           // |int dG0 - 1|
  bool consistent() const { return normalization_gap <= 1e-8 && mass_gap <= 1e-8; }
};

inline double alpha_star_of(const BlockParams& p) {
  const SampleCounts& c = p.counts;
  const double N = c.N();
  if (c.design == Design::OutcomeStratified) return (c.n1 + p.rho_u * c.n2) / N;
  return (c.n * p.rho_l + c.n2 * p.rho_u) / N;
}

inline SBlocks compute_s_blocks(const DiscreteMeasure& g0, const BlockParams& prm) {
  const int d = static_cast<int>(prm.beta.beta1.size());
  const int p = d + 1;
  if (g0.x.cols() != d || g0.w.size() != g0.x.rows())
    throw Error(Errc::DimensionMismatch, "measure vs parameters");
  check_prob(prm.rho_l, Errc::RhoOutOfRange, "rho_l");
  check_prob(prm.rho_u, Errc::RhoOutOfRange, "rho_u");
  const SampleCounts& c = prm.counts;
  const double N = c.N();
  SBlocks b;
  b.params = prm;
  b.alpha_star = alpha_star_of(prm);
  const double rl = prm.rho_l, ru = prm.rho_u, as = b.alpha_star;
  b.delta_l = rl * (1 - rl);
  b.delta_r = (c.n * (rl - as) * (rl - as) + c.n2 * (ru - as) * (ru - as)) / N;
  b.delta_s = (c.n1 + c.n2 * ru * ru) / N - as * as;

  Eigen::VectorXd il = Eigen::VectorXd::Zero(p), ia = il, iu = il;
  Eigen::MatrixXd Ml = Eigen::MatrixXd::Zero(p, p), Ma = Ml, Mu = Ml;
  double sa = 0, su = 0, mass = 0, tilt_mass = 0;
  bool all_one = true;
  Eigen::VectorXd z(p);
  z[0] = 1;
  for (Eigen::Index i = 0; i < g0.x.rows(); ++i) {
    z.tail(d) = g0.x.row(i).transpose();
    const double eta = z.dot(prm.beta.vec());
    if (std::abs(eta) > kEtaClamp) throw Error(Errc::OverflowGuardTripped, "tilt overflow");
    const double e = std::exp(eta), w = g0.w[i];
    if (std::abs(e - 1) > 1e-12) all_one = false;
    const double wl = e / (1 - rl + rl * e), wa = e / (1 - as + as * e),
                 wu = e / (1 - ru + ru * e);
    const double q = (1 - e) * (1 - e);
    mass += w;
    tilt_mass += w * e;
    il += (w * wl) * z;
    ia += (w * wa) * z;
    iu += (w * wu) * z;
    Ml.noalias() += (w * wl) * z * z.transpose();
    Ma.noalias() += (w * wa) * z * z.transpose();
    Mu.noalias() += (w * wu) * z * z.transpose();
    sa += w * q / (1 - as + as * e);
    su += w * q / (1 - ru + ru * e);
  }
  b.Sl12 = il;
  b.a = il[0];
  b.B = il.tail(d);
  b.D = Ml.bottomRightCorner(d, d);
  b.Sl11 = b.delta_l * Ml;
  b.S11 = -(c.n2 / N) * ru * (1 - ru) * Mu + as * (1 - as) * Ma;
  // strata with rho = 0 and rho = 1 carry rho(1-rho) = 0
  b.S11_tilde = b.S11;
  b.S12 = ia;
  b.S13 = -(c.n2 / N) * iu;
  b.s22 = -sa;
  b.s33 = (c.n2 / N) * su;
  b.s44 = (c.n / N) / b.delta_l;
  b.degenerate = all_one;
  b.normalization_gap = std::abs(tilt_mass - 1);
  b.mass_gap = std::abs(mass - 1);
  return b;
}

namespace detail {

constexpr long kDrawChunk = 4096;

// Draw i of the oracle sample comes from chunk i / kDrawChunk, whose stream is
// seeded by (seed, chunk); the sample is the same for any worker count.
inline Eigen::MatrixXd oracle_draws(const GaussianPair& g, const IntegrationSpec& spec) {
  const long M = spec.mc_draws;
  Eigen::MatrixXd x(M, g.d());
  const long chunks = (M + kDrawChunk - 1) / kDrawChunk;
  auto work = [&](long c0, long c1) {
    for (long c = c0; c < c1; ++c) {
      GaussianSampler gs(mix_seed(spec.seed, static_cast<std::uint64_t>(c)));
      const long lo = c * kDrawChunk, hi = std::min(M, lo + kDrawChunk);
      for (long i = lo; i < hi; ++i) {
        const bool one = spec.sampler == OracleSampler::Balanced && (i % 2 == 1);
        x.row(i) = gs.draw(g, one);
      }
    }
  };
  const int workers = std::max(1, std::min<int>(spec.workers, static_cast<int>(chunks)));
  if (workers == 1) {
    work(0, chunks);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back(work, chunks * t / workers, chunks * (t + 1) / workers);
    for (auto& th : pool) th.join();
  }
  return x;
}

}  // namespace detail

inline DiscreteMeasure oracle_measure(const GaussianPair& g, const TiltParams& beta_true,
                                      const IntegrationSpec& spec) {
  spec.validate();
  g.validate();
  DiscreteMeasure m;
  m.x = detail::oracle_draws(g, spec);
  const double M = static_cast<double>(m.x.rows());
  if (spec.sampler == OracleSampler::PlainG0) {
    m.w = Eigen::VectorXd::Constant(m.x.rows(), 1.0 / M);
    return m;
  }
  // empirical-likelihood weights of the pooled sample: sum w = sum w e = 1
  const Eigen::VectorXd e = linear_predictor(augment(m.x), beta_true.vec()).array().exp();
  SolverSettings s;
  s.grad_tol = 1e-14;
  const double alpha = solve_alpha_tilts(e, s);
  m.w = (M * (1 - alpha + alpha * e.array())).inverse();
  return m;
}

inline DiscreteMeasure plugin_measure(const Dataset& ds, const EtmEstimate& est) {
  if (!est.alpha || est.case_ == Case::Logistic)
    throw Error(Errc::MissingWeights, "plug-in blocks need an ETM estimate with alpha");
  const Eigen::MatrixXd z = ds.all_z();
  DiscreteMeasure m;
  m.w = g0_weights(z, est.tilt, *est.alpha).weights;
  m.x = z.rightCols(ds.d());
  return m;
}

inline BlockParams plugin_params(const Dataset& ds, const EtmEstimate& est) {
  if (!est.rho_ell || !est.rho_u)
    throw Error(Errc::MissingWeights, "estimate lacks class proportions");
  return {est.tilt, *est.rho_ell, *est.rho_u, SampleCounts::of(ds)};
}

// Oracle blocks at the true parameters of a Gaussian scenario.
inline SBlocks compute_s_blocks_oracle(const GaussianPair* g, const BlockParams& prm,
                                       const IntegrationSpec& spec) {
  if (!g) throw Error(Errc::MissingG0, "oracle integration needs a known G0");
  return compute_s_blocks(oracle_measure(*g, prm.beta, spec), prm);
}

inline SBlocks compute_s_blocks_plugin(const Dataset& ds, const EtmEstimate* est) {
  if (!est) throw Error(Errc::MissingWeights, "plug-in integration needs a fitted estimate");
  return compute_s_blocks(plugin_measure(ds, *est), plugin_params(ds, *est));
}

struct VarianceReport {
  Case case_ = Case::M1;
  Eigen::MatrixXd U_case, U_baseline, scaled_diff;
  Eigen::VectorXd eigenvalues_desc;
  int n = 0, N = 0;
};

namespace detail {

inline Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) throw Error(Errc::SingularBlock, std::string(what) + " is singular");
  Eigen::MatrixXd inv = lu.inverse();
  return 0.5 * (inv + inv.transpose());
}

inline Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

// U0 = H^-1 G H^-T over (beta, rho_l).
inline Eigen::MatrixXd u0_from_blocks(const SBlocks& b) {
  const int p = static_cast<int>(b.Sl12.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p + 1, p + 1);
  H.topLeftCorner(p, p) = b.Sl11;
  H.topRightCorner(p, 1) = b.Sl12;
  H(p, p) = 1 / b.delta_l;
  Eigen::MatrixXd G = H;
  G.bottomLeftCorner(1, p) = b.Sl12.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (!lu.isInvertible()) throw Error(Errc::SingularBlock, "H is singular");
  const Eigen::MatrixXd Hi = lu.inverse();
  return detail::sym(Hi * G * Hi.transpose());
}

// U1 = Sl11^-1 - delta_l Sl11^-1 Sl12 Sl21 Sl11^-1 over beta.
inline Eigen::MatrixXd u1_from_blocks(const SBlocks& b) {
  const Eigen::MatrixXd Si = detail::checked_inverse(b.Sl11, "Sl11");
  const Eigen::VectorXd v = Si * b.Sl12;
  return detail::sym(Si - b.delta_l * v * v.transpose());
}

inline VarianceReport u_case(Case c, const SBlocks& b) {
  const SampleCounts& cnt = b.params.counts;
  const bool oss = cnt.design == Design::OutcomeStratified;
  if (c == Case::Logistic) throw Error(Errc::NotApplicable, "u_case needs an ETM case");
  if ((c == Case::M1 || c == Case::M2) == oss)
    throw Error(Errc::NotApplicable, "case does not match the sampling design");
  if (b.degenerate || b.s22 == 0) throw Error(Errc::DegenerateS22, "s22 vanishes (beta = 0)");
  const int p = static_cast<int>(b.S12.size());
  const Eigen::MatrixXd S12S21 = b.S12 * b.S12.transpose();
  VarianceReport r;
  r.case_ = c;
  r.n = cnt.n;
  r.N = cnt.N();
  switch (c) {
    case Case::M1: {
      Eigen::MatrixXd inv(p + 1, p + 1);
      inv.topLeftCorner(p, p) = b.S11 - S12S21 / b.s22;
      inv.topRightCorner(p, 1) = b.S13;
      inv.bottomLeftCorner(1, p) = b.S13.transpose();
      inv(p, p) = b.s33 + b.s44;
      r.U_case = detail::checked_inverse(inv, "U_M1 inverse");
      r.U_baseline = u0_from_blocks(b);
      break;
    }
    case Case::M2: {
      if (b.s33 == 0) throw Error(Errc::SingularBlock, "s33 vanishes (no unlabeled data)");
      Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(p + 1, p + 1);
      inv.topLeftCorner(p, p) = b.S11 - S12S21 / b.s22 - b.S13 * b.S13.transpose() / b.s33;
      inv(p, p) = b.s44;
      r.U_case = detail::checked_inverse(inv, "U_M2 inverse");
      r.U_baseline = u0_from_blocks(b);
      break;
    }
    case Case::M3: {
      if (b.s33 == 0) throw Error(Errc::SingularBlock, "s33 vanishes (no unlabeled data)");
      const Eigen::MatrixXd inv =
          b.S11_tilde - S12S21 / b.s22 - b.S13 * b.S13.transpose() / b.s33;
      r.U_case = detail::checked_inverse(inv, "U_M3 inverse");
      r.U_baseline = u1_from_blocks(b);
      break;
    }
    case Case::M4: {
      r.U_case = detail::checked_inverse(b.S11_tilde - S12S21 / b.s22, "U_M4 inverse");
      r.U_baseline = u1_from_blocks(b);
      break;
    }
    default:
      break;
  }
  r.scaled_diff = detail::sym(r.U_baseline / cnt.n - r.U_case / cnt.N());
  r.eigenvalues_desc = sym_eig_desc(r.scaled_diff);
  return r;
}

// Maps (beta0, beta1, rho_l) to the conditional-scale (beta0c, beta1c).
inline Eigen::MatrixXd conditional_transform(int d, double rho_l) {
  check_prob(rho_l, Errc::RhoOutOfRange, "rho_l");
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d + 1, d + 2);
  g(0, 0) = 1;
  g(0, d + 1) = 1 / (rho_l * (1 - rho_l));
  g.block(1, 1, d, d).setIdentity();
  return g;
}

inline double v_constant(const SBlocks& b) {
  const SampleCounts& c = b.params.counts;
  if (std::abs(b.params.rho_l - b.params.rho_u) > 1e-12)
    throw Error(Errc::NotApplicable, "v needs rho_l = rho_u");
  if (c.n2 == 0) return 0.0;
  const double v = (1 - b.a) * c.n2 / (b.delta_l * c.n * (b.a * c.n2 + c.n));
  if (!(v > 0)) throw Error(Errc::NonpositiveV, "v <= 0; blocks inconsistent (a >= 1)");
  return v;
}

inline bool psd_check(const Eigen::MatrixXd& m, double tol) {
  const Eigen::VectorXd ev = sym_eig_desc(m);
  return ev.size() == 0 || ev[ev.size() - 1] >= -tol;
}

}  // namespace etm
