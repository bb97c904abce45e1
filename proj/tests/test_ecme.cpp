#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "hmghgm/ecme.hpp"
#include "hmghgm/experiments.hpp"
#include "hmghgm/selection.hpp"
#include "hmghgm/simulate.hpp"
#include "hmghgm/special_fn.hpp"
#include "oracles.hpp"

using namespace hmghgm;

namespace {

HmghgmModel one_state(const GhParams& p) {
  HmghgmModel m;
  m.emissions = {p};
  m.chain = {Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1)};
  return m;
}

Posteriors posteriors_from_gamma(const Eigen::MatrixXd& gamma) {
  Posteriors p;
  p.gamma = gamma;
  for (Eigen::Index t = 0; t + 1 < gamma.rows(); ++t) p.xi.push_back(gamma.row(t).transpose() * gamma.row(t + 1));
  return p;
}

Eigen::MatrixXd gaussian_data(int T, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
  Eigen::MatrixXd x(T, mu.size());
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd z(mu.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
    x.row(t) = (mu + l * z).transpose();
  }
  return x;
}

}  // namespace

TEST(EStepMoments, MatchConditionalGigQuadrature) {
  std::mt19937_64 rng(3);
  for (const ShapeParams& s : {ShapeParams{-1.0, 2.0, 0.001}, ShapeParams{1.0, 0.001, 0.5},
                               ShapeParams{1.5, 1.0, 1.0}, ShapeParams{-20.0, 40.0, 0.001}}) {
    Eigen::Matrix3d sigma;
    sigma << 1.5, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.8;
    const GhParams p = GhParams::from_scale(Eigen::Vector3d(1, 0, -1), normalize_scale(sigma), s);
    const Eigen::MatrixXd data = gh_sample(p, 6, 17);
    const LatentMoments m = e_step_moments(data, one_state(p));
    for (int t = 0; t < 6; ++t) {
      const double delta = mahalanobis_sq(data.row(t).transpose(), p);
      const oracle::GigMoments q = oracle::gig_moments(s.lambda - 1.5, s.chi + delta, s.psi);
      EXPECT_NEAR(m.v(t, 0), q.e_w, 1e-8 * q.e_w);
      EXPECT_NEAR(m.u(t, 0), q.e_inv_w, 1e-8 * q.e_inv_w);
      EXPECT_NEAR(m.z(t, 0), q.e_log_w, 1e-8 * std::max(1.0, std::abs(q.e_log_w)));
      EXPECT_GE(m.v(t, 0) * m.u(t, 0), 1.0 - 1e-12);  // Jensen
    }
  }
}

TEST(EStepMoments, GaussianPresetConcentratesAtTheLocation) {
  const GhParams p = GhParams::from_scale(Eigen::Vector2d(5, 5), Eigen::Matrix2d::Identity(),
                                          preset_shape(Preset::gaussian, 2));
  Eigen::MatrixXd y(1, 2);
  y << 5, 5;
  const LatentMoments m = e_step_moments(y, one_state(p));
  EXPECT_NEAR(m.u(0, 0) * m.v(0, 0), 1.0, 0.05);
}

TEST(EStepMoments, OrderZeroHasNoDerivativeTerm) {
  // d = 1 and lambda = 1/2 give conditional order 0.
  const GhParams p = GhParams::from_scale(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), {0.5, 1.3, 0.7});
  Eigen::MatrixXd y(3, 1);
  y << -1.0, 0.2, 2.5;
  const LatentMoments m = e_step_moments(y, one_state(p));
  for (int t = 0; t < 3; ++t) {
    const double q = 1.3 + y(t, 0) * y(t, 0);
    EXPECT_NEAR(m.z(t, 0), 0.5 * std::log(q / 0.7), 1e-10);
  }
}

TEST(CmStep1, SingleStateAndDegenerateMass) {
  const Posteriors one = posteriors_from_gamma(Eigen::MatrixXd::Ones(4, 1));
  const ChainParams c1 = cm_step1(one);
  EXPECT_EQ(c1.pi(0), 1.0);
  EXPECT_EQ(c1.trans(0, 0), 1.0);

  Posteriors p;
  p.gamma.resize(3, 2);
  p.gamma << 1, 0, 0, 1, 0, 1;
  Eigen::Matrix2d move;
  move << 0, 1, 0, 0;
  Eigen::Matrix2d stay;
  stay << 0, 0, 0, 1;
  p.xi = {move, stay};
  const ChainParams c = cm_step1(p);
  EXPECT_EQ(c.trans(0, 0), 0.0);
  EXPECT_EQ(c.trans(0, 1), 1.0);
  EXPECT_EQ(c.pi(0), 1.0);
}

TEST(CmStep1, EmptyStateGetsUniformRowAndFlag) {
  Posteriors p;
  p.gamma = Eigen::MatrixXd::Zero(3, 3);
  p.gamma.col(0).setOnes();
  Eigen::Matrix3d x = Eigen::Matrix3d::Zero();
  x(0, 0) = 1.0;
  p.xi = {x, x};
  std::vector<int> empty;
  const ChainParams c = cm_step1(p, &empty);
  EXPECT_EQ(empty, (std::vector<int>{1, 2}));
  EXPECT_NEAR(c.trans(1, 2), 1.0 / 3.0, 1e-15);
}

TEST(CmStep1, RandomRowsSumToOne) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Posteriors p;
  p.gamma = Eigen::MatrixXd::Zero(20, 3);
  for (int t = 0; t < 20; ++t) {
    for (int k = 0; k < 3; ++k) p.gamma(t, k) = u(rng);
    p.gamma.row(t) /= p.gamma.row(t).sum();
  }
  for (int t = 0; t < 19; ++t) {
    Eigen::Matrix3d x;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) x(j, k) = u(rng);
    p.xi.push_back(x / x.sum());
  }
  const ChainParams c = cm_step1(p);
  Eigen::Matrix3d sums = Eigen::Matrix3d::Zero();
  for (const auto& x : p.xi) sums += x;
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(c.trans.row(j).sum(), 1.0, 1e-12);
    EXPECT_LT((c.trans.row(j) - sums.row(j) / sums.row(j).sum()).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_NEAR(c.pi.sum(), 1.0, 1e-12);
}

TEST(CmStep2, UnweightedReductionIsSampleMoments) {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.5, 0.5, 1.0;
  const Eigen::MatrixXd x = gaussian_data(200, Eigen::Vector2d(1, -1), cov, 4);
  const Posteriors p = posteriors_from_gamma(Eigen::MatrixXd::Ones(200, 1));
  LatentMoments m{Eigen::MatrixXd::Ones(200, 1), Eigen::MatrixXd::Ones(200, 1), Eigen::MatrixXd::Zero(200, 1)};
  const LocationScale ls = cm_step2(x, p, m);
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - mean.transpose();
  const Eigen::MatrixXd ml = c.transpose() * c / 200.0;
  EXPECT_LT((ls.mu[0] - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ls.sigma_star[0] - ml).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ls.sigma[0] - normalize_scale(ml)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(ls.sigma[0].determinant(), 1.0, 1e-10);
}

TEST(CmStep2, HardAssignmentGivesClusterMeans) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(30, 2) * 3.0;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(30, 2);
  for (int t = 0; t < 30; ++t) g(t, t % 3 == 0 ? 1 : 0) = 1.0;
  const Posteriors p = posteriors_from_gamma(g);
  LatentMoments m{Eigen::MatrixXd::Ones(30, 2), Eigen::MatrixXd::Ones(30, 2), Eigen::MatrixXd::Zero(30, 2)};
  const LocationScale ls = cm_step2(x, p, m);
  Eigen::Vector2d m0 = Eigen::Vector2d::Zero(), m1 = Eigen::Vector2d::Zero();
  for (int t = 0; t < 30; ++t) (t % 3 == 0 ? m1 : m0) += x.row(t).transpose();
  EXPECT_LT((ls.mu[0] - m0 / 20.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ls.mu[1] - m1 / 10.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CmStep2, RandomWeightsMatchDirectRecomputation) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const int T = 40, K = 2, d = 3;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(T, d) * 2.0;
  Eigen::MatrixXd g(T, K), w(T, K);
  for (int t = 0; t < T; ++t) {
    g(t, 0) = u(rng);
    g(t, 1) = u(rng);
    g.row(t) /= g.row(t).sum();
    w(t, 0) = u(rng);
    w(t, 1) = u(rng);
  }
  const Posteriors p = posteriors_from_gamma(g);
  LatentMoments m{Eigen::MatrixXd::Ones(T, K), w, Eigen::MatrixXd::Zero(T, K)};
  const LocationScale ls = cm_step2(x, p, m);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
    double den = 0.0, n = 0.0;
    for (int t = 0; t < T; ++t) {
      num += g(t, k) * w(t, k) * x.row(t).transpose();
      den += g(t, k) * w(t, k);
      n += g(t, k);
    }
    const Eigen::VectorXd mu = num / den;
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s(i, j) += g(t, k) * w(t, k) * (x(t, i) - mu(i)) * (x(t, j) - mu(j));
    s /= n;
    EXPECT_LT((ls.mu[k] - mu).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((ls.sigma_star[k] - s).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(CmStep2, EmptyStateIsAFitError) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(10, 2);
  g.col(0).setOnes();
  const Posteriors p = posteriors_from_gamma(g);
  LatentMoments m{Eigen::MatrixXd::Ones(10, 2), Eigen::MatrixXd::Ones(10, 2), Eigen::MatrixXd::Zero(10, 2)};
  try {
    cm_step2(Eigen::MatrixXd::Random(10, 2), p, m);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_EQ(e.state(), 1);
  }
}

TEST(CmStep3, NeverWorseThanIncumbentAndBeatsLattice) {
  const HmghgmModel truth = scenario_model(1, Preset::student_t, 1);
  const SimulatedData sim = simulate_hmm(truth, 300, 8);
  HmghgmModel model = truth;
  model.emissions[0] = truth.emissions[0].with_shape({0.5, 1.0, 1.0});
  FitConfig cfg;
  const ShapeUpdate up = cm_step3(sim.data, model, 0, cfg);
  EXPECT_GE(up.objective, up.incumbent_objective);
  EXPECT_NEAR(up.objective,
              shape_objective(sim.data, model, 0, up.shape, ShapeTarget::observed_loglik), 1e-9);
  EXPECT_TRUE(cfg.shape_bounds.contains(up.shape));
  // Coarse 21^3 lattice over the search box.
  const ShapeBounds& b = cfg.shape_bounds;
  double best = -INFINITY;
  for (int i = 0; i <= 20; ++i)
    for (int j = 0; j <= 20; ++j)
      for (int k = 0; k <= 20; ++k) {
        const ShapeParams s{b.lambda_lo + (b.lambda_hi - b.lambda_lo) * i / 20.0,
                            std::exp(b.log_chi_lo + (b.log_chi_hi - b.log_chi_lo) * j / 20.0),
                            std::exp(b.log_psi_lo + (b.log_psi_hi - b.log_psi_lo) * k / 20.0)};
        best = std::max(best, shape_objective(sim.data, model, 0, s, ShapeTarget::observed_loglik));
      }
  EXPECT_LE(best, up.objective + 1e-4);
}

TEST(CmStep3, ExpectedCompleteTargetAlsoAscends) {
  const HmghgmModel truth = scenario_model(1, Preset::laplace, 1);
  const SimulatedData sim = simulate_hmm(truth, 300, 2);
  HmghgmModel model = truth;
  model.emissions[0] = truth.emissions[0].with_shape({-0.5, 2.0, 0.3});
  const Posteriors post = forward_backward(log_emissions(sim.data, model), model.chain);
  const LatentMoments mom = e_step_moments(sim.data, model);
  FitConfig cfg;
  cfg.shape_target = ShapeTarget::expected_complete;
  const ShapeUpdate up = cm_step3(sim.data, model, 0, cfg, &post, &mom);
  EXPECT_GE(up.objective, up.incumbent_objective);
  EXPECT_THROW(shape_objective(sim.data, model, 0, up.shape, ShapeTarget::expected_complete), std::invalid_argument);
}

TEST(CmStep3, StudentTShapeRecovery) {
  const HmghgmModel truth = scenario_model(1, Preset::student_t, 1);
  const SimulatedData sim = simulate_hmm(truth, 5000, 41);
  FitConfig cfg;
  cfg.n_starts = 2;
  cfg.seed = 5;
  const FitResult res = fit(sim.data, 1, cfg);
  EXPECT_NEAR(res.model.emissions[0].lambda(), -1.0, 0.3);
}

TEST(Initialize, DeterministicAndSingleState) {
  const HmghgmModel truth = scenario_model(1, Preset::gaussian, 2);
  const SimulatedData sim = simulate_hmm(truth, 200, 3);
  const HmghgmModel a = initialize(sim.data, 2, 11), b = initialize(sim.data, 2, 11);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(a.emissions[k].mu(), b.emissions[k].mu());
    EXPECT_EQ(a.emissions[k].lambda(), b.emissions[k].lambda());
  }
  EXPECT_EQ(a.chain.trans, b.chain.trans);
  const HmghgmModel one = initialize(sim.data, 1, 11);
  EXPECT_EQ(one.chain.trans(0, 0), 1.0);
  EXPECT_NEAR(one.emissions[0].sigma().determinant(), 1.0, 1e-10);
  const ShapeParams s = one.emissions[0].shape();
  EXPECT_TRUE(s.lambda >= -2 && s.lambda <= 2 && s.chi >= 0.1 && s.chi <= 4 && s.psi >= 0.1 && s.psi <= 4);
}

TEST(Initialize, SeparatedBlobsAreFoundByKMeans) {
  const Eigen::MatrixXd a = gaussian_data(100, Eigen::Vector2d(4, 4), Eigen::Matrix2d::Identity(), 1);
  const Eigen::MatrixXd b = gaussian_data(100, Eigen::Vector2d(-4, -4), Eigen::Matrix2d::Identity(), 2);
  Eigen::MatrixXd x(200, 2);
  x << a, b;
  const HmghgmModel m = initialize(x, 2, 7);
  const Eigen::Vector2d ma = a.colwise().mean().transpose(), mb = b.colwise().mean().transpose();
  const auto& m0 = m.emissions[0].mu();
  const auto& m1 = m.emissions[1].mu();
  const bool direct = (m0 - ma).norm() < (m0 - mb).norm();
  EXPECT_LT(((direct ? m0 : m1) - ma).cwiseAbs().maxCoeff(), 0.5);
  EXPECT_LT(((direct ? m1 : m0) - mb).cwiseAbs().maxCoeff(), 0.5);
  EXPECT_NEAR(m.chain.trans(0, 0), 1.0, 0.02);  // blocks are contiguous in time
}

TEST(Fit, SingleStateGaussianReducesToSampleMoments) {
  Eigen::Matrix2d cov;
  cov << 1.5, -0.6, -0.6, 1.0;
  const Eigen::MatrixXd x = gaussian_data(2000, Eigen::Vector2d(0.5, -0.5), cov, 12);
  FitConfig cfg;
  cfg.n_starts = 2;
  const FitResult res = fit(x, 1, cfg);
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - mean.transpose();
  const Eigen::MatrixXd ml = c.transpose() * c / 2000.0;
  EXPECT_LT((res.model.emissions[0].mu() - mean).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((res.model.emissions[0].sigma() - normalize_scale(ml)).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_EQ(res.model.chain.trans(0, 0), 1.0);
}

TEST(Fit, TwoStateGaussianRecoversLocationsMonotonically) {
  const HmghgmModel truth = scenario_model(1, Preset::gaussian, 2);
  const SimulatedData sim = simulate_hmm(truth, 1000, 77);
  FitConfig cfg;
  cfg.n_starts = 3;
  const FitResult res = fit(sim.data, 2, cfg);
  const std::vector<int> perm = match_labels(sim.states, local_decode(res.posteriors), 2);
  for (int k = 0; k < 2; ++k)
    EXPECT_LT((res.model.emissions[perm[k]].mu() - truth.emissions[k].mu()).cwiseAbs().maxCoeff(), 0.3);
  EXPECT_LE(max_decrease(res.loglik_trace), 1e-6);
  for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
    EXPECT_GE(res.loglik_trace[i], res.loglik_trace[i - 1] - 1e-6);
  EXPECT_EQ(res.diagnostics.start_objectives.size(), 3u);
  EXPECT_NEAR(res.final_loglik(), observed_loglik(sim.data, res.model), 1e-8);
  // Jensen bound at the fitted parameters.
  const LatentMoments m = e_step_moments(sim.data, res.model);
  EXPECT_GE((m.u.array() * m.v.array()).minCoeff(), 1.0 - 1e-12);
}

TEST(Fit, LabelPermutationLeavesLikelihoodUnchanged) {
  const HmghgmModel truth = scenario_model(2, Preset::laplace, 3);
  const SimulatedData sim = simulate_hmm(truth, 300, 5);
  const double base = observed_loglik(sim.data, truth);
  for (const std::vector<int>& perm : {std::vector<int>{1, 0, 2}, {2, 0, 1}, {2, 1, 0}})
    EXPECT_NEAR(observed_loglik(sim.data, permute_states(truth, perm)), base, 1e-10 * std::abs(base));
}

TEST(FitConfig, Validation) {
  FitConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.n_starts = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.shape_bounds.lambda_lo = 60.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(fit(Eigen::MatrixXd::Random(10, 2), 0, FitConfig{}), std::invalid_argument);
}
