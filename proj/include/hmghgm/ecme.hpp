#pragma once

// ECME estimation of hidden Markov models with state-specific symmetric GH
// emissions: one E-step (forward-backward plus GIG posterior moments of the
// mixing variable) followed by three conditional maximisation steps for the
// chain, the location/scale parameters and the shape parameters.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmghgm/gh_model.hpp"
#include "hmghgm/hmm_inference.hpp"

namespace hmghgm {

/// Posterior moments of the mixing variable W given y_t and S_t = k.
struct LatentMoments {
  Eigen::MatrixXd v;  // E[W]
  Eigen::MatrixXd u;  // E[1/W]
  Eigen::MatrixXd z;  // E[log W]
};

struct HmghgmModel {
  std::vector<GhParams> emissions;
  ChainParams chain;

  int num_states() const { return static_cast<int>(emissions.size()); }
  int dim() const { return emissions.empty() ? 0 : emissions.front().dim(); }
};

/// Box for the shape search, on (lambda, log chi, log psi).
struct ShapeBounds {
  double lambda_lo = -50.0;
  double lambda_hi = 50.0;
  double log_chi_lo = -18.4;
  double log_chi_hi = 8.0;
  double log_psi_lo = -18.4;
  double log_psi_hi = 8.0;

  bool contains(const ShapeParams& s) const;
  ShapeParams project(const ShapeParams& s) const;
};

enum class ShapeTarget {
  observed_loglik,    // maximise the observed-data log-likelihood
  expected_complete,  // maximise the expected complete-data term Q2
};

struct FitConfig {
  double tol = 1e-8;
  int max_iter = 1000;
  int n_starts = 10;
  std::uint64_t seed = 1;
  ShapeBounds shape_bounds;
  ShapeTarget shape_target = ShapeTarget::observed_loglik;
  int shape_max_evals = 500;
  double shape_ftol = 1e-12;  // simplex stop: relative spread of values
  double shape_xtol = 1e-6;   // simplex stop: diameter on the search scale
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const;
};

/// Numerical failure during fitting. `state()` is -1 when not state specific.
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what, int state = -1)
      : std::runtime_error(what), state_(state) {}
  int state() const { return state_; }

 private:
  int state_;
};

struct FitDiagnostics {
  int iterations = 0;
  bool converged = false;
  int empty_state_events = 0;
  int shape_warnings = 0;
  long long shape_evaluations = 0;
  int start_index = 0;
  std::vector<double> start_objectives;  // NaN for failed starts
  std::vector<std::string> start_errors;
};

struct FitResult {
  HmghgmModel model;
  Posteriors posteriors;
  std::vector<double> loglik_trace;
  /// Equals loglik_trace for unpenalized fits; penalized objective otherwise.
  std::vector<double> objective_trace;
  FitDiagnostics diagnostics;

  double final_loglik() const { return loglik_trace.back(); }
  double final_objective() const { return objective_trace.back(); }
};

/// T x K matrix of log f(y_t | S_t = k).
Eigen::MatrixXd log_emissions(const Eigen::MatrixXd& data, const HmghgmModel& model);

double observed_loglik(const Eigen::MatrixXd& data, const HmghgmModel& model);

/// Moments of GIG(lambda_k - d/2, delta_tk + chi_k, psi_k). Throws FitError
/// if any moment is not finite.
LatentMoments e_step_moments(const Eigen::MatrixXd& data, const HmghgmModel& model);

/// pi = gamma_1; rows of trans are normalised xi sums. A state with no
/// outgoing mass gets a uniform row and its index appended to `empty_states`.
ChainParams cm_step1(const Posteriors& post, std::vector<int>* empty_states = nullptr);

struct LocationScale {
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma_star;  // gamma*u weighted scatter / sum gamma
  std::vector<Eigen::MatrixXd> sigma;       // normalize_scale(sigma_star)
};

/// Throws FitError naming the state if its effective sample is zero or its
/// weighted scatter is not positive definite.
LocationScale cm_step2(const Eigen::MatrixXd& data, const Posteriors& post, const LatentMoments& mom);

struct ShapeUpdate {
  ShapeParams shape;
  double incumbent_objective = 0.0;
  double objective = 0.0;
  int evaluations = 0;
  bool warning = false;  // optimiser exhausted its budget without converging
  /// Accepted move on the search scale (logits of the bounded coordinates).
  Eigen::Vector3d displacement = Eigen::Vector3d::Zero();
};

/// Value of the CM-step 3 target for `state` at `shape`, all else fixed.
/// The expected_complete target needs `post` and `mom`.
double shape_objective(const Eigen::MatrixXd& data, const HmghgmModel& model, int state,
                       const ShapeParams& shape, ShapeTarget target,
                       const Posteriors* post = nullptr, const LatentMoments* mom = nullptr);

/// Simplex search over logits of (lambda, log chi, log psi) within cfg.shape_bounds,
/// started at (and never worse than) the incumbent shape of `state`.
/// `initial_step` sets the simplex edge per coordinate (default 0.25).
ShapeUpdate cm_step3(const Eigen::MatrixXd& data, const HmghgmModel& model, int state,
                     const FitConfig& cfg, const Posteriors* post = nullptr,
                     const LatentMoments* mom = nullptr,
                     const Eigen::Vector3d* initial_step = nullptr);

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // K x d
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters trigger a fresh
/// seeding (up to 10 attempts) before FitError is thrown.
KMeansResult kmeans(const Eigen::MatrixXd& data, int K, std::uint64_t seed);

/// Starting model from a K-means partition: centroids, unit-determinant
/// cluster covariances, empirical transition proportions, cluster-frequency
/// initial probabilities and shapes drawn from lambda ~ U(-2, 2),
/// chi ~ U(0.1, 4), psi ~ U(0.1, 4).
HmghgmModel initialize(const Eigen::MatrixXd& data, int K, std::uint64_t seed);

/// Model from a hard partition, as in initialize() but without K-means.
HmghgmModel model_from_partition(const Eigen::MatrixXd& data, const std::vector<int>& labels,
                                 int K, std::uint64_t shape_seed);

/// Replacement for CM-step 2 and the matching objective penalty. Used by the
/// penalized fitter; the default (empty) hooks give the plain ECME fit.
struct EcmeHooks {
  std::function<std::vector<GhParams>(const Eigen::MatrixXd& data, const Posteriors& post,
                                      const LatentMoments& mom, const HmghgmModel& model)>
      location_scale_step;
  std::function<double(const HmghgmModel& model, const Posteriors& post)> penalty;
};

/// ECME iterations from a given starting model.
FitResult run_ecme(const Eigen::MatrixXd& data, HmghgmModel start, const FitConfig& cfg,
                   const EcmeHooks& hooks = {});

/// Best of cfg.n_starts ECME runs by final objective. Throws FitError
/// listing the individual failures if every start fails.
FitResult fit(const Eigen::MatrixXd& data, int K, const FitConfig& cfg);

/// Multi-start driver shared with the penalized fitter.
FitResult fit_multistart(const Eigen::MatrixXd& data, int K, const FitConfig& cfg,
                         const EcmeHooks& hooks);

/// Model with states reordered: new state i is old state perm[i].
HmghgmModel permute_states(const HmghgmModel& model, const std::vector<int>& perm);

}  // namespace hmghgm
