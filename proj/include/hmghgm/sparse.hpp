#pragma once

// Graphical lasso and the penalized ECME fit, which replaces the
// location/scale step with an L1-penalized precision update per state.

#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hmghgm/ecme.hpp"

namespace hmghgm {

enum class Weighting {
  uniform,           // nu_k = 1 / K
  effective_sample,  // nu_k = sum_t gamma_t(k) / T, refreshed every iteration
};

enum class PenaltyScale {
  // Objective penalty rho sqrt(nu_k) |Theta_k|_1 on the full log-likelihood.
  likelihood,
  // Objective penalty (T/2) rho sqrt(nu_k) |Theta_k|_1, so that rho acts on
  // the per-observation scale of an ordinary graphical lasso.
  per_observation,
};

struct PenaltySpec {
  double rho = 0.0;
  Weighting weighting = Weighting::uniform;
  PenaltyScale scale = PenaltyScale::likelihood;
  std::vector<double> nu;  // explicit weights; empty means "derive from weighting"
  bool renormalize_det = false;

  /// Throws std::invalid_argument for rho < 0 or an invalid explicit nu.
  void validate(int K) const;
  /// State weights for the current posteriors.
  std::vector<double> weights(const Posteriors& post) const;
  /// Multiplier of sqrt(nu_k) |Theta_k|_1 in the penalized objective.
  double objective_rho(int T) const;
};

struct GlassoOptions {
  double tol = 1e-6;  // mean absolute change of the working covariance per sweep
  int max_sweeps = 500;
  // Once the change test passes, sweeping continues until the stationarity
  // conditions hold to this level.
  double kkt_tol = 1e-6;
};

struct GlassoResult {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd sigma;  // exact inverse of theta
  int sweeps = 0;
  double gap = 0.0;  // duality gap at the returned point
};

class GlassoError : public std::runtime_error {
 public:
  GlassoError(const std::string& what, double gap) : std::runtime_error(what), gap_(gap) {}
  double gap() const { return gap_; }

 private:
  double gap_;
};

/// Maximises log|Theta| - tr(S Theta) - penalty * sum_{i != j} |Theta_ij| by
/// block coordinate descent on the working covariance. The diagonal is not
/// penalised. `warm_sigma`, when given, seeds the working covariance.
/// Throws std::invalid_argument for bad inputs and GlassoError when the
/// sweeps run out.
GlassoResult glasso(const Eigen::MatrixXd& s, double penalty, const GlassoOptions& opts = {},
                    const Eigen::MatrixXd* warm_sigma = nullptr);

/// log|Theta| - tr(S Theta) - penalty * off-diagonal L1 norm of Theta.
double glasso_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& theta, double penalty);

/// Sum of |Theta_ij| over i != j.
double offdiag_l1(const Eigen::MatrixXd& theta);

/// sum_t gamma_t(k) u_tk (y_t - mu_k)(y_t - mu_k)' for each state.
std::vector<Eigen::MatrixXd> weighted_scatter(const Eigen::MatrixXd& data, const Posteriors& post,
                                              const LatentMoments& mom,
                                              const std::vector<Eigen::VectorXd>& mu);

struct PenalizedStep {
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> theta;
  std::vector<Eigen::MatrixXd> sigma;
};

/// Location update as in cm_step2; precision from glasso on S_k / n_k with
/// penalty 2 r sqrt(nu_k) / n_k, n_k = sum_t gamma_t(k), r = objective_rho(T).
/// With renormalize_det the result is rescaled to unit determinant, which is
/// the maximiser under that constraint. With rho = 0 the
/// precision is the plain inverse of S_k / n_k. `previous` (optional) warm
/// starts the solver.
PenalizedStep penalized_cm_step2(const Eigen::MatrixXd& data, const Posteriors& post,
                                 const LatentMoments& mom, const PenaltySpec& spec,
                                 const HmghgmModel* previous = nullptr,
                                 const GlassoOptions& opts = {});

/// Off-diagonal support of a precision matrix as pairs (i, l), i < l.
using EdgeSet = std::set<std::pair<int, int>>;
EdgeSet edge_set(const Eigen::MatrixXd& theta);

struct PenalizedFit {
  FitResult result;
  std::vector<EdgeSet> edges;
};

/// Hooks that turn run_ecme into the penalized fitter.
EcmeHooks penalized_hooks(const PenaltySpec& spec, const GlassoOptions& opts = {});

PenalizedFit fit_penalized(const Eigen::MatrixXd& data, int K, const PenaltySpec& spec,
                           const FitConfig& cfg, const GlassoOptions& opts = {});

/// Single penalized run from a given starting model.
PenalizedFit fit_penalized_from(const Eigen::MatrixXd& data, HmghgmModel start,
                                const PenaltySpec& spec, const FitConfig& cfg,
                                const GlassoOptions& opts = {});

/// Fits along an increasing rho grid. The first grid point uses the
/// multi-start driver; each later point starts from the previous solution.
std::vector<PenalizedFit> fit_penalized_path(const Eigen::MatrixXd& data, int K,
                                             const std::vector<double>& rhos,
                                             const PenaltySpec& base, const FitConfig& cfg,
                                             const GlassoOptions& opts = {});

enum class GridShape { log_spaced, equispaced };

/// n points from lo to hi inclusive.
std::vector<double> rho_grid(double lo, double hi, int n, GridShape shape = GridShape::log_spaced);

}  // namespace hmghgm
