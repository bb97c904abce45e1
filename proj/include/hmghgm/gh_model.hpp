#pragma once

// Symmetric d-variate generalized hyperbolic (GH) distribution in the
// (lambda, chi, psi) parameterization, built as a normal variance mixture
// with GIG mixing.

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace hmghgm {

struct ShapeParams {
  double lambda = 1.0;
  double chi = 1.0;
  double psi = 1.0;
};

/// Immutable GH emission parameters. Holds both the scale matrix and its
/// inverse; whichever one the caller supplies is stored verbatim so that
/// exact zeros in a precision matrix survive.
class GhParams {
 public:
  /// Throws std::domain_error if sigma is not symmetric positive definite.
  static GhParams from_scale(Eigen::VectorXd mu, const Eigen::MatrixXd& sigma,
                             const ShapeParams& shape);
  /// Throws std::domain_error if theta is not symmetric positive definite.
  static GhParams from_precision(Eigen::VectorXd mu, const Eigen::MatrixXd& theta,
                                 const ShapeParams& shape);

  int dim() const { return static_cast<int>(mu_.size()); }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::MatrixXd& theta() const { return theta_; }
  const ShapeParams& shape() const { return shape_; }
  double lambda() const { return shape_.lambda; }
  double chi() const { return shape_.chi; }
  double psi() const { return shape_.psi; }
  double log_det_sigma() const { return log_det_sigma_; }
  /// Lower Cholesky factor L of theta (theta = L L').
  const Eigen::MatrixXd& theta_chol() const { return theta_chol_; }

  GhParams with_shape(const ShapeParams& shape) const;

 private:
  GhParams() = default;
  void finish_from_theta();

  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd theta_;
  Eigen::MatrixXd theta_chol_;
  ShapeParams shape_;
  double log_det_sigma_ = 0.0;
};

/// (y - mu)' Theta (y - mu). Throws std::invalid_argument on size mismatch.
double mahalanobis_sq(const Eigen::VectorXd& y, const GhParams& p);

/// Squared Mahalanobis distance of every row of `data` (T x d).
Eigen::VectorXd mahalanobis_sq_rows(const Eigen::MatrixXd& data, const GhParams& p);

/// Part of the log density that does not depend on y:
/// -d/2 log(2 pi) - 1/2 log|Sigma| + lambda/2 log(psi/chi) - log K_lambda(sqrt(chi psi)).
double gh_log_normalizer(const GhParams& p);

/// Log density for every row of `data`, given precomputed distances.
Eigen::VectorXd gh_logpdf_from_delta(const Eigen::VectorXd& delta, const GhParams& p);

double gh_logpdf(const Eigen::VectorXd& y, const GhParams& p);

/// |S|^(-1/d) S. Throws std::domain_error if S is not SPD.
Eigen::MatrixXd normalize_scale(const Eigen::MatrixXd& s_star);

/// Symmetric square root via eigendecomposition.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& s);

/// n x d draws of mu + sqrt(W) Sigma^{1/2} Z, W ~ GIG, Z ~ N(0, I).
Eigen::MatrixXd gh_sample(const GhParams& p, std::size_t n, std::uint64_t seed);

enum class Preset { gaussian, student_t, cauchy, laplace, generalized_hyperbolic, variance_gamma };

/// Shape values of the simulation presets; the GH preset's lambda is (d+1)/2.
ShapeParams preset_shape(Preset preset, int d);

/// Accepts "gaussian", "t", "cauchy", "laplace", "gh", "vg" and the long
/// enum spellings. Throws std::invalid_argument otherwise.
Preset parse_preset(std::string_view name);
std::string preset_name(Preset preset);

}  // namespace hmghgm
