#include "hmghgm/gh_model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hmghgm/special_fn.hpp"

namespace hmghgm {

namespace {

bool is_symmetric(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

ShapeParams clamp_shape(const ShapeParams& s) {
  const GigParams g = GigParams{s.lambda, s.chi, s.psi}.clamped();
  return {g.lambda, g.chi, g.psi};
}

}  // namespace

GhParams GhParams::from_scale(Eigen::VectorXd mu, const Eigen::MatrixXd& sigma,
                              const ShapeParams& shape) {
  if (sigma.rows() != mu.size() || !is_symmetric(sigma)) {
    throw std::domain_error("GhParams: scale matrix must be square, symmetric and match mu");
  }
  GhParams p;
  p.mu_ = std::move(mu);
  p.sigma_ = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(p.sigma_);
  if (llt.info() != Eigen::Success) throw std::domain_error("GhParams: scale matrix is not PD");
  const auto n = p.sigma_.rows();
  p.theta_ = llt.solve(Eigen::MatrixXd::Identity(n, n));
  p.theta_ = 0.5 * (p.theta_ + p.theta_.transpose());
  p.shape_ = clamp_shape(shape);
  p.finish_from_theta();
  return p;
}

GhParams GhParams::from_precision(Eigen::VectorXd mu, const Eigen::MatrixXd& theta,
                                  const ShapeParams& shape) {
  if (theta.rows() != mu.size() || !is_symmetric(theta)) {
    throw std::domain_error("GhParams: precision matrix must be square, symmetric and match mu");
  }
  GhParams p;
  p.mu_ = std::move(mu);
  p.theta_ = theta;
  p.shape_ = clamp_shape(shape);
  p.finish_from_theta();
  const auto n = p.theta_.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(p.theta_);
  p.sigma_ = llt.solve(Eigen::MatrixXd::Identity(n, n));
  p.sigma_ = 0.5 * (p.sigma_ + p.sigma_.transpose());
  return p;
}

void GhParams::finish_from_theta() {
  Eigen::LLT<Eigen::MatrixXd> llt(theta_);
  if (llt.info() != Eigen::Success) throw std::domain_error("GhParams: precision matrix is not PD");
  theta_chol_ = llt.matrixL();
  log_det_sigma_ = -2.0 * theta_chol_.diagonal().array().log().sum();
}

GhParams GhParams::with_shape(const ShapeParams& shape) const {
  GhParams p = *this;
  p.shape_ = clamp_shape(shape);
  return p;
}

double mahalanobis_sq(const Eigen::VectorXd& y, const GhParams& p) {
  if (y.size() != p.dim()) throw std::invalid_argument("mahalanobis_sq: dimension mismatch");
  const Eigen::VectorXd z = p.theta_chol().transpose() * (y - p.mu());
  return z.squaredNorm();
}

Eigen::VectorXd mahalanobis_sq_rows(const Eigen::MatrixXd& data, const GhParams& p) {
  if (data.cols() != p.dim()) throw std::invalid_argument("mahalanobis_sq_rows: dimension mismatch");
  const Eigen::MatrixXd centred = data.rowwise() - p.mu().transpose();
  return (centred * p.theta_chol()).rowwise().squaredNorm();
}

double gh_log_normalizer(const GhParams& p) {
  const double d = p.dim();
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * p.log_det_sigma() +
         0.5 * p.lambda() * (std::log(p.psi()) - std::log(p.chi())) -
         log_bessel_k(p.lambda(), std::sqrt(p.chi() * p.psi()));
}

Eigen::VectorXd gh_logpdf_from_delta(const Eigen::VectorXd& delta, const GhParams& p) {
  const double chi = p.chi();
  const double psi = p.psi();
  const double log_psi = std::log(psi);
  const double nu = p.lambda() - 0.5 * p.dim();
  const double base = gh_log_normalizer(p);
  Eigen::VectorXd out(delta.size());
  for (Eigen::Index t = 0; t < delta.size(); ++t) {
    const double q = chi + delta[t];
    out[t] = base + 0.5 * nu * (std::log(q) - log_psi) + log_bessel_k(nu, std::sqrt(q * psi));
  }
  return out;
}

double gh_logpdf(const Eigen::VectorXd& y, const GhParams& p) {
  Eigen::VectorXd delta(1);
  delta[0] = mahalanobis_sq(y, p);
  return gh_logpdf_from_delta(delta, p)[0];
}

Eigen::MatrixXd normalize_scale(const Eigen::MatrixXd& s_star) {
  if (s_star.rows() != s_star.cols() || !is_symmetric(s_star)) {
    throw std::domain_error("normalize_scale: matrix must be square and symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s_star);
  if (llt.info() != Eigen::Success) throw std::domain_error("normalize_scale: matrix is not PD");
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double d = static_cast<double>(s_star.rows());
  return std::exp(-log_det / d) * s_star;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) throw std::domain_error("symmetric_sqrt: eigensolver failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd gh_sample(const GhParams& p, std::size_t n, std::uint64_t seed) {
  const int d = p.dim();
  const Eigen::MatrixXd root = symmetric_sqrt(p.sigma());
  const GigSampler gig(GigParams{p.lambda(), p.chi(), p.psi()});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double w = gig(rng);
    for (int j = 0; j < d; ++j) z[j] = normal(rng);
    out.row(i) = (p.mu() + std::sqrt(w) * (root * z)).transpose();
  }
  return out;
}

ShapeParams preset_shape(Preset preset, int d) {
  switch (preset) {
    case Preset::gaussian: return {-20.0, 40.0, 0.001};
    case Preset::student_t: return {-1.0, 2.0, 0.001};
    case Preset::cauchy: return {-0.5, 2.0, 0.001};
    case Preset::laplace: return {1.0, 0.001, 0.5};
    case Preset::generalized_hyperbolic: return {(d + 1) / 2.0, 2.0, 3.0};
    case Preset::variance_gamma: return {1.5, 0.001, 0.5};
  }
  throw std::invalid_argument("preset_shape: unknown preset");
}

Preset parse_preset(std::string_view name) {
  if (name == "gaussian" || name == "normal" || name == "n") return Preset::gaussian;
  if (name == "t" || name == "student_t") return Preset::student_t;
  if (name == "cauchy") return Preset::cauchy;
  if (name == "laplace") return Preset::laplace;
  if (name == "gh" || name == "generalized_hyperbolic") return Preset::generalized_hyperbolic;
  if (name == "vg" || name == "variance_gamma") return Preset::variance_gamma;
  throw std::invalid_argument("unknown preset: " + std::string(name));
}

std::string preset_name(Preset preset) {
  switch (preset) {
    case Preset::gaussian: return "gaussian";
    case Preset::student_t: return "t";
    case Preset::cauchy: return "cauchy";
    case Preset::laplace: return "laplace";
    case Preset::generalized_hyperbolic: return "gh";
    case Preset::variance_gamma: return "vg";
  }
  return "unknown";
}

}  // namespace hmghgm
