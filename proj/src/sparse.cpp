#include "hmghgm/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace hmghgm {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

bool symmetric_finite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, bool* ok) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  *ok = llt.info() == Eigen::Success;
  if (!*ok) return {};
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

// Precision from the working covariance and the column regressions,
// symmetrised without creating nonzeros: an entry is kept only when both
// column solutions agree that it is in the support.
Eigen::MatrixXd precision_from_regressions(const Eigen::MatrixXd& w, const Eigen::MatrixXd& beta) {
  const Eigen::Index d = w.rows();
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double tjj = 1.0 / (w(j, j) - w.col(j).dot(beta.col(j)));
    theta.col(j) = -tjj * beta.col(j);
    theta(j, j) = tjj;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index l = j + 1; l < d; ++l) {
      const double v = (theta(l, j) == 0.0 || theta(j, l) == 0.0) ? 0.0 : 0.5 * (theta(l, j) + theta(j, l));
      theta(l, j) = v;
      theta(j, l) = v;
    }
  }
  return theta;
}

// Largest violation of the stationarity conditions: Sigma - S is zero on the
// diagonal, equals penalty * sign(theta) on the support and is bounded by the
// penalty off it. Infinite when theta is not positive definite.
double kkt_residual(const Eigen::MatrixXd& s, const Eigen::MatrixXd& theta, double penalty) {
  bool ok = false;
  const Eigen::MatrixXd sigma = spd_inverse(theta, &ok);
  if (!ok) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd g = sigma - s;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    for (Eigen::Index l = 0; l < s.rows(); ++l) {
      double r;
      if (l == j) {
        r = std::abs(g(l, j));
      } else if (theta(l, j) != 0.0) {
        r = std::abs(g(l, j) - penalty * (theta(l, j) > 0.0 ? 1.0 : -1.0));
      } else {
        r = std::max(0.0, std::abs(g(l, j)) - penalty);
      }
      worst = std::max(worst, r);
    }
  }
  return worst;
}

}  // namespace

void PenaltySpec::validate(int K) const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be finite and non-negative");
  if (nu.empty()) return;
  if (static_cast<int>(nu.size()) != K) throw std::invalid_argument("nu must have one weight per state");
  double total = 0.0;
  for (double v : nu) {
    if (!(v > 0.0)) throw std::invalid_argument("state weights must be positive");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("state weights must sum to one");
}

std::vector<double> PenaltySpec::weights(const Posteriors& post) const {
  const int K = post.num_states();
  if (!nu.empty()) return nu;
  std::vector<double> out(static_cast<std::size_t>(K), 1.0 / K);
  if (weighting == Weighting::effective_sample) {
    for (int k = 0; k < K; ++k) out[k] = post.gamma.col(k).sum() / post.length();
  }
  return out;
}

double PenaltySpec::objective_rho(int T) const {
  return scale == PenaltyScale::likelihood ? rho : 0.5 * T * rho;
}

double offdiag_l1(const Eigen::MatrixXd& theta) {
  return theta.cwiseAbs().sum() - theta.diagonal().cwiseAbs().sum();
}

double glasso_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& theta, double penalty) {
  Eigen::LLT<Eigen::MatrixXd> llt(theta);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return log_det - (s * theta).trace() - penalty * offdiag_l1(theta);
}

GlassoResult glasso(const Eigen::MatrixXd& s, double penalty, const GlassoOptions& opts,
                    const Eigen::MatrixXd* warm_sigma) {
  if (!symmetric_finite(s)) throw std::invalid_argument("glasso: S must be finite, square and symmetric");
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw std::invalid_argument("glasso: bad penalty");
  if (!(opts.tol > 0.0) || !(opts.kkt_tol > 0.0) || opts.max_sweeps < 1) throw std::invalid_argument("glasso: bad options");
  const auto d = s.rows();
  if (d == 0) throw std::invalid_argument("glasso: empty matrix");
  if (s.diagonal().minCoeff() <= 0.0) throw std::invalid_argument("glasso: S needs a positive diagonal");

  GlassoResult out;
  if (penalty == 0.0 || d == 1) {
    bool ok = false;
    out.theta = spd_inverse(s, &ok);
    if (!ok) throw std::invalid_argument("glasso: singular S requires a positive penalty");
    out.sigma = 0.5 * (s + s.transpose());
    out.gap = 0.0;
    return out;
  }

  Eigen::MatrixXd w = s;
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(d, d);  // column j: regression of j on the rest
  if (warm_sigma != nullptr && warm_sigma->rows() == d && warm_sigma->cols() == d) {
    bool ok = false;
    const Eigen::MatrixXd warm_theta = spd_inverse(*warm_sigma, &ok);
    // The previous solution may live on another scale (unit determinant),
    // so match its diagonal to S before resetting it; keep it only if the
    // working covariance stays positive definite.
    Eigen::MatrixXd candidate = *warm_sigma * (s.diagonal().sum() / warm_sigma->diagonal().sum());
    candidate.diagonal() = s.diagonal();
    if (ok && Eigen::LLT<Eigen::MatrixXd>(candidate).info() == Eigen::Success) {
      w = candidate;
      for (Eigen::Index j = 0; j < d; ++j) {
        beta.col(j) = -warm_theta.col(j) / warm_theta(j, j);
        beta(j, j) = 0.0;
      }
    }
  }

  Eigen::VectorXd wb(d);
  bool converged = false;
  int sweep = 0;
  Eigen::MatrixXd theta;
  while (sweep < opts.max_sweeps) {
    ++sweep;
    double change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      // Lasso: min 1/2 b' W11 b - b' s12 + penalty |b|_1 by coordinate descent.
      auto b = beta.col(j);
      wb = w * b;  // b_j = 0, so column j of W does not contribute
      for (int pass = 0; pass < 10000; ++pass) {
        double max_delta = 0.0;
        for (Eigen::Index l = 0; l < d; ++l) {
          if (l == j) continue;
          const double r = s(l, j) - (wb[l] - w(l, l) * b[l]);
          const double updated = soft_threshold(r, penalty) / w(l, l);
          const double delta = updated - b[l];
          if (delta != 0.0) {
            wb += delta * w.col(l);
            b[l] = updated;
            max_delta = std::max(max_delta, std::abs(delta));
          }
        }
        if (max_delta < 1e-12) break;
      }
      for (Eigen::Index l = 0; l < d; ++l) {
        if (l == j) continue;
        change += std::abs(wb[l] - w(l, j));
        w(l, j) = wb[l];
        w(j, l) = wb[l];
      }
    }
    if (!std::isfinite(change)) throw GlassoError("glasso: working covariance diverged", std::nan(""));
    if (change / static_cast<double>(d * (d - 1)) < opts.tol) {
      theta = precision_from_regressions(w, beta);
      if (kkt_residual(s, theta, penalty) <= opts.kkt_tol) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) theta = precision_from_regressions(w, beta);

  out.theta = theta;
  out.sweeps = sweep;
  out.gap = (s * theta).trace() - static_cast<double>(d) + penalty * offdiag_l1(theta);
  if (!converged) {
    throw GlassoError("glasso: no convergence after " + std::to_string(sweep) + " sweeps, gap " +
                          std::to_string(out.gap),
                      out.gap);
  }
  bool ok = false;
  out.sigma = spd_inverse(theta, &ok);
  if (!ok) throw GlassoError("glasso: precision estimate is not positive definite", out.gap);
  return out;
}

std::vector<Eigen::MatrixXd> weighted_scatter(const Eigen::MatrixXd& data, const Posteriors& post,
                                              const LatentMoments& mom,
                                              const std::vector<Eigen::VectorXd>& mu) {
  const int K = post.num_states();
  if (post.length() != data.rows() || mom.u.rows() != data.rows() || mom.u.cols() != K ||
      static_cast<int>(mu.size()) != K) {
    throw std::invalid_argument("weighted_scatter: dimension mismatch");
  }
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < K; ++k) {
    if (mu[k].size() != data.cols()) throw std::invalid_argument("weighted_scatter: dimension mismatch");
    const Eigen::VectorXd w = post.gamma.col(k).cwiseProduct(mom.u.col(k));
    const Eigen::MatrixXd centred = data.rowwise() - mu[k].transpose();
    Eigen::MatrixXd s = centred.transpose() * w.asDiagonal() * centred;
    out.push_back(0.5 * (s + s.transpose()));
  }
  return out;
}

PenalizedStep penalized_cm_step2(const Eigen::MatrixXd& data, const Posteriors& post,
                                 const LatentMoments& mom, const PenaltySpec& spec,
                                 const HmghgmModel* previous, const GlassoOptions& opts) {
  const int K = post.num_states();
  spec.validate(K);
  const std::vector<double> nu = spec.weights(post);
  PenalizedStep out;
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd w = post.gamma.col(k).cwiseProduct(mom.u.col(k));
    const double n_k = post.gamma.col(k).sum();
    if (!(n_k > 1e-10) || !(w.sum() > 0.0)) throw FitError("state has zero effective sample", k);
    out.mu.push_back((data.transpose() * w) / w.sum());
  }
  const std::vector<Eigen::MatrixXd> scatter = weighted_scatter(data, post, mom, out.mu);
  for (int k = 0; k < K; ++k) {
    const double n_k = post.gamma.col(k).sum();
    const double penalty = 2.0 * spec.objective_rho(post.length()) * std::sqrt(nu[k]) / n_k;
    const Eigen::MatrixXd* warm = nullptr;
    if (previous != nullptr && previous->num_states() == K && previous->dim() == data.cols()) {
      warm = &previous->emissions[k].sigma();
    }
    GlassoResult g;
    try {
      g = glasso(scatter[k] / n_k, penalty, opts, warm);
    } catch (const GlassoError& e) {
      throw FitError(std::string(e.what()) + " (state " + std::to_string(k) + ")", k);
    } catch (const std::invalid_argument& e) {
      throw FitError(std::string(e.what()) + " (state " + std::to_string(k) + ")", k);
    }
    if (spec.renormalize_det) {
      const double d = static_cast<double>(data.cols());
      Eigen::LLT<Eigen::MatrixXd> llt(g.theta);
      const Eigen::MatrixXd l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      const double c = std::exp(-log_det / d);
      g.theta *= c;
      g.sigma /= c;
    }
    out.theta.push_back(std::move(g.theta));
    out.sigma.push_back(std::move(g.sigma));
  }
  return out;
}

EdgeSet edge_set(const Eigen::MatrixXd& theta) {
  EdgeSet edges;
  for (int i = 0; i < theta.rows(); ++i) {
    for (int l = i + 1; l < theta.cols(); ++l) {
      if (theta(i, l) != 0.0 || theta(l, i) != 0.0) edges.emplace(i, l);
    }
  }
  return edges;
}

EcmeHooks penalized_hooks(const PenaltySpec& spec, const GlassoOptions& opts) {
  EcmeHooks hooks;
  hooks.location_scale_step = [spec, opts](const Eigen::MatrixXd& data, const Posteriors& post,
                                           const LatentMoments& mom, const HmghgmModel& model) {
    PenalizedStep step = penalized_cm_step2(data, post, mom, spec, &model, opts);
    std::vector<GhParams> out;
    for (int k = 0; k < model.num_states(); ++k) {
      out.push_back(GhParams::from_precision(std::move(step.mu[k]), step.theta[k], model.emissions[k].shape()));
    }
    return out;
  };
  hooks.penalty = [spec](const HmghgmModel& model, const Posteriors& post) {
    if (spec.rho == 0.0) return 0.0;
    const std::vector<double> nu = spec.weights(post);
    double total = 0.0;
    for (int k = 0; k < model.num_states(); ++k) {
      total += spec.objective_rho(post.length()) * std::sqrt(nu[k]) * offdiag_l1(model.emissions[k].theta());
    }
    return total;
  };
  return hooks;
}

namespace {

PenalizedFit with_edges(FitResult result) {
  PenalizedFit out;
  for (const auto& e : result.model.emissions) out.edges.push_back(edge_set(e.theta()));
  out.result = std::move(result);
  return out;
}

}  // namespace

PenalizedFit fit_penalized(const Eigen::MatrixXd& data, int K, const PenaltySpec& spec,
                           const FitConfig& cfg, const GlassoOptions& opts) {
  spec.validate(K);
  return with_edges(fit_multistart(data, K, cfg, penalized_hooks(spec, opts)));
}

PenalizedFit fit_penalized_from(const Eigen::MatrixXd& data, HmghgmModel start,
                                const PenaltySpec& spec, const FitConfig& cfg,
                                const GlassoOptions& opts) {
  spec.validate(start.num_states());
  return with_edges(run_ecme(data, std::move(start), cfg, penalized_hooks(spec, opts)));
}

std::vector<PenalizedFit> fit_penalized_path(const Eigen::MatrixXd& data, int K,
                                             const std::vector<double>& rhos,
                                             const PenaltySpec& base, const FitConfig& cfg,
                                             const GlassoOptions& opts) {
  if (rhos.empty()) throw std::invalid_argument("empty rho grid");
  if (!std::is_sorted(rhos.begin(), rhos.end())) throw std::invalid_argument("rho grid must be increasing");
  std::vector<PenalizedFit> out;
  PenaltySpec spec = base;
  spec.rho = rhos.front();
  out.push_back(fit_penalized(data, K, spec, cfg, opts));
  for (std::size_t i = 1; i < rhos.size(); ++i) {
    spec.rho = rhos[i];
    PenalizedFit next = fit_penalized_from(data, out.back().result.model, spec, cfg, opts);
    next.result.diagnostics.start_index = out.back().result.diagnostics.start_index;
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<double> rho_grid(double lo, double hi, int n, GridShape shape) {
  if (n < 1 || !(lo >= 0.0) || !(hi >= lo)) throw std::invalid_argument("bad rho grid");
  if (shape == GridShape::log_spaced && !(lo > 0.0)) throw std::invalid_argument("log grid needs lo > 0");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    out[i] = shape == GridShape::log_spaced ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo);
  }
  if (n > 1) out.back() = hi;
  return out;
}

}  // namespace hmghgm
