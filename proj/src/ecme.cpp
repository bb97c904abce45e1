#include "hmghgm/ecme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "hmghgm/optim.hpp"
#include "hmghgm/parallel.hpp"
#include "hmghgm/special_fn.hpp"

namespace hmghgm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_data(const Eigen::MatrixXd& data, const HmghgmModel& model) {
  if (model.num_states() < 1) throw std::invalid_argument("model has no states");
  if (data.cols() != model.dim()) throw std::invalid_argument("data dimension does not match model");
  if (model.chain.num_states() != model.num_states()) {
    throw std::invalid_argument("chain size does not match number of emission states");
  }
  if (!data.allFinite()) throw std::invalid_argument("data contains non-finite values");
}

// Log densities of one state and, optionally, the posterior moments of W.
// Shares the Bessel evaluations between the density and the moments.
void evaluate_state(const Eigen::MatrixXd& data, const GhParams& p, int k, Eigen::MatrixXd& le,
                    LatentMoments* mom) {
  const Eigen::VectorXd delta = mahalanobis_sq_rows(data, p);
  if (mom == nullptr) {
    le.col(k) = gh_logpdf_from_delta(delta, p);
    return;
  }
  const double chi = p.chi();
  const double psi = p.psi();
  const double log_psi = std::log(psi);
  const double nu = p.lambda() - 0.5 * p.dim();
  const double base = gh_log_normalizer(p);
  for (Eigen::Index t = 0; t < delta.size(); ++t) {
    const double log_q = std::log(chi + delta[t]);
    const double x = std::exp(0.5 * (log_q + log_psi));
    const LogBesselTriple tri = log_bessel_k_triple(nu, x);
    const double log_eta = 0.5 * (log_q - log_psi);
    le(t, k) = base + nu * log_eta + tri.centre;
    mom->v(t, k) = std::exp(log_eta + tri.upper - tri.centre);
    mom->u(t, k) = std::exp(-log_eta + tri.lower - tri.centre);
    mom->z(t, k) = log_eta + dlog_bessel_k_dnu(nu, x);
  }
  if (!mom->v.col(k).allFinite() || !mom->u.col(k).allFinite() || !mom->z.col(k).allFinite()) {
    throw FitError("non-finite latent moment", k);
  }
}

Eigen::MatrixXd emissions_and_moments(const Eigen::MatrixXd& data, const HmghgmModel& model,
                                      LatentMoments* mom) {
  const auto T = data.rows();
  const int K = model.num_states();
  Eigen::MatrixXd le(T, K);
  if (mom != nullptr) {
    mom->v.resize(T, K);
    mom->u.resize(T, K);
    mom->z.resize(T, K);
  }
  for (int k = 0; k < K; ++k) evaluate_state(data, model.emissions[k], k, le, mom);
  return le;
}

ShapeParams shape_from_vector(const Eigen::Vector3d& x) {
  return {x[0], std::exp(x[1]), std::exp(x[2])};
}

// Observed-data log-likelihood as a function of one state's shape. The other
// columns of the emission matrix and the Mahalanobis distances are cached.
class ObservedShapeObjective {
 public:
  ObservedShapeObjective(const Eigen::MatrixXd& data, const HmghgmModel& model, int state)
      : le_(log_emissions(data, model)),
        delta_(mahalanobis_sq_rows(data, model.emissions[state])),
        params_(model.emissions[state]),
        chain_(model.chain),
        state_(state) {}

  double operator()(const ShapeParams& s) {
    le_.col(state_) = gh_logpdf_from_delta(delta_, params_.with_shape(s));
    if (!le_.col(state_).allFinite()) return kNegInf;
    try {
      return forward_loglik(le_, chain_);
    } catch (const std::exception&) {
      return kNegInf;
    }
  }

 private:
  Eigen::MatrixXd le_;
  Eigen::VectorXd delta_;
  GhParams params_;
  ChainParams chain_;
  int state_;
};

// Shape part of the expected complete-data log-likelihood, summarised by the
// posterior-weighted sums of 1, log W, 1/W and W.
class CompleteShapeObjective {
 public:
  CompleteShapeObjective(const Posteriors& post, const LatentMoments& mom, int state) {
    const auto g = post.gamma.col(state);
    n_ = g.sum();
    z_ = g.dot(mom.z.col(state));
    u_ = g.dot(mom.u.col(state));
    v_ = g.dot(mom.v.col(state));
  }

  double operator()(const ShapeParams& s) const {
    const double value = (s.lambda - 1.0) * z_ - 0.5 * s.chi * u_ - 0.5 * s.psi * v_ +
                         n_ * (0.5 * s.lambda * (std::log(s.psi) - std::log(s.chi)) -
                               std::log(2.0) - log_bessel_k(s.lambda, std::sqrt(s.chi * s.psi)));
    return std::isfinite(value) ? value : kNegInf;
  }

 private:
  double n_ = 0.0, z_ = 0.0, u_ = 0.0, v_ = 0.0;
};

}  // namespace

bool ShapeBounds::contains(const ShapeParams& s) const {
  const double lc = std::log(s.chi);
  const double lp = std::log(s.psi);
  return s.lambda >= lambda_lo && s.lambda <= lambda_hi && lc >= log_chi_lo && lc <= log_chi_hi &&
         lp >= log_psi_lo && lp <= log_psi_hi;
}

ShapeParams ShapeBounds::project(const ShapeParams& s) const {
  return {std::clamp(s.lambda, lambda_lo, lambda_hi),
          std::exp(std::clamp(std::log(s.chi), log_chi_lo, log_chi_hi)),
          std::exp(std::clamp(std::log(s.psi), log_psi_lo, log_psi_hi))};
}

void FitConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 0) throw std::invalid_argument("max_iter must be non-negative");
  if (n_starts < 1) throw std::invalid_argument("n_starts must be at least 1");
  if (shape_max_evals < 1) throw std::invalid_argument("shape_max_evals must be at least 1");
  if (!(shape_ftol > 0.0) || !(shape_xtol > 0.0)) throw std::invalid_argument("shape tolerances must be positive");
  if (!(shape_bounds.lambda_lo < shape_bounds.lambda_hi) ||
      !(shape_bounds.log_chi_lo < shape_bounds.log_chi_hi) ||
      !(shape_bounds.log_psi_lo < shape_bounds.log_psi_hi)) {
    throw std::invalid_argument("empty shape bounds");
  }
}

Eigen::MatrixXd log_emissions(const Eigen::MatrixXd& data, const HmghgmModel& model) {
  check_data(data, model);
  return emissions_and_moments(data, model, nullptr);
}

double observed_loglik(const Eigen::MatrixXd& data, const HmghgmModel& model) {
  return forward_loglik(log_emissions(data, model), model.chain);
}

LatentMoments e_step_moments(const Eigen::MatrixXd& data, const HmghgmModel& model) {
  check_data(data, model);
  LatentMoments mom;
  emissions_and_moments(data, model, &mom);
  return mom;
}

ChainParams cm_step1(const Posteriors& post, std::vector<int>* empty_states) {
  const int K = post.num_states();
  ChainParams chain;
  chain.pi = post.gamma.row(0).transpose();
  chain.pi /= chain.pi.sum();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(K, K);
  for (const auto& x : post.xi) counts += x;
  chain.trans.resize(K, K);
  for (int j = 0; j < K; ++j) {
    const double total = counts.row(j).sum();
    if (total > 0.0 && std::isfinite(total)) {
      chain.trans.row(j) = counts.row(j) / total;
    } else {
      chain.trans.row(j).setConstant(1.0 / K);
      if (empty_states != nullptr) empty_states->push_back(j);
    }
  }
  return chain;
}

LocationScale cm_step2(const Eigen::MatrixXd& data, const Posteriors& post, const LatentMoments& mom) {
  const int K = post.num_states();
  LocationScale out;
  for (int k = 0; k < K; ++k) {
    const double n_k = post.gamma.col(k).sum();
    const Eigen::VectorXd w = post.gamma.col(k).cwiseProduct(mom.u.col(k));
    const double w_sum = w.sum();
    if (!(n_k > 1e-10) || !(w_sum > 0.0)) throw FitError("state has zero effective sample", k);
    Eigen::VectorXd mu = (data.transpose() * w) / w_sum;
    const Eigen::MatrixXd centred = data.rowwise() - mu.transpose();
    Eigen::MatrixXd s = centred.transpose() * w.asDiagonal() * centred / n_k;
    s = 0.5 * (s + s.transpose());
    Eigen::MatrixXd sigma;
    try {
      sigma = normalize_scale(s);
    } catch (const std::domain_error&) {
      throw FitError("weighted scatter is not positive definite", k);
    }
    out.mu.push_back(std::move(mu));
    out.sigma_star.push_back(std::move(s));
    out.sigma.push_back(std::move(sigma));
  }
  return out;
}

double shape_objective(const Eigen::MatrixXd& data, const HmghgmModel& model, int state,
                       const ShapeParams& shape, ShapeTarget target, const Posteriors* post,
                       const LatentMoments* mom) {
  if (state < 0 || state >= model.num_states()) throw std::invalid_argument("state out of range");
  if (target == ShapeTarget::observed_loglik) {
    ObservedShapeObjective f(data, model, state);
    return f(shape);
  }
  if (post == nullptr || mom == nullptr) {
    throw std::invalid_argument("expected_complete target needs posteriors and moments");
  }
  return CompleteShapeObjective(*post, *mom, state)(shape);
}

ShapeUpdate cm_step3(const Eigen::MatrixXd& data, const HmghgmModel& model, int state,
                     const FitConfig& cfg, const Posteriors* post, const LatentMoments* mom,
                     const Eigen::Vector3d* initial_step) {
  if (state < 0 || state >= model.num_states()) throw std::invalid_argument("state out of range");
  std::function<double(const ShapeParams&)> objective;
  if (cfg.shape_target == ShapeTarget::observed_loglik) {
    auto f = std::make_shared<ObservedShapeObjective>(data, model, state);
    objective = [f](const ShapeParams& s) { return (*f)(s); };
  } else {
    if (post == nullptr || mom == nullptr) {
      throw std::invalid_argument("expected_complete target needs posteriors and moments");
    }
    CompleteShapeObjective f(*post, *mom, state);
    objective = [f](const ShapeParams& s) { return f(s); };
  }

  const ShapeParams incumbent = model.emissions[state].shape();
  ShapeUpdate out;
  out.shape = incumbent;
  out.incumbent_objective = objective(incumbent);
  out.objective = out.incumbent_objective;

  // The simplex works on logit-transformed coordinates of the box, so optima
  // on a bound are approached smoothly instead of through infinite walls.
  const ShapeBounds& b = cfg.shape_bounds;
  const Eigen::Vector3d lo(b.lambda_lo, b.log_chi_lo, b.log_psi_lo);
  const Eigen::Vector3d hi(b.lambda_hi, b.log_chi_hi, b.log_psi_hi);
  auto to_box = [&](const Eigen::VectorXd& x) {
    Eigen::Vector3d y;
    for (int i = 0; i < 3; ++i) y[i] = lo[i] + (hi[i] - lo[i]) / (1.0 + std::exp(-x[i]));
    return y;
  };
  auto from_box = [&](const Eigen::Vector3d& y) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) {
      const double f = std::clamp((y[i] - lo[i]) / (hi[i] - lo[i]), 1e-12, 1.0 - 1e-12);
      x[i] = std::log(f / (1.0 - f));
    }
    return x;
  };
  auto fn = [&](const Eigen::VectorXd& x) { return -objective(shape_from_vector(to_box(x))); };
  const ShapeParams start = b.project(incumbent);
  const Eigen::Vector3d y0(start.lambda, std::log(start.chi), std::log(start.psi));
  const Eigen::VectorXd x0 = from_box(y0);
  const Eigen::Vector3d step = initial_step != nullptr ? *initial_step : Eigen::Vector3d::Constant(0.25);

  NelderMeadResult r = nelder_mead(fn, x0, step, cfg.shape_max_evals, cfg.shape_ftol, cfg.shape_xtol);
  int used = r.evaluations;
  // One restart at the solution guards against a collapsed simplex.
  if (r.converged && used < cfg.shape_max_evals) {
    NelderMeadResult again =
        nelder_mead(fn, r.x, 0.1 * step, cfg.shape_max_evals - used, cfg.shape_ftol, cfg.shape_xtol);
    used += again.evaluations;
    if (again.value <= r.value) {
      r.x = again.x;
      r.value = again.value;
    }
  }
  out.evaluations = used + 1;
  out.warning = !r.converged;
  if (std::isfinite(r.value) && -r.value > out.incumbent_objective) {
    const Eigen::Vector3d y = to_box(r.x);
    out.shape = shape_from_vector(y);
    out.objective = -r.value;
    out.displacement = r.x - x0;
  }
  return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& data, int K, std::uint64_t seed) {
  const auto T = data.rows();
  if (K < 1) throw std::invalid_argument("kmeans: K must be positive");
  if (T < K) throw FitError("kmeans: fewer observations than clusters");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centroids(K, data.cols());
  std::vector<int> labels(static_cast<std::size_t>(T), 0);

  for (int attempt = 0; attempt < 10; ++attempt) {
    std::uniform_int_distribution<Eigen::Index> pick(0, T - 1);
    centroids.row(0) = data.row(pick(rng));
    Eigen::VectorXd d2 = (data.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < K; ++c) {
      const double total = d2.sum();
      Eigen::Index chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> unif(0.0, total);
        double target = unif(rng);
        for (chosen = 0; chosen < T - 1; ++chosen) {
          target -= d2[chosen];
          if (target < 0.0) break;
        }
      } else {
        chosen = pick(rng);
      }
      centroids.row(c) = data.row(chosen);
      d2 = d2.cwiseMin((data.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    bool empty = false;
    std::fill(labels.begin(), labels.end(), -1);
    for (int iter = 0; iter < 300; ++iter) {
      bool changed = false;
      for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::Index best = 0;
        (centroids.rowwise() - data.row(t)).rowwise().squaredNorm().minCoeff(&best);
        if (labels[t] != best) {
          labels[t] = static_cast<int>(best);
          changed = true;
        }
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, data.cols());
      std::vector<int> counts(K, 0);
      for (Eigen::Index t = 0; t < T; ++t) {
        sums.row(labels[t]) += data.row(t);
        ++counts[labels[t]];
      }
      empty = std::any_of(counts.begin(), counts.end(), [](int c) { return c == 0; });
      if (empty) break;
      for (int c = 0; c < K; ++c) centroids.row(c) = sums.row(c) / counts[c];
      if (!changed) break;
    }
    if (!empty) return {labels, centroids};
  }
  throw FitError("kmeans: empty cluster after 10 seedings");
}

HmghgmModel model_from_partition(const Eigen::MatrixXd& data, const std::vector<int>& labels, int K,
                                  std::uint64_t shape_seed) {
  const auto T = data.rows();
  const auto d = data.cols();
  if (static_cast<Eigen::Index>(labels.size()) != T) {
    throw std::invalid_argument("labels must have one entry per observation");
  }
  const Eigen::RowVectorXd grand = data.colwise().mean();
  const Eigen::MatrixXd all_centred = data.rowwise() - grand;
  const double total_var = std::max(all_centred.squaredNorm() / std::max<Eigen::Index>(T, 1) / d, 1e-12);

  std::mt19937_64 rng(shape_seed);
  std::uniform_real_distribution<double> lambda_dist(-2.0, 2.0);
  std::uniform_real_distribution<double> conc_dist(0.1, 4.0);

  HmghgmModel model;
  model.chain.pi = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (labels[t] < 0 || labels[t] >= K) throw std::invalid_argument("label out of range");
      if (labels[t] == k) idx.push_back(t);
    }
    if (idx.empty()) throw FitError("empty cluster in starting partition", k);
    Eigen::MatrixXd block(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t i = 0; i < idx.size(); ++i) block.row(static_cast<Eigen::Index>(i)) = data.row(idx[i]);
    Eigen::VectorXd mu = block.colwise().mean().transpose();
    const Eigen::MatrixXd centred = block.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(block.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-8) {
      cov += 1e-3 * total_var * Eigen::MatrixXd::Identity(d, d);
    }
    const ShapeParams shape{lambda_dist(rng), conc_dist(rng), conc_dist(rng)};
    model.emissions.push_back(GhParams::from_scale(std::move(mu), normalize_scale(cov), shape));
    model.chain.pi[k] = static_cast<double>(idx.size()) / static_cast<double>(T);
  }
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(K, K);
  for (Eigen::Index t = 0; t + 1 < T; ++t) counts(labels[t], labels[t + 1]) += 1.0;
  model.chain.trans.resize(K, K);
  for (int j = 0; j < K; ++j) {
    const double total = counts.row(j).sum();
    if (total > 0.0) {
      model.chain.trans.row(j) = counts.row(j) / total;
    } else {
      model.chain.trans.row(j).setConstant(1.0 / K);
    }
  }
  return model;
}

HmghgmModel initialize(const Eigen::MatrixXd& data, int K, std::uint64_t seed) {
  const KMeansResult km = kmeans(data, K, derive_seed(seed, 0));
  HmghgmModel model = model_from_partition(data, km.labels, K, derive_seed(seed, 1));
  for (int k = 0; k < K; ++k) {
    model.emissions[k] = GhParams::from_scale(km.centroids.row(k).transpose(), model.emissions[k].sigma(),
                                              model.emissions[k].shape());
  }
  return model;
}

FitResult run_ecme(const Eigen::MatrixXd& data, HmghgmModel start, const FitConfig& cfg,
                   const EcmeHooks& hooks) {
  cfg.validate();
  check_data(data, start);
  if (data.rows() < 2) throw std::invalid_argument("need at least two observations");
  start.chain.validate();

  const int K = start.num_states();
  HmghgmModel model = std::move(start);
  FitResult res;
  double previous = 0.0;
  // Simplex edge per state, shrunk to the size of the last accepted move so
  // that late iterations do not re-explore a wide neighbourhood.
  std::vector<Eigen::Vector3d> steps(static_cast<std::size_t>(K), Eigen::Vector3d::Constant(0.25));
  for (int iter = 0;; ++iter) {
    LatentMoments mom;
    const Eigen::MatrixXd le = emissions_and_moments(data, model, &mom);
    if (!le.allFinite()) throw FitError("non-finite emission density");
    Posteriors post = forward_backward(le, model.chain);
    const double penalty = hooks.penalty ? hooks.penalty(model, post) : 0.0;
    const double objective = post.loglik - penalty;
    res.loglik_trace.push_back(post.loglik);
    res.objective_trace.push_back(objective);
    res.model = model;
    res.posteriors = post;
    if (iter > 0 && std::abs(objective - previous) < cfg.tol) {
      res.diagnostics.converged = true;
      break;
    }
    if (iter >= cfg.max_iter) break;
    previous = objective;
    res.diagnostics.iterations = iter + 1;

    std::vector<int> empty;
    HmghgmModel next;
    next.chain = cm_step1(post, &empty);
    res.diagnostics.empty_state_events += static_cast<int>(empty.size());
    if (hooks.location_scale_step) {
      next.emissions = hooks.location_scale_step(data, post, mom, model);
    } else {
      const LocationScale ls = cm_step2(data, post, mom);
      for (int k = 0; k < K; ++k) {
        next.emissions.push_back(GhParams::from_scale(ls.mu[k], ls.sigma[k], model.emissions[k].shape()));
      }
    }
    for (int k = 0; k < K; ++k) {
      const ShapeUpdate upd = cm_step3(data, next, k, cfg, &post, &mom, &steps[k]);
      steps[k] = (2.0 * upd.displacement.cwiseAbs()).cwiseMax(1e-3).cwiseMin(0.5);
      if (upd.warning) ++res.diagnostics.shape_warnings;
      res.diagnostics.shape_evaluations += upd.evaluations;
      next.emissions[k] = next.emissions[k].with_shape(upd.shape);
    }
    model = std::move(next);
  }
  return res;
}

FitResult fit_multistart(const Eigen::MatrixXd& data, int K, const FitConfig& cfg,
                         const EcmeHooks& hooks) {
  cfg.validate();
  if (K < 1) throw std::invalid_argument("K must be positive");
  const auto n = static_cast<std::size_t>(cfg.n_starts);
  std::vector<FitResult> results(n);
  std::vector<std::string> errors(n);
  std::vector<char> ok(n, 0);
  parallel_for(
      n,
      [&](std::size_t s) {
        try {
          const std::uint64_t seed = derive_seed(cfg.seed, s);
          results[s] = run_ecme(data, initialize(data, K, seed), cfg, hooks);
          ok[s] = 1;
        } catch (const std::invalid_argument&) {
          throw;
        } catch (const std::exception& e) {
          errors[s] = e.what();
        }
      },
      cfg.threads);

  std::vector<double> objectives(n, std::numeric_limits<double>::quiet_NaN());
  int best = -1;
  for (std::size_t s = 0; s < n; ++s) {
    if (!ok[s]) continue;
    objectives[s] = results[s].final_objective();
    if (best < 0 || objectives[s] > objectives[static_cast<std::size_t>(best)]) best = static_cast<int>(s);
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "all " << n << " starts failed:";
    for (std::size_t s = 0; s < n; ++s) msg << " [" << s << "] " << errors[s] << ";";
    throw FitError(msg.str());
  }
  FitResult out = std::move(results[static_cast<std::size_t>(best)]);
  out.diagnostics.start_index = best;
  out.diagnostics.start_objectives = std::move(objectives);
  out.diagnostics.start_errors = std::move(errors);
  return out;
}

FitResult fit(const Eigen::MatrixXd& data, int K, const FitConfig& cfg) {
  return fit_multistart(data, K, cfg, {});
}

HmghgmModel permute_states(const HmghgmModel& model, const std::vector<int>& perm) {
  const int K = model.num_states();
  if (static_cast<int>(perm.size()) != K) throw std::invalid_argument("permutation has wrong size");
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < K; ++k) {
    if (sorted[k] != k) throw std::invalid_argument("not a permutation");
  }
  HmghgmModel out;
  out.chain.pi.resize(K);
  out.chain.trans.resize(K, K);
  for (int i = 0; i < K; ++i) {
    out.emissions.push_back(model.emissions[perm[i]]);
    out.chain.pi[i] = model.chain.pi[perm[i]];
    for (int j = 0; j < K; ++j) out.chain.trans(i, j) = model.chain.trans(perm[i], perm[j]);
  }
  return out;
}

}  // namespace hmghgm
