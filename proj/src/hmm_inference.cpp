#include "hmghgm/hmm_inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmghgm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

struct LogChain {
  Eigen::VectorXd log_pi;
  Eigen::MatrixXd log_trans;
};

LogChain to_log(const ChainParams& chain) {
  LogChain lc{chain.pi.unaryExpr(&log_or_neg_inf), chain.trans.unaryExpr(&log_or_neg_inf)};
  return lc;
}

void check_inputs(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  if (log_emissions.rows() < 1 || log_emissions.cols() < 1) {
    throw std::invalid_argument("HMM: need T >= 1 and K >= 1");
  }
  if (log_emissions.cols() != chain.num_states() || chain.trans.rows() != chain.num_states() ||
      chain.trans.cols() != chain.num_states()) {
    throw std::invalid_argument("HMM: emission columns do not match the number of states");
  }
  if (!log_emissions.allFinite()) throw std::invalid_argument("HMM: non-finite log emission");
}

// log(sum(exp(v))) with -inf entries allowed.
template <class Vec>
double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  // std::exp rather than Eigen's vectorised exp, which maps -inf to a
  // denormal instead of 0.
  return m + std::log((v.array() - m).unaryExpr([](double x) { return std::exp(x); }).sum());
}

Eigen::MatrixXd forward_pass(const Eigen::MatrixXd& le, const LogChain& lc) {
  const Eigen::Index T = le.rows();
  const Eigen::Index K = le.cols();
  Eigen::MatrixXd la(T, K);
  la.row(0) = lc.log_pi.transpose() + le.row(0);
  Eigen::VectorXd tmp(K);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k) {
      tmp = la.row(t - 1).transpose() + lc.log_trans.col(k);
      la(t, k) = le(t, k) + log_sum_exp(tmp);
    }
  }
  return la;
}

}  // namespace

void ChainParams::validate() const {
  const auto K = pi.size();
  if (K < 1 || trans.rows() != K || trans.cols() != K) {
    throw std::invalid_argument("ChainParams: inconsistent sizes");
  }
  if ((pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("ChainParams: pi is not a probability vector");
  }
  for (Eigen::Index j = 0; j < K; ++j) {
    if ((trans.row(j).array() < 0.0).any() || std::abs(trans.row(j).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("ChainParams: transition row is not stochastic");
    }
  }
}

Posteriors forward_backward(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_inputs(log_emissions, chain);
  const LogChain lc = to_log(chain);
  const Eigen::Index T = log_emissions.rows();
  const Eigen::Index K = log_emissions.cols();
  const Eigen::MatrixXd la = forward_pass(log_emissions, lc);

  Eigen::MatrixXd lb = Eigen::MatrixXd::Zero(T, K);
  Eigen::VectorXd tmp(K);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd next = log_emissions.row(t + 1).transpose() + lb.row(t + 1).transpose();
    for (Eigen::Index j = 0; j < K; ++j) {
      tmp = lc.log_trans.row(j).transpose() + next;
      lb(t, j) = log_sum_exp(tmp);
    }
  }

  Posteriors post;
  post.loglik = log_sum_exp(la.row(T - 1).transpose());
  tmp = lc.log_pi + log_emissions.row(0).transpose() + lb.row(0).transpose();
  post.loglik_backward = log_sum_exp(tmp);
  if (!std::isfinite(post.loglik)) {
    throw std::invalid_argument("HMM: observation sequence has zero probability");
  }

  post.gamma.resize(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::RowVectorXd row = (la.row(t) + lb.row(t)).array() - post.loglik;
    row = row.unaryExpr([](double x) { return std::exp(x); });  // exact zeros for -inf
    post.gamma.row(t) = row / row.sum();
  }

  post.xi.assign(static_cast<std::size_t>(T > 0 ? T - 1 : 0), Eigen::MatrixXd(K, K));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd& x = post.xi[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < K; ++j) {
      for (Eigen::Index k = 0; k < K; ++k) {
        const double v = la(t, j) + lc.log_trans(j, k) + log_emissions(t + 1, k) + lb(t + 1, k) -
                         post.loglik;
        x(j, k) = v == kNegInf ? 0.0 : std::exp(v);
      }
    }
    x /= x.sum();
  }
  return post;
}

double forward_loglik(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_inputs(log_emissions, chain);
  const LogChain lc = to_log(chain);
  const Eigen::Index T = log_emissions.rows();
  const Eigen::Index K = log_emissions.cols();
  Eigen::VectorXd prev = lc.log_pi + log_emissions.row(0).transpose();
  Eigen::VectorXd cur(K);
  Eigen::VectorXd tmp(K);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k) {
      tmp = prev + lc.log_trans.col(k);
      cur[k] = log_emissions(t, k) + log_sum_exp(tmp);
    }
    prev.swap(cur);
  }
  return log_sum_exp(prev);
}

std::vector<int> viterbi(const Eigen::MatrixXd& log_emissions, const ChainParams& chain) {
  check_inputs(log_emissions, chain);
  const LogChain lc = to_log(chain);
  const Eigen::Index T = log_emissions.rows();
  const Eigen::Index K = log_emissions.cols();
  Eigen::MatrixXd delta(T, K);
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(T, K);
  delta.row(0) = lc.log_pi.transpose() + log_emissions.row(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k) {
      double best = kNegInf;
      int arg = 0;
      for (Eigen::Index j = 0; j < K; ++j) {
        const double v = delta(t - 1, j) + lc.log_trans(j, k);
        if (v > best) {
          best = v;
          arg = static_cast<int>(j);
        }
      }
      delta(t, k) = best + log_emissions(t, k);
      back(t, k) = arg;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(T));
  int last = 0;
  for (Eigen::Index k = 1; k < K; ++k) {
    if (delta(T - 1, k) > delta(T - 1, last)) last = static_cast<int>(k);
  }
  if (delta(T - 1, last) == kNegInf) {
    throw std::invalid_argument("HMM: observation sequence has zero probability");
  }
  path[static_cast<std::size_t>(T - 1)] = last;
  for (Eigen::Index t = T - 1; t > 0; --t) {
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  }
  return path;
}

std::vector<int> local_decode(const Posteriors& post) {
  std::vector<int> out(static_cast<std::size_t>(post.gamma.rows()));
  for (Eigen::Index t = 0; t < post.gamma.rows(); ++t) {
    int best = 0;
    for (Eigen::Index k = 1; k < post.gamma.cols(); ++k) {
      if (post.gamma(t, k) > post.gamma(t, best)) best = static_cast<int>(k);
    }
    out[static_cast<std::size_t>(t)] = best;
  }
  return out;
}

double path_log_prob(const std::vector<int>& path, const Eigen::MatrixXd& log_emissions,
                     const ChainParams& chain) {
  check_inputs(log_emissions, chain);
  if (path.size() != static_cast<std::size_t>(log_emissions.rows())) {
    throw std::invalid_argument("path_log_prob: path length mismatch");
  }
  double lp = log_or_neg_inf(chain.pi[path[0]]) + log_emissions(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) {
    lp += log_or_neg_inf(chain.trans(path[t - 1], path[t])) +
          log_emissions(static_cast<Eigen::Index>(t), path[t]);
  }
  return lp;
}

}  // namespace hmghgm
