#pragma once

// Latent Markov chain machinery: forward-backward smoothing, Viterbi and
// local decoding. Everything runs on log emission densities.

#include <vector>

#include <Eigen/Dense>

namespace hmghgm {

struct ChainParams {
  Eigen::VectorXd pi;     // initial distribution, length K
  Eigen::MatrixXd trans;  // trans(j, k) = P(S_{t+1} = k | S_t = j)

  int num_states() const { return static_cast<int>(pi.size()); }
  /// Throws std::invalid_argument unless pi and every row of trans are
  /// probability vectors (to 1e-12).
  void validate() const;
};

struct Posteriors {
  Eigen::MatrixXd gamma;         // T x K
  std::vector<Eigen::MatrixXd> xi;  // T-1 matrices, xi[t](j, k) = P(S_t = j, S_{t+1} = k | y)
  double loglik = 0.0;           // from the forward pass
  double loglik_backward = 0.0;  // same quantity from the backward pass

  int length() const { return static_cast<int>(gamma.rows()); }
  int num_states() const { return static_cast<int>(gamma.cols()); }
};

/// Throws std::invalid_argument on non-finite emissions, mismatched shapes or
/// an observation sequence with zero probability under the chain.
Posteriors forward_backward(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// Observed-data log-likelihood (forward pass only).
double forward_loglik(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// Joint MAP path. Ties resolve to the lowest state index.
std::vector<int> viterbi(const Eigen::MatrixXd& log_emissions, const ChainParams& chain);

/// Row-wise argmax of gamma; ties resolve to the lowest state index.
std::vector<int> local_decode(const Posteriors& post);

/// log P(S = path, Y = y).
double path_log_prob(const std::vector<int>& path, const Eigen::MatrixXd& log_emissions,
                     const ChainParams& chain);

}  // namespace hmghgm
