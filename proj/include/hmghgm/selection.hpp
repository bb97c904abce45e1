#pragma once

// Model selection criteria, clustering and edge-recovery metrics, and the
// random sparse precision generator used in the graph-recovery experiments.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hmghgm/sparse.hpp"

namespace hmghgm {

enum class DfMode {
  as_printed,    // d + nonzeros on and below the diagonal
  strict_lower,  // d + nonzeros strictly below the diagonal
};

int degrees_of_freedom(const Eigen::MatrixXd& theta, DfMode mode = DfMode::as_printed);

struct SelectionScore {
  int K = 0;
  double rho = 0.0;
  double loglik = 0.0;
  std::vector<int> df;
  double bic = 0.0;
  double mmdl = 0.0;

  int df_total() const;
};

/// BIC = -loglik + log(T) K(K-1)/2 + log(T)/2 sum_k df_k
/// MMDL = -loglik + log(T) K(K-1)/2 + sum_k log(T nu_k)/2 df_k
/// Lower is better. Throws std::invalid_argument for T < 2, size mismatch or
/// non-positive nu.
SelectionScore score(double loglik, int T, int K, const std::vector<int>& df,
                     const std::vector<double>& nu, double rho = 0.0);

enum class Criterion { bic, mmdl };

struct Selection {
  std::size_t index = 0;
  int K = 0;
  double rho = 0.0;
  Criterion criterion = Criterion::bic;
};

/// Argmin of the criterion; ties go to the smaller K, then the smaller rho.
/// Throws std::invalid_argument on an empty grid.
Selection select(const std::vector<SelectionScore>& grid, Criterion criterion);

/// Adjusted Rand index of two labelings. Throws std::invalid_argument on a
/// length mismatch. Two single-block partitions score 1.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct EdgeRecovery {
  double tpr = 0.0;
  double fpr = 0.0;
  EdgeSet true_edges;
  EdgeSet estimated_edges;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int true_negatives = 0;
};

/// Confusion counts over unordered pairs i < l. TPR is 0 when the truth has
/// no edges and FPR is 0 when it is complete.
EdgeRecovery edge_recovery(const Eigen::MatrixXd& theta_true, const Eigen::MatrixXd& theta_est);

/// Lower-triangular entries drawn from {-1, 0, 1} with probabilities
/// 0.15/0.70/0.15, diagonal 1 + row nonzero count, then the diagonal shifted
/// so that the smallest eigenvalue is 0.6.
Eigen::MatrixXd random_sparse_precision(int d, std::uint64_t seed);

/// Permutation perm with estimated state perm[i] matched to true state i,
/// maximising the number of time points on which the labels agree.
std::vector<int> match_labels(const std::vector<int>& truth, const std::vector<int>& estimate, int K);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Pointwise average over curves that share the same rho grid.
std::vector<RocPoint> average_roc(const std::vector<std::vector<RocPoint>>& curves);

/// Trapezoidal area under the ROC polyline through (0,0), the points sorted
/// by FPR, and (1,1).
double roc_auc(std::vector<RocPoint> points);

}  // namespace hmghgm
