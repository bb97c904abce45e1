#include "hmghgm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hmghgm {

int degrees_of_freedom(const Eigen::MatrixXd& theta, DfMode mode) {
  const auto d = theta.rows();
  int count = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index l = 0; l < i; ++l) count += theta(i, l) != 0.0 ? 1 : 0;
    if (mode == DfMode::as_printed) count += theta(i, i) != 0.0 ? 1 : 0;
  }
  return static_cast<int>(d) + count;
}

int SelectionScore::df_total() const { return std::accumulate(df.begin(), df.end(), 0); }

SelectionScore score(double loglik, int T, int K, const std::vector<int>& df, const std::vector<double>& nu,
                     double rho) {
  if (T < 2) throw std::invalid_argument("score: T must be at least 2");
  if (K < 1 || static_cast<int>(df.size()) != K || static_cast<int>(nu.size()) != K) {
    throw std::invalid_argument("score: df and nu need one entry per state");
  }
  const double log_t = std::log(static_cast<double>(T));
  SelectionScore s;
  s.K = K;
  s.rho = rho;
  s.loglik = loglik;
  s.df = df;
  const double chain_term = 0.5 * log_t * K * (K - 1);
  s.bic = -loglik + chain_term;
  s.mmdl = -loglik + chain_term;
  for (int k = 0; k < K; ++k) {
    if (!(nu[k] > 0.0)) throw std::invalid_argument("score: nu must be positive");
    s.bic += 0.5 * log_t * df[k];
    s.mmdl += 0.5 * std::log(static_cast<double>(T) * nu[k]) * df[k];
  }
  return s;
}

Selection select(const std::vector<SelectionScore>& grid, Criterion criterion) {
  if (grid.empty()) throw std::invalid_argument("select: empty grid");
  auto value = [criterion](const SelectionScore& s) { return criterion == Criterion::bic ? s.bic : s.mmdl; };
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double a = value(grid[i]);
    const double b = value(grid[best]);
    if (a < b || (a == b && (grid[i].K < grid[best].K ||
                             (grid[i].K == grid[best].K && grid[i].rho < grid[best].rho)))) {
      best = i;
    }
  }
  return {best, grid[best].K, grid[best].rho, criterion};
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand_index: length mismatch");
  if (a.empty()) throw std::invalid_argument("adjusted_rand_index: empty partitions");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double n) { return 0.5 * n * (n - 1.0); };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, n] : joint) index += pairs(n);
  for (const auto& [key, n] : rows) sum_a += pairs(n);
  for (const auto& [key, n] : cols) sum_b += pairs(n);
  const double expected = sum_a * sum_b / pairs(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

EdgeRecovery edge_recovery(const Eigen::MatrixXd& theta_true, const Eigen::MatrixXd& theta_est) {
  if (theta_true.rows() != theta_est.rows() || theta_true.cols() != theta_est.cols() ||
      theta_true.rows() != theta_true.cols()) {
    throw std::invalid_argument("edge_recovery: matrices must be square and of equal size");
  }
  EdgeRecovery r;
  r.true_edges = edge_set(theta_true);
  r.estimated_edges = edge_set(theta_est);
  const auto d = static_cast<int>(theta_true.rows());
  for (int i = 0; i < d; ++i) {
    for (int l = i + 1; l < d; ++l) {
      const bool t = r.true_edges.count({i, l}) > 0;
      const bool e = r.estimated_edges.count({i, l}) > 0;
      if (t && e) ++r.true_positives;
      if (!t && e) ++r.false_positives;
      if (t && !e) ++r.false_negatives;
      if (!t && !e) ++r.true_negatives;
    }
  }
  const int pos = r.true_positives + r.false_negatives;
  const int neg = r.false_positives + r.true_negatives;
  r.tpr = pos > 0 ? static_cast<double>(r.true_positives) / pos : 0.0;
  r.fpr = neg > 0 ? static_cast<double>(r.false_positives) / neg : 0.0;
  return r;
}

Eigen::MatrixXd random_sparse_precision(int d, std::uint64_t seed) {
  if (d < 2) throw std::invalid_argument("random_sparse_precision: d must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int l = 0; l < i; ++l) {
      const double r = unif(rng);
      const double v = r < 0.15 ? -1.0 : (r < 0.85 ? 0.0 : 1.0);
      theta(i, l) = v;
      theta(l, i) = v;
    }
  }
  for (int i = 0; i < d; ++i) {
    int nonzero = 0;
    for (int l = 0; l < d; ++l) nonzero += (l != i && theta(i, l) != 0.0) ? 1 : 0;
    theta(i, i) = 1.0 + nonzero;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(theta, Eigen::EigenvaluesOnly);
  theta.diagonal().array() += 0.6 - eig.eigenvalues().minCoeff();
  return theta;
}

std::vector<int> match_labels(const std::vector<int>& truth, const std::vector<int>& estimate, int K) {
  if (truth.size() != estimate.size()) throw std::invalid_argument("match_labels: length mismatch");
  if (K < 1 || K > 9) throw std::invalid_argument("match_labels: K must be in [1, 9]");
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(K, K);  // (true, estimated)
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (truth[t] < 0 || truth[t] >= K || estimate[t] < 0 || estimate[t] >= K) {
      throw std::invalid_argument("match_labels: label out of range");
    }
    overlap(truth[t], estimate[t]) += 1.0;
  }
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_score = -1.0;
  do {
    double s = 0.0;
    for (int i = 0; i < K; ++i) s += overlap(i, perm[i]);
    if (s > best_score) {
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<RocPoint> average_roc(const std::vector<std::vector<RocPoint>>& curves) {
  if (curves.empty()) throw std::invalid_argument("average_roc: no curves");
  const std::size_t n = curves.front().size();
  std::vector<RocPoint> out(n);
  for (const auto& c : curves) {
    if (c.size() != n) throw std::invalid_argument("average_roc: curves differ in length");
    for (std::size_t i = 0; i < n; ++i) {
      out[i].fpr += c[i].fpr / static_cast<double>(curves.size());
      out[i].tpr += c[i].tpr / static_cast<double>(curves.size());
    }
  }
  return out;
}

double roc_auc(std::vector<RocPoint> points) {
  points.push_back({0.0, 0.0});
  points.push_back({1.0, 1.0});
  std::sort(points.begin(), points.end(), [](const RocPoint& a, const RocPoint& b) {
    return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
  });
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  }
  return area;
}

}  // namespace hmghgm
