#pragma once

// Monte Carlo harness for the three simulation scenarios: simulate, fit,
// align labels with the truth and score the fit.

#include <cstdint>
#include <string>
#include <vector>

#include "hmghgm/ecme.hpp"
#include "hmghgm/selection.hpp"
#include "hmghgm/simulate.hpp"
#include "hmghgm/sparse.hpp"

namespace hmghgm {

struct MonteCarloConfig {
  int scenario = 1;
  Preset preset = Preset::gaussian;
  int K = 2;
  int T = 1000;
  int d = 10;  // scenario 3 only
  int replicates = 10;
  std::uint64_t seed = 1;
  FitConfig fit;                                   // fit.threads is ignored; replicates run in parallel
  std::vector<double> rhos = rho_grid(0.01, 0.9, 50);  // scenario 3 only
  PenaltySpec penalty;                             // rho is overwritten along the grid
  GlassoOptions glasso;
  unsigned threads = 0;
};

struct ReplicateOutcome {
  int replicate = 0;
  bool ok = false;
  std::string error;
  HmghgmModel truth;
  /// Fitted model with states reordered to match the truth (scenarios 1, 2).
  HmghgmModel estimate;
  double ari = 0.0;
  /// Objective trace of every fit run in this replicate (one per rho in scenario 3).
  std::vector<std::vector<double>> objective_traces;
  /// Scenario 3: TPR/FPR per grid point averaged over states.
  std::vector<RocPoint> roc;
};

std::vector<ReplicateOutcome> run_montecarlo(const MonteCarloConfig& cfg);

/// Largest drop of a trace between consecutive entries (0 for non-decreasing).
double max_decrease(const std::vector<double>& trace);

}  // namespace hmghgm
