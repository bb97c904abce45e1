#pragma once

// Data-generating models of the simulation study and a sampler for HMMs
// with GH emissions.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hmghgm/ecme.hpp"

namespace hmghgm {

struct SimulatedData {
  Eigen::MatrixXd data;     // T x d
  std::vector<int> states;  // length T
};

/// Draws a state path from the chain and one GH observation per step.
SimulatedData simulate_hmm(const HmghgmModel& model, int T, std::uint64_t seed);

/// Chain used in the simulation study: K = 1 trivial; K = 2 with
/// Pi = (0.9 0.1; 0.1 0.9), pi = (0.7, 0.3); K = 3 with diagonal 0.8,
/// off-diagonal 0.1 and pi = (0.4, 0.3, 0.3).
ChainParams scenario_chain(int K);

/// True model of a scenario. Scenarios 1 and 2 are bivariate with fixed
/// locations and scales; scenario 3 draws one random sparse precision per
/// state (d-dimensional, seeded by `seed`) with locations 5, -5 and 0 times
/// the unit vector. All states share the preset shape. Throws
/// std::invalid_argument for an unknown scenario or K outside [1, 3].
HmghgmModel scenario_model(int scenario, Preset preset, int K, std::uint64_t seed = 0, int d = 10);

}  // namespace hmghgm
