#include "hmghgm/simulate.hpp"

#include <random>
#include <stdexcept>
#include <string>

#include "hmghgm/parallel.hpp"
#include "hmghgm/selection.hpp"
#include "hmghgm/special_fn.hpp"

namespace hmghgm {

namespace {

int draw_index(const Eigen::VectorXd& probs, double u) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace

SimulatedData simulate_hmm(const HmghgmModel& model, int T, std::uint64_t seed) {
  if (T < 1) throw std::invalid_argument("simulate_hmm: T must be positive");
  if (model.num_states() < 1 || model.chain.num_states() != model.num_states()) {
    throw std::invalid_argument("simulate_hmm: inconsistent model");
  }
  model.chain.validate();
  const int d = model.dim();
  std::vector<Eigen::MatrixXd> roots;
  std::vector<GigSampler> samplers;
  for (const auto& e : model.emissions) {
    roots.push_back(symmetric_sqrt(e.sigma()));
    samplers.emplace_back(GigParams{e.lambda(), e.chi(), e.psi()});
  }
  std::mt19937_64 chain_rng(derive_seed(seed, 0));
  std::mt19937_64 obs_rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedData out;
  out.data.resize(T, d);
  out.states.resize(static_cast<std::size_t>(T));
  Eigen::VectorXd z(d);
  int state = draw_index(model.chain.pi, unif(chain_rng));
  for (int t = 0; t < T; ++t) {
    if (t > 0) state = draw_index(model.chain.trans.row(state).transpose(), unif(chain_rng));
    out.states[t] = state;
    const double w = samplers[state](obs_rng);
    for (int j = 0; j < d; ++j) z[j] = normal(obs_rng);
    out.data.row(t) = (model.emissions[state].mu() + std::sqrt(w) * (roots[state] * z)).transpose();
  }
  return out;
}

ChainParams scenario_chain(int K) {
  ChainParams c;
  switch (K) {
    case 1:
      c.pi = Eigen::VectorXd::Ones(1);
      c.trans = Eigen::MatrixXd::Ones(1, 1);
      break;
    case 2:
      c.pi.resize(2);
      c.pi << 0.7, 0.3;
      c.trans.resize(2, 2);
      c.trans << 0.9, 0.1, 0.1, 0.9;
      break;
    case 3:
      c.pi.resize(3);
      c.pi << 0.4, 0.3, 0.3;
      c.trans = Eigen::MatrixXd::Constant(3, 3, 0.1);
      c.trans.diagonal().setConstant(0.8);
      break;
    default:
      throw std::invalid_argument("scenario chains exist for K = 1, 2, 3 only");
  }
  return c;
}

HmghgmModel scenario_model(int scenario, Preset preset, int K, std::uint64_t seed, int d) {
  HmghgmModel m;
  m.chain = scenario_chain(K);
  const double offsets[3] = {5.0, -5.0, 0.0};
  if (scenario == 1 || scenario == 2) {
    const ShapeParams shape = preset_shape(preset, 2);
    Eigen::MatrixXd sigmas[3] = {Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2), Eigen::MatrixXd(2, 2)};
    sigmas[0] << 1.51, -1.13, -1.13, 1.51;
    sigmas[1] << 1.51, 1.13, 1.13, 1.51;
    sigmas[2] << 1.01, 0.12, 0.12, 1.01;
    for (int k = 0; k < K; ++k) {
      m.emissions.push_back(GhParams::from_scale(Eigen::VectorXd::Constant(2, offsets[k]), sigmas[k], shape));
    }
    return m;
  }
  if (scenario == 3) {
    if (d < 2) throw std::invalid_argument("scenario 3 needs d >= 2");
    const ShapeParams shape = preset_shape(preset, d);
    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd theta = random_sparse_precision(d, derive_seed(seed, static_cast<std::uint64_t>(k)));
      m.emissions.push_back(GhParams::from_precision(Eigen::VectorXd::Constant(d, offsets[k]), theta, shape));
    }
    return m;
  }
  throw std::invalid_argument("unknown scenario " + std::to_string(scenario));
}

}  // namespace hmghgm
