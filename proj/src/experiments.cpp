#include "hmghgm/experiments.hpp"

#include <algorithm>
#include <exception>

#include "hmghgm/hmm_inference.hpp"
#include "hmghgm/parallel.hpp"

namespace hmghgm {

namespace {

ReplicateOutcome run_one(const MonteCarloConfig& cfg, int r) {
  ReplicateOutcome out;
  out.replicate = r;
  const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
  FitConfig fit_cfg = cfg.fit;
  fit_cfg.seed = derive_seed(rep_seed, 2);
  fit_cfg.threads = 1;
  try {
    out.truth = scenario_model(cfg.scenario, cfg.preset, cfg.K, derive_seed(rep_seed, 0), cfg.d);
    const SimulatedData sim = simulate_hmm(out.truth, cfg.T, derive_seed(rep_seed, 1));

    if (cfg.scenario == 3) {
      const std::vector<PenalizedFit> path =
          fit_penalized_path(sim.data, cfg.K, cfg.rhos, cfg.penalty, fit_cfg, cfg.glasso);
      for (const auto& p : path) {
        out.objective_traces.push_back(p.result.objective_trace);
        const std::vector<int> perm = match_labels(sim.states, local_decode(p.result.posteriors), cfg.K);
        RocPoint point;
        for (int k = 0; k < cfg.K; ++k) {
          const EdgeRecovery e =
              edge_recovery(out.truth.emissions[k].theta(), p.result.model.emissions[perm[k]].theta());
          point.tpr += e.tpr / cfg.K;
          point.fpr += e.fpr / cfg.K;
        }
        out.roc.push_back(point);
      }
      out.estimate = path.front().result.model;
    } else {
      const FitResult res = fit(sim.data, cfg.K, fit_cfg);
      out.objective_traces.push_back(res.objective_trace);
      const std::vector<int> decoded = local_decode(res.posteriors);
      out.ari = adjusted_rand_index(sim.states, decoded);
      out.estimate = permute_states(res.model, match_labels(sim.states, decoded, cfg.K));
    }
    out.ok = true;
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<ReplicateOutcome> run_montecarlo(const MonteCarloConfig& cfg) {
  if (cfg.replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (cfg.T < 2) throw std::invalid_argument("T must be at least 2");
  cfg.fit.validate();
  std::vector<ReplicateOutcome> out(static_cast<std::size_t>(cfg.replicates));
  parallel_for(
      out.size(), [&](std::size_t r) { out[r] = run_one(cfg, static_cast<int>(r)); }, cfg.threads);
  return out;
}

double max_decrease(const std::vector<double>& trace) {
  double worst = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i) worst = std::max(worst, trace[i - 1] - trace[i]);
  return worst;
}

}  // namespace hmghgm
