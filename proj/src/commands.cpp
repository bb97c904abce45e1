#include "hmghgm/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>

#include "hmghgm/experiments.hpp"
#include "hmghgm/parallel.hpp"
#include "hmghgm/selection.hpp"
#include "hmghgm/simulate.hpp"
#include "hmghgm/sparse.hpp"

namespace hmghgm {

namespace fs = std::filesystem;

namespace {

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get_string("out", ".");
  fs::create_directories(dir);
  return dir;
}

std::string require(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.get(key);
  if (!v || v->empty()) throw InputError("missing required setting '" + key + "'");
  return *v;
}

int single_k(const RunConfig& cfg, int fallback) {
  if (!cfg.has("K")) return fallback;
  const std::vector<int> ks = parse_k_spec(require(cfg, "K"));
  if (ks.size() != 1) throw InputError("this command takes a single K");
  return ks.front();
}

Preset preset_of(const RunConfig& cfg) {
  try {
    return parse_preset(cfg.get_string("preset", "gaussian"));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

FitConfig fit_config(const RunConfig& cfg) {
  FitConfig f;
  f.tol = cfg.get_double("tol", f.tol);
  f.max_iter = static_cast<int>(cfg.get_int("max_iter", f.max_iter));
  f.n_starts = static_cast<int>(cfg.get_int("n_starts", f.n_starts));
  f.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(f.seed)));
  f.threads = static_cast<unsigned>(cfg.get_int("threads", 0));
  f.shape_max_evals = static_cast<int>(cfg.get_int("shape_max_evals", f.shape_max_evals));
  const std::string target = cfg.get_string("shape_target", "observed");
  if (target == "observed") {
    f.shape_target = ShapeTarget::observed_loglik;
  } else if (target == "complete") {
    f.shape_target = ShapeTarget::expected_complete;
  } else {
    throw InputError("shape_target must be observed or complete");
  }
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return f;
}

PenaltySpec penalty_spec(const RunConfig& cfg) {
  PenaltySpec p;
  const std::string w = cfg.get_string("weighting", "uniform");
  if (w == "uniform") {
    p.weighting = Weighting::uniform;
  } else if (w == "effective_sample") {
    p.weighting = Weighting::effective_sample;
  } else {
    throw InputError("weighting must be uniform or effective_sample");
  }
  const std::string scale = cfg.get_string("penalty_scale", "likelihood");
  if (scale == "likelihood") {
    p.scale = PenaltyScale::likelihood;
  } else if (scale == "per_observation") {
    p.scale = PenaltyScale::per_observation;
  } else {
    throw InputError("penalty_scale must be likelihood or per_observation");
  }
  p.renormalize_det = cfg.get_bool("renormalize_det", false);
  return p;
}

GlassoOptions glasso_options(const RunConfig& cfg) {
  GlassoOptions g;
  g.tol = cfg.get_double("glasso_tol", g.tol);
  g.kkt_tol = cfg.get_double("glasso_kkt_tol", g.kkt_tol);
  g.max_sweeps = static_cast<int>(cfg.get_int("glasso_max_sweeps", g.max_sweeps));
  if (!(g.tol > 0.0) || !(g.kkt_tol > 0.0) || g.max_sweeps < 1) throw InputError("bad glasso settings");
  return g;
}

DfMode df_mode(const RunConfig& cfg) {
  const std::string m = cfg.get_string("df_mode", "as_printed");
  if (m == "as_printed") return DfMode::as_printed;
  if (m == "strict_lower") return DfMode::strict_lower;
  throw InputError("df_mode must be as_printed or strict_lower");
}

LabelledMatrix load_data(const RunConfig& cfg) {
  const fs::path path = require(cfg, "data");
  const std::string kind = cfg.get_string("data_kind", "returns");
  if (kind == "prices") {
    ReturnsTable r = ingest_prices(path);
    LabelledMatrix m;
    m.label_name = "date";
    m.labels = std::move(r.dates);
    m.names = std::move(r.names);
    m.values = std::move(r.values);
    return m;
  }
  if (kind != "returns") throw InputError("data_kind must be returns or prices");
  LabelledMatrix m = read_labelled_matrix(path);
  if (m.values.rows() < 2) throw InputError(path.string() + ": need at least two observations");
  return m;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> default_names(int d) {
  std::vector<std::string> names;
  for (int j = 0; j < d; ++j) names.push_back("y" + std::to_string(j + 1));
  return names;
}

std::vector<std::string> index_labels(Eigen::Index n) {
  std::vector<std::string> labels;
  for (Eigen::Index t = 0; t < n; ++t) labels.push_back(std::to_string(t + 1));
  return labels;
}

SelectionScore score_fit(const FitResult& res, double rho, const PenaltySpec& spec, DfMode mode) {
  std::vector<int> df;
  for (const auto& e : res.model.emissions) df.push_back(degrees_of_freedom(e.theta(), mode));
  return score(res.final_loglik(), res.posteriors.length(), res.model.num_states(), df,
               spec.weights(res.posteriors), rho);
}

void write_trace(const fs::path& path, const FitResult& res) {
  CsvTable t;
  t.header = {"iteration", "loglik", "objective"};
  for (std::size_t i = 0; i < res.loglik_trace.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_double(res.loglik_trace[i]), format_double(res.objective_trace[i])});
  }
  write_csv(path, t);
}

std::vector<std::string> score_row(const SelectionScore& s) {
  return {std::to_string(s.K), format_double(s.rho), format_double(s.loglik), std::to_string(s.df_total()),
          format_double(s.bic), format_double(s.mmdl)};
}

}  // namespace

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const int scenario = static_cast<int>(cfg.get_int("scenario", 0));
  if (scenario < 1 || scenario > 3) throw InputError("scenario must be 1, 2 or 3");
  const Preset preset = preset_of(cfg);
  const int K = single_k(cfg, 2);
  if (K < 1 || K > 3) throw InputError("simulation supports K = 1, 2, 3");
  const int T = static_cast<int>(cfg.get_int("T", 1000));
  const int d = static_cast<int>(cfg.get_int("d", 10));
  if (T < 2 || d < 2) throw InputError("T and d must be at least 2");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));

  const HmghgmModel truth = scenario_model(scenario, preset, K, derive_seed(seed, 0), d);
  const SimulatedData sim = simulate_hmm(truth, T, derive_seed(seed, 1));
  const fs::path dir = out_dir(cfg);

  LabelledMatrix data;
  data.labels = index_labels(T);
  data.names = default_names(truth.dim());
  data.values = sim.data;
  write_labelled_matrix(dir / "data.csv", data);
  CsvTable states;
  states.header = {"t", "state"};
  for (int t = 0; t < T; ++t) states.rows.push_back({std::to_string(t + 1), std::to_string(sim.states[t])});
  write_csv(dir / "states.csv", states);
  write_model(dir / "truth.txt", truth);
  out << "simulated scenario " << scenario << ", preset " << preset_name(preset) << ", K=" << K << ", T=" << T
      << ", d=" << truth.dim() << " -> " << dir.string() << "\n";
}

void cmd_fit(const RunConfig& cfg, std::ostream& out) {
  const LabelledMatrix data = load_data(cfg);
  const int K = single_k(cfg, 2);
  const FitConfig fcfg = fit_config(cfg);
  PenaltySpec spec = penalty_spec(cfg);
  bool penalized = false;
  if (cfg.has("rho")) {
    const std::vector<double> rhos = parse_rho_spec(require(cfg, "rho"));
    if (rhos.size() != 1) throw InputError("fit takes a single rho; use select for a grid");
    spec.rho = rhos.front();
    penalized = true;
  }
  spec.validate(K);
  const FitResult res =
      penalized ? fit_penalized(data.values, K, spec, fcfg, glasso_options(cfg)).result : fit(data.values, K, fcfg);
  const SelectionScore s = score_fit(res, spec.rho, spec, df_mode(cfg));

  const fs::path dir = out_dir(cfg);
  write_model(dir / "params.txt", res.model);
  write_trace(dir / "trace.csv", res);
  std::ofstream summary(dir / "summary.txt");
  summary << "K=" << K << "\n"
          << "rho=" << format_double(spec.rho) << "\n"
          << "T=" << data.values.rows() << "\n"
          << "d=" << data.values.cols() << "\n"
          << "loglik=" << format_double(res.final_loglik()) << "\n"
          << "objective=" << format_double(res.final_objective()) << "\n"
          << "iterations=" << res.diagnostics.iterations << "\n"
          << "converged=" << (res.diagnostics.converged ? "true" : "false") << "\n"
          << "start_index=" << res.diagnostics.start_index << "\n"
          << "empty_state_events=" << res.diagnostics.empty_state_events << "\n"
          << "shape_warnings=" << res.diagnostics.shape_warnings << "\n"
          << "df_total=" << s.df_total() << "\n"
          << "bic=" << format_double(s.bic) << "\n"
          << "mmdl=" << format_double(s.mmdl) << "\n";
  out << "fit K=" << K << (penalized ? ", rho=" + format_double(spec.rho) : std::string()) << ": loglik "
      << format_double(res.final_loglik()) << " after " << res.diagnostics.iterations << " iterations"
      << (res.diagnostics.converged ? "" : " (not converged)") << "\n";
}

void cmd_select(const RunConfig& cfg, std::ostream& out) {
  const LabelledMatrix data = load_data(cfg);
  const std::vector<int> ks = parse_k_spec(cfg.get_string("K", "1-4"));
  FitConfig fcfg = fit_config(cfg);
  const PenaltySpec base = penalty_spec(cfg);
  const GlassoOptions gopts = glasso_options(cfg);
  const DfMode mode = df_mode(cfg);
  const bool penalized = cfg.has("rho");
  const std::vector<double> rhos = penalized ? parse_rho_spec(require(cfg, "rho")) : std::vector<double>{0.0};
  const unsigned threads = fcfg.threads;
  fcfg.threads = 1;

  std::vector<std::vector<SelectionScore>> per_k(ks.size());
  std::vector<std::string> failures(ks.size());
  std::mutex log_mutex;
  parallel_for(
      ks.size(),
      [&](std::size_t i) {
        try {
          PenaltySpec spec = base;
          spec.validate(ks[i]);
          if (penalized) {
            const auto path = fit_penalized_path(data.values, ks[i], rhos, spec, fcfg, gopts);
            for (std::size_t j = 0; j < path.size(); ++j) {
              per_k[i].push_back(score_fit(path[j].result, rhos[j], spec, mode));
            }
          } else {
            per_k[i].push_back(score_fit(fit(data.values, ks[i], fcfg), 0.0, spec, mode));
          }
          std::lock_guard<std::mutex> lock(log_mutex);
          out << "K=" << ks[i] << ": " << per_k[i].size() << " fits\n";
        } catch (const FitError& e) {
          failures[i] = e.what();
        } catch (const GlassoError& e) {
          failures[i] = e.what();
        }
      },
      threads);

  std::vector<SelectionScore> grid;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!failures[i].empty()) out << "K=" << ks[i] << " failed: " << failures[i] << "\n";
    grid.insert(grid.end(), per_k[i].begin(), per_k[i].end());
  }
  if (grid.empty()) throw FitError("every fit in the selection grid failed");

  const fs::path dir = out_dir(cfg);
  CsvTable scores;
  scores.header = {"K", "rho", "loglik", "df_total", "bic", "mmdl"};
  for (const auto& s : grid) scores.rows.push_back(score_row(s));
  write_csv(dir / "scores.csv", scores);
  CsvTable chosen;
  chosen.header = {"criterion", "K", "rho", "value"};
  for (const Criterion c : {Criterion::bic, Criterion::mmdl}) {
    const Selection sel = select(grid, c);
    const double value = c == Criterion::bic ? grid[sel.index].bic : grid[sel.index].mmdl;
    const std::string name = c == Criterion::bic ? "bic" : "mmdl";
    chosen.rows.push_back({name, std::to_string(sel.K), format_double(sel.rho), format_double(value)});
    out << name << ": K=" << sel.K << ", rho=" << format_double(sel.rho) << "\n";
  }
  write_csv(dir / "selection.csv", chosen);
}

void cmd_decode(const RunConfig& cfg, std::ostream& out) {
  const LabelledMatrix data = load_data(cfg);
  const HmghgmModel model = read_model(require(cfg, "params"));
  if (model.dim() != data.values.cols()) throw InputError("parameter file and data differ in dimension");
  const Eigen::MatrixXd le = log_emissions(data.values, model);
  const Posteriors post = forward_backward(le, model.chain);
  const std::vector<int> local = local_decode(post);
  const std::vector<int> path = viterbi(le, model.chain);

  const fs::path dir = out_dir(cfg);
  LabelledMatrix probs;
  probs.label_name = data.label_name;
  probs.labels = data.labels;
  for (int k = 0; k < model.num_states(); ++k) probs.names.push_back("state" + std::to_string(k));
  probs.values = post.gamma;
  write_labelled_matrix(dir / "posterior.csv", probs);
  CsvTable states;
  states.header = {data.label_name, "local", "viterbi"};
  for (std::size_t t = 0; t < local.size(); ++t) {
    states.rows.push_back({data.labels[t], std::to_string(local[t]), std::to_string(path[t])});
  }
  write_csv(dir / "decoded.csv", states);
  out << "decoded " << local.size() << " observations, loglik " << format_double(post.loglik) << "\n";
}

void cmd_graph(const RunConfig& cfg, std::ostream& out) {
  const HmghgmModel model = read_model(require(cfg, "params"));
  std::vector<std::string> names = default_names(model.dim());
  if (cfg.has("data")) {
    const LabelledMatrix data = load_data(cfg);
    if (data.values.cols() != model.dim()) throw InputError("parameter file and data differ in dimension");
    names = data.names;
  }
  const fs::path dir = out_dir(cfg);
  CsvTable edges;
  edges.header = {"state", "node_i", "node_l", "partial_correlation", "sign"};
  CsvTable centrality;
  centrality.header = {"state", "node", "name", "degree"};
  std::ofstream graphml(dir / "graph.graphml");
  graphml << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
          << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
          << "  <key id=\"pc\" for=\"edge\" attr.name=\"partial_correlation\" attr.type=\"double\"/>\n"
          << "  <key id=\"name\" for=\"node\" attr.name=\"name\" attr.type=\"string\"/>\n";
  std::size_t total = 0;
  for (int k = 0; k < model.num_states(); ++k) {
    const Eigen::MatrixXd& theta = model.emissions[k].theta();
    const EdgeSet es = edge_set(theta);
    std::vector<int> degree(static_cast<std::size_t>(model.dim()), 0);
    graphml << "  <graph id=\"state" << k << "\" edgedefault=\"undirected\">\n";
    for (int i = 0; i < model.dim(); ++i) {
      graphml << "    <node id=\"s" << k << "n" << i << "\"><data key=\"name\">" << xml_escape(names[i]) << "</data></node>\n";
    }
    for (const auto& [i, l] : es) {
      const double pc = -theta(i, l) / std::sqrt(theta(i, i) * theta(l, l));
      edges.rows.push_back({std::to_string(k), std::to_string(i), std::to_string(l), format_double(pc),
                            pc > 0 ? "1" : (pc < 0 ? "-1" : "0")});
      graphml << "    <edge source=\"s" << k << "n" << i << "\" target=\"s" << k << "n" << l
              << "\"><data key=\"pc\">" << format_double(pc) << "</data></edge>\n";
      ++degree[i];
      ++degree[l];
    }
    graphml << "  </graph>\n";
    for (int i = 0; i < model.dim(); ++i) {
      centrality.rows.push_back({std::to_string(k), std::to_string(i), names[i], std::to_string(degree[i])});
    }
    total += es.size();
  }
  graphml << "</graphml>\n";
  write_csv(dir / "edges.csv", edges);
  write_csv(dir / "centrality.csv", centrality);
  out << "exported " << total << " edges over " << model.num_states() << " states\n";
}

void cmd_montecarlo(const RunConfig& cfg, std::ostream& out) {
  MonteCarloConfig mc;
  mc.scenario = static_cast<int>(cfg.get_int("scenario", 0));
  if (mc.scenario < 1 || mc.scenario > 3) throw InputError("scenario must be 1, 2 or 3");
  mc.preset = preset_of(cfg);
  mc.K = single_k(cfg, 2);
  if (mc.K < 1 || mc.K > 3) throw InputError("simulation supports K = 1, 2, 3");
  mc.T = static_cast<int>(cfg.get_int("T", 1000));
  mc.d = static_cast<int>(cfg.get_int("d", 10));
  mc.replicates = static_cast<int>(cfg.get_int("replicates", 10));
  mc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  mc.fit = fit_config(cfg);
  mc.threads = mc.fit.threads;
  mc.penalty = penalty_spec(cfg);
  mc.glasso = glasso_options(cfg);
  if (cfg.has("rho")) mc.rhos = parse_rho_spec(require(cfg, "rho"));
  if (mc.replicates < 1 || mc.T < 2) throw InputError("replicates and T must be positive");

  const std::vector<ReplicateOutcome> reps = run_montecarlo(mc);
  const fs::path dir = out_dir(cfg);
  CsvTable rep_table;
  rep_table.header = {"replicate", "ok", "ari", "max_decrease", "error"};
  int ok = 0;
  for (const auto& r : reps) {
    double worst = 0.0;
    for (const auto& tr : r.objective_traces) worst = std::max(worst, max_decrease(tr));
    rep_table.rows.push_back({std::to_string(r.replicate), r.ok ? "1" : "0", format_double(r.ari),
                              format_double(worst), r.error});
    ok += r.ok ? 1 : 0;
  }
  write_csv(dir / "replicates.csv", rep_table);
  if (ok == 0) throw FitError("every replicate failed");

  std::ofstream summary(dir / "summary.txt");
  summary << "scenario=" << mc.scenario << "\npreset=" << preset_name(mc.preset) << "\nK=" << mc.K
          << "\nreplicates=" << mc.replicates << "\nsucceeded=" << ok << "\n";

  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair<double, double>{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
  };

  if (mc.scenario == 3) {
    std::vector<std::vector<RocPoint>> curves;
    for (const auto& r : reps) {
      if (r.ok) curves.push_back(r.roc);
    }
    const std::vector<RocPoint> roc = average_roc(curves);
    CsvTable t;
    t.header = {"rho_index", "rho", "fpr", "tpr"};
    for (std::size_t i = 0; i < roc.size(); ++i) {
      t.rows.push_back({std::to_string(i), format_double(mc.rhos[i]), format_double(roc[i].fpr), format_double(roc[i].tpr)});
    }
    write_csv(dir / "roc.csv", t);
    const double auc = roc_auc(roc);
    summary << "auc=" << format_double(auc) << "\n";
    out << "scenario 3, " << preset_name(mc.preset) << ", K=" << mc.K << ": AUC " << auc << " over " << ok
        << " replicates\n";
    return;
  }

  // Per-parameter mean and standard deviation over replicates.
  CsvTable est;
  est.header = {"state", "parameter", "truth", "mean", "sd"};
  const int d = reps.front().truth.dim();
  for (int k = 0; k < mc.K; ++k) {
    std::vector<std::pair<std::string, std::pair<double, std::vector<double>>>> params;
    const GhParams& truth = reps.front().truth.emissions[k];
    for (int j = 0; j < d; ++j) params.push_back({"mu" + std::to_string(j + 1), {truth.mu()[j], {}}});
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        params.push_back({"sigma" + std::to_string(i + 1) + std::to_string(j + 1), {truth.sigma()(i, j), {}}});
      }
    }
    params.push_back({"lambda", {truth.lambda(), {}}});
    params.push_back({"chi", {truth.chi(), {}}});
    params.push_back({"psi", {truth.psi(), {}}});
    for (const auto& r : reps) {
      if (!r.ok) continue;
      const GhParams& e = r.estimate.emissions[k];
      std::size_t p = 0;
      for (int j = 0; j < d; ++j) params[p++].second.second.push_back(e.mu()[j]);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) params[p++].second.second.push_back(e.sigma()(i, j));
      }
      params[p++].second.second.push_back(e.lambda());
      params[p++].second.second.push_back(e.chi());
      params[p++].second.second.push_back(e.psi());
    }
    for (const auto& [name, tv] : params) {
      const auto [m, sd] = mean_sd(tv.second);
      est.rows.push_back({std::to_string(k), name, format_double(tv.first), format_double(m), format_double(sd)});
    }
  }
  write_csv(dir / "estimates.csv", est);
  std::vector<double> aris;
  for (const auto& r : reps) {
    if (r.ok) aris.push_back(r.ari);
  }
  const auto [ari_mean, ari_sd] = mean_sd(aris);
  summary << "ari_mean=" << format_double(ari_mean) << "\nari_sd=" << format_double(ari_sd) << "\n";
  out << "scenario " << mc.scenario << ", " << preset_name(mc.preset) << ", K=" << mc.K << ": mean ARI " << ari_mean
      << " over " << ok << " replicates\n";
}

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    if (command == "simulate") {
      cmd_simulate(cfg, out);
    } else if (command == "fit") {
      cmd_fit(cfg, out);
    } else if (command == "select") {
      cmd_select(cfg, out);
    } else if (command == "decode") {
      cmd_decode(cfg, out);
    } else if (command == "graph") {
      cmd_graph(cfg, out);
    } else if (command == "montecarlo") {
      cmd_montecarlo(cfg, out);
    } else {
      err << "error: unknown command '" << command << "'\n";
      return kExitUsage;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FitError& e) {
    err << "numerical failure";
    if (e.state() >= 0) err << " in state " << e.state();
    err << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const GlassoError& e) {
    err << "numerical failure: " << e.what() << " (duality gap " << e.gap() << ")\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace hmghgm
