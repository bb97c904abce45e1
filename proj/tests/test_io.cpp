#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "hmghgm/commands.hpp"
#include "hmghgm/io.hpp"
#include "hmghgm/simulate.hpp"
#include "hmghgm/sparse.hpp"

using namespace hmghgm;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hmghgm_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p;
  }

  int run(const std::string& command, const RunConfig& cfg) {
    std::ostringstream out, err;
    const int code = run_command(command, cfg, out, err);
    last_err_ = err.str();
    return code;
  }

  fs::path dir_;
  std::string last_err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

using Io = TempDir;
using Cli = TempDir;

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, (i % 40) - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
}

TEST_F(Io, CsvReadsQuotesAndLineEndings) {
  const fs::path p = write("q.csv", "a,\"b,c\",\"say \"\"hi\"\"\"\r\n1,2,3\n4,\"5\",6");
  const CsvTable t = read_csv(p);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "5");
  EXPECT_THROW(read_csv(write("bad.csv", "a,b\n1\n")), InputError);
  EXPECT_THROW(read_csv(write("open.csv", "a,\"b\n")), InputError);
  EXPECT_THROW(read_csv(dir_ / "missing.csv"), InputError);
}

TEST_F(Io, LabelledMatrixRoundTripIsBitwise) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e3);
  LabelledMatrix m;
  m.label_name = "date";
  m.names = {"x,1", "y"};
  m.values.resize(50, 2);
  for (int t = 0; t < 50; ++t) {
    m.labels.push_back("r" + std::to_string(t));
    m.values(t, 0) = n(rng);
    m.values(t, 1) = n(rng) * 1e-12;
  }
  write_labelled_matrix(dir_ / "m.csv", m);
  const LabelledMatrix back = read_labelled_matrix(dir_ / "m.csv");
  EXPECT_EQ(back.names, m.names);
  EXPECT_EQ(back.labels, m.labels);
  EXPECT_TRUE((back.values.array() == m.values.array()).all());
  EXPECT_THROW(read_labelled_matrix(write("bad.csv", "t,a\n1,zz\n")), InputError);
}

TEST_F(Io, IngestPricesComputesPercentLogReturns) {
  const fs::path p = write("p.csv", "date,A,B\n2020-01-01,100,50\n2020-01-02,110,50\n2020-01-03,121,50\n");
  const ReturnsTable r = ingest_prices(p);
  ASSERT_EQ(r.values.rows(), 2);
  EXPECT_NEAR(r.values(0, 0), 9.531017980432486, 1e-12);
  EXPECT_EQ(r.values(0, 1), 0.0);
  EXPECT_EQ(r.dates, (std::vector<std::string>{"2020-01-02", "2020-01-03"}));
  EXPECT_EQ(r.names, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(r.dropped_rows, 0);
}

TEST_F(Io, IngestPricesDropsGapRowsBeforeDifferencing) {
  const fs::path p = write("p.csv",
                           "date,A,B\n2020-01-01,100,10\n2020-01-02,NA,11\n2020-01-03,105,\n"
                           "2020-01-04,110,12\n2020-01-05,99,13\n");
  const ReturnsTable r = ingest_prices(p);
  EXPECT_EQ(r.dropped_rows, 2);
  ASSERT_EQ(r.values.rows(), 2);
  EXPECT_NEAR(r.values(0, 0), 100.0 * std::log(110.0 / 100.0), 1e-12);
  EXPECT_NEAR(r.values(0, 1), 100.0 * std::log(12.0 / 10.0), 1e-12);
}

TEST_F(Io, IngestPricesRejectsBadInput) {
  EXPECT_THROW(ingest_prices(write("a.csv", "day,A\n2020-01-01,1\n2020-01-02,2\n2020-01-03,3\n")), InputError);
  EXPECT_THROW(ingest_prices(write("b.csv", "date,A\n2020-01-01,1\n2020-01-02,x\n2020-01-03,3\n")), InputError);
  EXPECT_THROW(ingest_prices(write("c.csv", "date,A\n2020-01-01,1\n2020-01-02,2\n")), InputError);
  EXPECT_THROW(ingest_prices(write("d.csv", "date,A\n2020-01-02,1\n2020-01-01,2\n2020-01-03,3\n")), InputError);
  EXPECT_THROW(ingest_prices(write("e.csv", "date,A\n2020-01-01,1\n2020-01-02,-2\n2020-01-03,3\n")), InputError);
}

TEST_F(Io, ModelFileRoundTripPreservesZeros) {
  const HmghgmModel m = scenario_model(3, Preset::laplace, 2, 8, 6);
  write_model(dir_ / "m.txt", m);
  const HmghgmModel back = read_model(dir_ / "m.txt");
  ASSERT_EQ(back.num_states(), 2);
  EXPECT_EQ(back.chain.trans, m.chain.trans);
  EXPECT_EQ(back.chain.pi, m.chain.pi);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(back.emissions[k].theta(), m.emissions[k].theta());
    EXPECT_EQ(back.emissions[k].mu(), m.emissions[k].mu());
    EXPECT_EQ(back.emissions[k].lambda(), m.emissions[k].lambda());
    EXPECT_EQ(back.emissions[k].chi(), m.emissions[k].chi());
  }
  EXPECT_THROW(read_model(write("bad.txt", "K 2\nd 2\npi 0.5\n")), InputError);
}

TEST_F(Io, RunConfigParsing) {
  const fs::path p = write("c.cfg", "# settings\nK = 2\nrho=0.1  # inline\nrenormalize_det = true\n\n");
  const RunConfig c = RunConfig::load(p);
  EXPECT_EQ(c.get_int("K", 0), 2);
  EXPECT_EQ(c.get_double("rho", 0), 0.1);
  EXPECT_TRUE(c.get_bool("renormalize_det", false));
  EXPECT_EQ(c.get_string("absent", "x"), "x");
  EXPECT_THROW(c.get_int("rho", 0), InputError);
  EXPECT_THROW(RunConfig::load(write("bad.cfg", "just words\n")), InputError);
}

TEST(Specs, KAndRho) {
  EXPECT_EQ(parse_k_spec("3"), (std::vector<int>{3}));
  EXPECT_EQ(parse_k_spec("1-4"), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(parse_k_spec("1,2,4"), (std::vector<int>{1, 2, 4}));
  EXPECT_THROW(parse_k_spec("0"), InputError);
  EXPECT_THROW(parse_k_spec("4-2"), InputError);
  EXPECT_EQ(parse_rho_spec("0.1"), (std::vector<double>{0.1}));
  EXPECT_EQ(parse_rho_spec("0.1,0.2").size(), 2u);
  const auto g = parse_rho_spec("0.01:0.9:50");
  EXPECT_EQ(g.size(), 50u);
  EXPECT_DOUBLE_EQ(g.back(), 0.9);
  EXPECT_NEAR(parse_rho_spec("0:1:5:lin")[1], 0.25, 1e-15);
  EXPECT_THROW(parse_rho_spec("-1"), InputError);
  EXPECT_THROW(parse_rho_spec("0.1:0.2:3:cubic"), InputError);
}

TEST_F(Cli, SimulateIsDeterministicAndNearStationary) {
  RunConfig cfg;
  cfg.set("scenario", "1");
  cfg.set("preset", "gaussian");
  cfg.set("K", "2");
  cfg.set("T", "1000");
  cfg.set("seed", "4");
  cfg.set("out", (dir_ / "a").string());
  ASSERT_EQ(run("simulate", cfg), kExitOk) << last_err_;
  cfg.set("out", (dir_ / "b").string());
  ASSERT_EQ(run("simulate", cfg), kExitOk);
  for (const char* f : {"data.csv", "states.csv", "truth.txt"}) EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f));
  const CsvTable states = read_csv(dir_ / "a" / "states.csv");
  double ones = 0;
  for (const auto& r : states.rows) ones += r[1] == "1";
  // Stationary law of the symmetric two-state chain is (1/2, 1/2).
  EXPECT_NEAR(ones / 1000.0, 0.5, 0.1);
  const LabelledMatrix data = read_labelled_matrix(dir_ / "a" / "data.csv");
  EXPECT_EQ(data.values.rows(), 1000);
  EXPECT_EQ(data.values.cols(), 2);
}

TEST_F(Cli, ScenarioThreeTruthHasMinimumEigenvalue) {
  RunConfig cfg;
  cfg.set("scenario", "3");
  cfg.set("K", "1");
  cfg.set("T", "50");
  cfg.set("d", "10");
  cfg.set("out", dir_.string());
  ASSERT_EQ(run("simulate", cfg), kExitOk) << last_err_;
  const HmghgmModel truth = read_model(dir_ / "truth.txt");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(truth.emissions[0].theta());
  EXPECT_NEAR(es.eigenvalues().minCoeff(), 0.6, 1e-8);
}

TEST_F(Cli, FitDecodeGraphSelect) {
  RunConfig sim;
  sim.set("scenario", "3");
  sim.set("preset", "t");
  sim.set("K", "2");
  sim.set("T", "400");
  sim.set("d", "5");
  sim.set("out", (dir_ / "sim").string());
  ASSERT_EQ(run("simulate", sim), kExitOk) << last_err_;

  RunConfig fit;
  fit.set("data", (dir_ / "sim" / "data.csv").string());
  fit.set("K", "2");
  fit.set("rho", "0.1");
  fit.set("penalty_scale", "per_observation");
  fit.set("renormalize_det", "true");
  fit.set("n_starts", "2");
  fit.set("out", (dir_ / "fit").string());
  ASSERT_EQ(run("fit", fit), kExitOk) << last_err_;
  const LabelledMatrix data = read_labelled_matrix(dir_ / "sim" / "data.csv");
  const CsvTable trace = read_csv(dir_ / "fit" / "trace.csv");
  for (std::size_t i = 1; i < trace.rows.size(); ++i)
    EXPECT_GE(std::stod(trace.rows[i][2]), std::stod(trace.rows[i - 1][2]) - 1e-5);

  RunConfig dec;
  dec.set("data", (dir_ / "sim" / "data.csv").string());
  dec.set("params", (dir_ / "fit" / "params.txt").string());
  dec.set("out", (dir_ / "dec").string());
  ASSERT_EQ(run("decode", dec), kExitOk) << last_err_;
  const LabelledMatrix post = read_labelled_matrix(dir_ / "dec" / "posterior.csv");
  ASSERT_EQ(post.values.rows(), data.values.rows());
  for (Eigen::Index t = 0; t < post.values.rows(); ++t) EXPECT_NEAR(post.values.row(t).sum(), 1.0, 1e-9);
  EXPECT_EQ(read_csv(dir_ / "dec" / "decoded.csv").rows.size(), 400u);

  RunConfig gr;
  gr.set("params", (dir_ / "fit" / "params.txt").string());
  gr.set("out", (dir_ / "graph").string());
  ASSERT_EQ(run("graph", gr), kExitOk) << last_err_;
  const HmghgmModel model = read_model(dir_ / "fit" / "params.txt");
  EdgeSet exported[2];
  for (const auto& r : read_csv(dir_ / "graph" / "edges.csv").rows) {
    const int k = std::stoi(r[0]), i = std::stoi(r[1]), l = std::stoi(r[2]);
    exported[k].emplace(i, l);
    const Eigen::MatrixXd& th = model.emissions[k].theta();
    EXPECT_EQ(std::stod(r[3]), -th(i, l) / std::sqrt(th(i, i) * th(l, l)));
    EXPECT_EQ(std::stoi(r[4]), th(i, l) < 0 ? 1 : -1);
  }
  for (int k = 0; k < 2; ++k) EXPECT_EQ(exported[k], edge_set(model.emissions[k].theta()));
  EXPECT_TRUE(fs::exists(dir_ / "graph" / "graph.graphml"));

  RunConfig sel = fit;
  sel.set("K", "1-2");
  sel.set("rho", "0.05,0.5");
  sel.set("n_starts", "1");
  sel.set("out", (dir_ / "sel").string());
  ASSERT_EQ(run("select", sel), kExitOk) << last_err_;
  const CsvTable scores = read_csv(dir_ / "sel" / "scores.csv");
  EXPECT_EQ(scores.header, (std::vector<std::string>{"K", "rho", "loglik", "df_total", "bic", "mmdl"}));
  EXPECT_EQ(scores.rows.size(), 4u);
  EXPECT_EQ(read_csv(dir_ / "sel" / "selection.csv").rows.size(), 2u);
}

TEST_F(Cli, DiagonalPrecisionExportsNoEdges) {
  HmghgmModel m = scenario_model(1, Preset::gaussian, 1);
  write_model(dir_ / "p.txt", m);
  RunConfig gr;
  gr.set("params", (dir_ / "p.txt").string());
  gr.set("out", (dir_ / "g").string());
  // Scenario 1 has a dense scale; replace it with a diagonal one.
  m.emissions[0] = GhParams::from_precision(m.emissions[0].mu(), Eigen::Matrix2d::Identity(), m.emissions[0].shape());
  write_model(dir_ / "p.txt", m);
  ASSERT_EQ(run("graph", gr), kExitOk) << last_err_;
  EXPECT_TRUE(read_csv(dir_ / "g" / "edges.csv").rows.empty());
}

TEST_F(Cli, ExitCodes) {
  RunConfig missing;
  missing.set("out", dir_.string());
  EXPECT_EQ(run("fit", missing), kExitUsage);
  missing.set("data", (dir_ / "none.csv").string());
  EXPECT_EQ(run("fit", missing), kExitUsage);
  EXPECT_EQ(run("nonsense", missing), kExitUsage);
  RunConfig bad;
  bad.set("scenario", "7");
  bad.set("out", dir_.string());
  EXPECT_EQ(run("simulate", bad), kExitUsage);
  bad.set("scenario", "1");
  bad.set("preset", "weibull");
  EXPECT_EQ(run("simulate", bad), kExitUsage);

  // Two identical rows cannot support a two-state fit: numerical failure.
  const fs::path p = write("flat.csv", "t,a,b\n1,1,1\n2,1,1\n3,1,1\n4,1,1\n");
  RunConfig flat;
  flat.set("data", p.string());
  flat.set("K", "2");
  flat.set("n_starts", "1");
  flat.set("out", dir_.string());
  EXPECT_EQ(run("fit", flat), kExitNumerical) << last_err_;
}

TEST_F(Cli, BinaryExitCodes) {
  const std::string bin = HMGHGM_CLI_PATH;
  const std::string quiet = " > " + (dir_ / "log").string() + " 2>&1";
  auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + quiet).c_str());
    return WEXITSTATUS(raw);
  };
  EXPECT_EQ(status("simulate --scenario 1 --preset t --k 1 --seed 3 --out " + (dir_ / "s").string() + " --set T=100"), 0);
  EXPECT_EQ(status("simulate --scenario 9 --out " + dir_.string()), 2);
  EXPECT_EQ(status("fit --data " + (dir_ / "none.csv").string()), 2);
  EXPECT_EQ(status("fit --unknown-flag"), 2);
  EXPECT_EQ(status(""), 2);
  const fs::path cfg = write("run.cfg", "scenario = 2\npreset = gaussian\nK = 2\nT = 60\n");
  EXPECT_EQ(status("simulate --config " + cfg.string() + " --out " + (dir_ / "c").string()), 0);
  EXPECT_EQ(read_labelled_matrix(dir_ / "c" / "data.csv").values.rows(), 60);
}
