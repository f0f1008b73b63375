#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <edgestep/cli.hpp>

using namespace edgestep;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "edgestep");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("edgestep_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(fields);
  }
  return rows;
}

EdgeStepSpec random_spec(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double gamma = std::uniform_int_distribution<int>(0, 1)(rng) ? unit(rng) * 2.0 : 0.25 * (rng() % 5);
  switch (rng() % 5) {
    case 0: return EdgeStepSpec::power_law(0.1 + 5.0 * unit(rng), gamma);
    case 1: return EdgeStepSpec::inverse_log_power(0.1 + 3.0 * unit(rng), gamma);
    case 2: return EdgeStepSpec::inverse_log_log(gamma);
    case 3: return EdgeStepSpec::exp_neg_log_delta(0.01 + 0.98 * unit(rng), gamma);
    default: return EdgeStepSpec::constant(0.001 + 0.999 * unit(rng));
  }
}

ExperimentConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ExperimentConfig c;
  c.spec = random_spec(rng);
  c.delta = rng() % 3 == 0 ? 0.0 : 10.0 * unit(rng);
  c.checkpoints.clear();
  for (std::size_t i = 0, n = 1 + rng() % 5; i < n; ++i) c.checkpoints.push_back(1 + rng() % 10000000);
  c.replicas = 1 + rng() % 5000;
  c.seed = rng();
  c.d_max = rng() % 2 ? 0 : 2 + rng() % 10000;
  c.d_report = 1 + rng() % 50;
  c.A = 0.01 + 10.0 * unit(rng);
  c.alpha = 0.01 + 0.98 * unit(rng);
  c.out = "runs/out_" + std::to_string(rng() % 1000);
  c.threads = static_cast<unsigned>(rng() % 17);
  c.grid.clear();
  for (std::size_t i = 0, n = rng() % 4; i < n; ++i) c.grid.push_back(1 + rng() % 1000000000);
  c.gammas.clear();
  for (std::size_t i = 0, n = rng() % 4; i < n; ++i) c.gammas.push_back(unit(rng));
  const char* names[] = {"power_law", "inverse_log_power", "inverse_log_log", "exp_neg_log_delta", "constant"};
  c.families.clear();
  for (std::size_t i = 0, n = rng() % 3; i < n; ++i) c.families.push_back(names[rng() % 5]);
  c.oracle = rng() % 2 ? "" : "tables/expectation_" + std::to_string(rng() % 100) + ".csv";
  c.wide_ids = rng() % 2;
  c.edges = rng() % 2;
  return c;
}

std::string flawed_oracle(const std::string& good) {
  // Well formed and consistent, but with E N_t(d) halved for d <= 3: the gate has to reject it.
  std::istringstream in(good);
  std::ostringstream out;
  std::string line;
  std::getline(in, line);
  out << line << '\n';
  while (std::getline(in, line)) {
    auto f = csv_rows(line)[0];
    if (std::stoi(f[1]) <= 3) {
      const double count = std::stod(f[2]) / 2.0;
      f[2] = format_double(count);
      f[4] = format_double(count / std::stod(f[3]));
    }
    out << f[0] << ',' << f[1] << ',' << f[2] << ',' << f[3] << ',' << f[4] << '\n';
  }
  return out.str();
}

}  // namespace

TEST(Config, RoundTripProperty) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_config(rng);
    const std::string text = serialize_config(c);
    const auto back = parse_config(text);
    ASSERT_EQ(back, c) << text;
    ASSERT_EQ(serialize_config(back), text);
  }
}

TEST(Config, GrammarAndErrors) {
  const auto c = parse_config(
      "# standard recipe\n"
      "family=constant p=0.5   # inline comment\n"
      "checkpoints=10,100 replicas=7\n\n"
      "seed=18446744073709551615\n");
  EXPECT_EQ(c.spec, EdgeStepSpec::constant(0.5));
  EXPECT_EQ(c.checkpoints, (std::vector<std::uint64_t>{10, 100}));
  EXPECT_EQ(c.replicas, 7u);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  EXPECT_EQ(c.d_report, 20u);

  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("gamma=0.5").find("family"), std::string::npos);
  EXPECT_NE(message("family=power_law colour=red").find("colour"), std::string::npos);
  EXPECT_NE(message("family=power_law replicas=-3").find("replicas"), std::string::npos);
  EXPECT_NE(message("family=power_law checkpoints=").find("checkpoints"), std::string::npos);
  EXPECT_NE(message("family=power_law gamma").find("gamma"), std::string::npos);
  EXPECT_NE(message("family=power_law delta=-1").find("delta"), std::string::npos);
  EXPECT_NE(message("family=power_law wide_ids=maybe").find("wide_ids"), std::string::npos);
}

TEST(Cli, SimulateInitialCheckpoint) {
  const auto dir = scratch("sim1");
  const auto r = run({"simulate", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "1", "--replicas", "1",
                      "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "histogram_t1.csv"), "d,count\n2,1\n");
  const auto resolved = load_config((dir / "config.resolved.txt").string());
  EXPECT_EQ(resolved.spec, EdgeStepSpec::power_law(1.0, 0.5));
  EXPECT_EQ(resolved.checkpoints, (std::vector<std::uint64_t>{1}));
  EXPECT_FALSE(fs::exists(dir / ".edgestep.lock"));
  fs::remove_all(dir);
}

TEST(Cli, SimulateIsByteReproducible) {
  const auto a = scratch("repA");
  const auto b = scratch("repB");
  for (const auto& dir : {a, b}) {
    const auto r = run({"simulate", "--family", "inverse_log_power", "--c", "1", "--gamma", "0.25", "--checkpoints",
                        "100,2000", "--replicas", "12", "--seed", "5", "--threads", "3", "--edges", "--out",
                        dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* name : {"histogram_t100.csv", "histogram_t2000.csv", "summary.jsonl", "edges.csv"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    EXPECT_FALSE(slurp(a / name).empty());
  }
  const auto edges = csv_rows(slurp(a / "edges.csv"));
  EXPECT_EQ(edges[0], (std::vector<std::string>{"step", "endpoint_a", "endpoint_b", "step_type"}));
  EXPECT_EQ(edges.size(), 2001u);
  const std::string summary = slurp(a / "summary.jsonl");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 24);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SummaryRecordsParse) {
  const auto dir = scratch("summary");
  ASSERT_EQ(run({"simulate", "--family", "constant", "--p", "0.5", "--checkpoints", "1,50", "--replicas", "3", "--out",
                 dir.string()})
                .code,
            0);
  std::istringstream in(slurp(dir / "summary.jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_TRUE(rec.contains("replica"));
    EXPECT_TRUE(rec.contains("vertex_count"));
    if (rec["t"] == 1) {
      EXPECT_EQ(rec["max_degree"], 2);
    }
  }
  EXPECT_EQ(n, 6u);
  fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = scratch("cfgerr");
  const auto missing = run({"simulate", "--gamma", "0.5", "--out", dir.string()});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("family"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--family", "power_law", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"simulate", "--family", "power_law", "--replicas", "x"}).code, 2);
  EXPECT_EQ(run({"expect", "--family", "power_law", "--delta", "-1"}).code, 2);
  EXPECT_EQ(run({"expect", "--config", (dir / "nope.txt").string()}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Cli, ConfigFileWithFlagOverrides) {
  const auto dir = scratch("cfgfile");
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.txt");
    cfg << "family=constant p=0.25\ncheckpoints=5 replicas=2 seed=3\nout=" << (dir / "out").string() << '\n';
  }
  const auto r = run({"expect", "--config", (dir / "run.txt").string(), "--checkpoints", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto resolved = load_config((dir / "out" / "config.resolved.txt").string());
  EXPECT_EQ(resolved.spec, EdgeStepSpec::constant(0.25));
  EXPECT_EQ(resolved.checkpoints, (std::vector<std::uint64_t>{1}));
  EXPECT_EQ(resolved.seed, 3u);
  fs::remove_all(dir);
}

TEST(Cli, ExpectSingleRowAndSelfCheck) {
  const auto dir = scratch("expect1");
  const auto r = run({"expect", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "expectation.csv"), "t,d,expected_count,F_t,ratio\n1,2,1.0,1.0,1.0\n");
  EXPECT_NE(r.out.find("mass identity t=1"), std::string::npos);
  EXPECT_EQ(r.out.find("FAILED"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ExpectFeedsCompare) {
  const auto dir = scratch("pipeline");
  const auto table = dir / "table";
  ASSERT_EQ(run({"expect", "--family", "constant", "--p", "0.5", "--checkpoints", "100000", "--d-max", "64", "--out",
                 table.string()})
                .code,
            0);
  const auto r = run({"compare", "--family", "constant", "--p", "0.5", "--checkpoints", "100000", "--replicas", "24",
                      "--seed", "4", "--oracle", (table / "expectation.csv").string(), "--out",
                      (dir / "cmp").string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto rows = csv_rows(slurp(dir / "cmp" / "comparison.csv"));
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "d", "emp_mean", "emp_se", "oracle", "limit_p", "halfwidth",
                                               "band_pass", "z_score"}));
  EXPECT_EQ(rows[1][5], "");  // a constant edge-step function has no limit law of this kind
  fs::remove_all(dir);
}

TEST(Cli, CompareTrivialAndJsonLines) {
  const auto dir = scratch("cmp1");
  const auto r = run({"compare", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "1", "--replicas", "3",
                      "--d-report", "4", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(slurp(dir / "comparison.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[2][1], "2");
  EXPECT_EQ(rows[2][2], "1.0");
  EXPECT_EQ(rows[2][4], "1.0");
  EXPECT_EQ(rows[2][8], "0.0");
  std::istringstream in(slurp(dir / "comparison.jsonl"));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    const auto rec = nlohmann::ordered_json::parse(line);
    EXPECT_EQ(rec.begin().key(), "t");
    EXPECT_TRUE(rec["halfwidth"].is_null());
  }
  EXPECT_EQ(n, 4u);
  fs::remove_all(dir);
}

TEST(Cli, CorruptOracleExitsThree) {
  const auto dir = scratch("corrupt");
  fs::create_directories(dir);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "t,d,expected_count,F_t,ratio\n100,1,abc,1.0,1.0\n";
  }
  const auto r = run({"compare", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "100", "--replicas", "2",
                      "--oracle", (dir / "bad.csv").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
  EXPECT_EQ(run({"compare", "--family", "power_law", "--checkpoints", "100", "--oracle", (dir / "missing.csv").string(),
                 "--out", (dir / "out").string()})
                .code,
            3);
  fs::remove_all(dir);
}

TEST(Cli, FlawedOracleFailsTheGateWithExitFour) {
  const auto dir = scratch("gate");
  ASSERT_EQ(run({"expect", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "2000", "--d-max", "64", "--out",
                 dir.string()})
                .code,
            0);
  {
    std::ofstream out(dir / "flawed.csv");
    out << flawed_oracle(slurp(dir / "expectation.csv"));
  }
  const auto r = run({"compare", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "2000", "--replicas",
                      "200", "--d-report", "10", "--oracle", (dir / "flawed.csv").string(), "--out",
                      (dir / "cmp").string()});
  EXPECT_EQ(r.code, 4) << r.out << r.err;
  EXPECT_TRUE(fs::exists(dir / "cmp" / "comparison.csv"));
  fs::remove_all(dir);
}

TEST(Cli, LockedDirectoryExitsThree) {
  const auto dir = scratch("locked");
  fs::create_directories(dir);
  { std::ofstream(dir / ".edgestep.lock") << ""; }
  const auto r = run({"expect", "--family", "constant", "--checkpoints", "10", "--out", dir.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("locked"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / ".edgestep.lock"));
  fs::remove_all(dir);
}

TEST(Cli, KaramataColumns) {
  const auto dir = scratch("karamata");
  ASSERT_EQ(run({"karamata", "--family", "power_law", "--gamma", "0.5", "--grid", "100,10000,1000000", "--out",
                 (dir / "pl").string()})
                .code,
            0);
  auto rows = csv_rows(slurp(dir / "pl" / "karamata.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "H", "G_bound", "F_exact", "F_asym", "err_term"}));
  double prev_gap = INFINITY;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], "0.0");
    const double gap = std::abs(std::stod(rows[i][3]) / std::stod(rows[i][4]) - 1.0);
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 0.01);

  ASSERT_EQ(run({"karamata", "--family", "inverse_log_power", "--c", "1", "--gamma", "0", "--out",
                 (dir / "ilp").string()})
                .code,
            0);
  rows = csv_rows(slurp(dir / "ilp" / "karamata.csv"));
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double scaled = std::stod(rows[i][1]) * std::log(std::numbers::e * std::stod(rows[i][0]));
    EXPECT_GE(scaled, 0.5);
    EXPECT_LE(scaled, 2.0);
  }

  const auto super = run({"karamata", "--family", "power_law", "--gamma", "1", "--grid", "10,100", "--out",
                          (dir / "g1").string()});
  ASSERT_EQ(super.code, 0);
  EXPECT_NE(super.out.find("warning"), std::string::npos);
  rows = csv_rows(slurp(dir / "g1" / "karamata.csv"));
  EXPECT_EQ(rows[1][1], "");
  EXPECT_EQ(rows[1][2], "");
  EXPECT_FALSE(rows[1][3].empty());
  fs::remove_all(dir);
}

TEST(Cli, MaxDegreeTraces) {
  const auto dir = scratch("maxdeg");
  ASSERT_EQ(run({"maxdeg", "--family", "power_law", "--gamma", "0.5", "--checkpoints", "1,100,10000", "--replicas", "3",
                 "--out", dir.string()})
                .code,
            0);
  const auto rows = csv_rows(slurp(dir / "maxdeg.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "max_degree", "first_vertex_degree", "first_over_t",
                                               "first_over_t_f", "replica"}));
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(std::vector<std::string>(rows[1].begin(), rows[1].begin() + 3), (std::vector<std::string>{"1", "2", "2"}));
  for (std::size_t r = 0; r < 3; ++r) {
    std::uint64_t prev = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& row = rows[1 + 3 * k + r];
      ASSERT_EQ(row[5], std::to_string(r));
      const auto m = std::stoull(row[1]);
      EXPECT_GE(m, prev);
      prev = m;
    }
  }
  const auto summary = csv_rows(slurp(dir / "maxdeg_summary.csv"));
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[1][5], "2.0");
  fs::remove_all(dir);
}

TEST(Cli, SweepRunsEveryCell) {
  const auto dir = scratch("sweep");
  const auto r = run({"sweep", "--family", "power_law", "--families", "power_law,constant", "--gammas", "0,0.5",
                      "--p", "0.5", "--checkpoints", "300", "--replicas", "40", "--d-report", "5", "--out",
                      dir.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto rows = csv_rows(slurp(dir / "sweep.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "power_law_gamma0.5" / "comparison.csv"));
  EXPECT_TRUE(fs::exists(dir / "constant_gamma0.0" / "config.resolved.txt"));
  EXPECT_EQ(run({"sweep", "--family", "power_law", "--out", (dir / "empty").string()}).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, ThreadsFallBackToEnvironment) {
  ::setenv("EDGESTEP_THREADS", "3", 1);
  EXPECT_EQ(cli::detail::resolve_threads(0), 3u);
  EXPECT_EQ(cli::detail::resolve_threads(5), 5u);
  ::setenv("EDGESTEP_THREADS", "junk", 1);
  EXPECT_EQ(cli::detail::resolve_threads(0), 0u);
  ::unsetenv("EDGESTEP_THREADS");
}
