#pragma once

// Batch experiment runner behind the `edgestep` executable.
//
// Exit codes: 0 success, 2 configuration error, 3 operational error,
// 4 statistical gate failure (compare / sweep only).

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "process.hpp"
#include "stats.hpp"
#include "theory.hpp"

namespace edgestep::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kOperationalError = 3, kGateFailure = 4 };

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

/// Exclusive ownership of an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".edgestep.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw OperationalError(errno == EEXIST ? "output directory is locked by another run: " + path_.string()
                                             : "cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

namespace detail {

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OperationalError("cannot write " + path.string());
  return out;
}

inline void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw OperationalError("write failed: " + path.string());
}

inline unsigned resolve_threads(unsigned configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("EDGESTEP_THREADS"); env != nullptr && *env != '\0') {
    try {
      const auto n = parse_integer<unsigned>(env, "EDGESTEP_THREADS");
      if (n > 0) return n;
    } catch (const ConfigError&) {
    }
  }
  return 0;
}

inline EnsembleOptions ensemble_options(const ExperimentConfig& c, bool retain_births = false) {
  EnsembleOptions o;
  o.spec = c.spec;
  o.delta = c.delta;
  o.checkpoints = c.checkpoints;
  o.replicas = c.replicas;
  o.base_seed = c.seed;
  o.threads = resolve_threads(c.threads);
  o.retain_births = retain_births;
  o.wide_ids = c.wide_ids;
  return o;
}

inline void write_resolved_config(const ExperimentConfig& c, const fs::path& dir) {
  const fs::path path = dir / "config.resolved.txt";
  auto out = open_output(path);
  out << serialize_config(c);
  finish(out, path);
}

inline std::optional<double> json_number(double x) {
  if (!std::isfinite(x)) return std::nullopt;
  return x;
}

inline std::uint64_t max_checkpoint(const ExperimentConfig& c) {
  return *std::max_element(c.checkpoints.begin(), c.checkpoints.end());
}

inline void write_edge_list(const ExperimentConfig& c, const fs::path& dir) {
  const fs::path path = dir / "edges.csv";
  auto out = open_output(path);
  out << "step,endpoint_a,endpoint_b,step_type\n";
  GraphState<std::uint64_t> state(c.spec, derive_seed(c.seed, 0), ProcessOptions{c.delta, false, max_checkpoint(c)});
  out << "1,0,0,initial\n";
  while (state.t() < max_checkpoint(c)) {
    const auto step = state.advance();
    out << state.t() << ',' << step.endpoint_a << ',' << step.endpoint_b << ','
        << (step.type == StepType::Vertex ? "vertex" : "edge") << '\n';
  }
  finish(out, path);
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_simulate(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  const ReplicaEnsemble ensemble = run_ensemble(detail::ensemble_options(c));
  for (std::uint64_t t : ensemble.checkpoints()) {
    DegreeHistogram pooled;
    for (std::size_t r = 0; r < ensemble.replica_count(); ++r) {
      ensemble.histogram(r, t).for_each([&](std::uint64_t d, std::uint64_t n) { pooled.add(d, n); });
    }
    const fs::path path = dir / ("histogram_t" + std::to_string(t) + ".csv");
    auto out = detail::open_output(path);
    out << "d,count\n";
    pooled.for_each([&](std::uint64_t d, std::uint64_t n) { out << d << ',' << n << '\n'; });
    detail::finish(out, path);
  }
  const fs::path summary = dir / "summary.jsonl";
  auto out = detail::open_output(summary);
  for (std::size_t r = 0; r < ensemble.replica_count(); ++r) {
    for (std::uint64_t t : ensemble.checkpoints()) {
      const auto& h = ensemble.histogram(r, t);
      ordered_json rec;
      rec["replica"] = r;
      rec["seed"] = ensemble.runs()[r].seed;
      rec["t"] = t;
      rec["vertex_count"] = h.vertex_count;
      rec["max_degree"] = h.max_degree;
      rec["first_vertex_degree"] = h.first_vertex_degree;
      rec["expected_vertices"] = expected_vertices(c.spec, t);
      out << rec.dump() << '\n';
    }
  }
  detail::finish(out, summary);
  if (c.edges) detail::write_edge_list(c, dir);
  log << "simulate: " << ensemble.replica_count() << " replicas, " << ensemble.checkpoints().size()
      << " checkpoints -> " << dir.string() << '\n';
  return kOk;
}

/// Mass identity (and, without truncation, the degree identity) for every row.
inline bool self_check(const ExpectationTable& table, std::ostream& log) {
  bool ok = true;
  for (const auto& row : table.rows()) {
    const double mass = table.retained_mass(row.t) + row.truncated_mass;
    const double mass_err = std::abs(mass - row.expected_vertices) / row.expected_vertices;
    const bool mass_ok = mass_err <= 1e-9;
    log << "mass identity t=" << row.t << " rel_err=" << format_double(mass_err) << (mass_ok ? " ok" : " FAILED")
        << '\n';
    ok = ok && mass_ok;
    if (table.d_max() >= 2 * row.t) {
      const double target = 2.0 * static_cast<double>(row.t);
      const double deg_err = std::abs(table.degree_sum(row.t) - target) / target;
      const bool deg_ok = deg_err <= 1e-9;
      log << "degree identity t=" << row.t << " rel_err=" << format_double(deg_err) << (deg_ok ? " ok" : " FAILED")
          << '\n';
      ok = ok && deg_ok;
    }
  }
  if (table.truncation_warning()) log << "warning: more than 1e-6 F(t) of expected mass lies above d_max\n";
  return ok;
}

inline int cmd_expect(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  const ExpectationTable table = evolve_expectations(c.spec, c.checkpoints, c.d_max);
  const fs::path path = dir / "expectation.csv";
  auto out = detail::open_output(path);
  write_expectation_csv(out, table);
  detail::finish(out, path);
  if (!self_check(table, log)) {
    log << "expect: self-check failed\n";
    return kOperationalError;
  }
  return kOk;
}

struct CompareOutcome {
  ComparisonReport report;
  bool gate = false;
  std::size_t allowance = 1;
};

inline CompareOutcome run_compare(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  ExpectationTable table;
  if (!c.oracle.empty()) {
    std::ifstream in(c.oracle);
    if (!in) throw OperationalError("cannot read oracle file '" + c.oracle + "'");
    table = read_expectation_csv(in, c.spec, c.d_report);
  } else {
    const std::uint64_t d_max =
        std::max(c.d_max == 0 ? default_d_max(detail::max_checkpoint(c)) : c.d_max, c.d_report);
    table = evolve_expectations(c.spec, c.checkpoints, d_max);
  }
  const ReplicaEnsemble ensemble = run_ensemble(detail::ensemble_options(c));
  CompareOutcome outcome;
  outcome.report = compare_to_theory(ensemble, table, c.A, c.alpha, c.d_report);
  outcome.allowance = std::max<std::size_t>(1, c.d_report / 10);
  outcome.gate = outcome.report.gate_pass(4.0, outcome.allowance);

  const fs::path csv = dir / "comparison.csv";
  auto out = detail::open_output(csv);
  write_comparison_csv(out, outcome.report);
  detail::finish(out, csv);

  const fs::path jsonl = dir / "comparison.jsonl";
  auto js = detail::open_output(jsonl);
  for (const auto& cell : outcome.report.cells) {
    ordered_json rec;
    rec["t"] = cell.t;
    rec["d"] = cell.d;
    rec["emp_mean"] = cell.emp_mean;
    rec["emp_se"] = cell.emp_se;
    rec["oracle"] = cell.oracle;
    rec["count_mean"] = cell.count_mean;
    rec["count_se"] = cell.count_se;
    rec["oracle_count"] = cell.oracle_count;
    rec["limit_p"] = cell.limit_p ? ordered_json(*cell.limit_p) : ordered_json(nullptr);
    rec["halfwidth"] = cell.band ? ordered_json(cell.band->halfwidth) : ordered_json(nullptr);
    rec["condition_ok"] = cell.band ? ordered_json(cell.band->condition_ok) : ordered_json(nullptr);
    rec["failure_prob"] = cell.band ? ordered_json(cell.band->failure_prob) : ordered_json(nullptr);
    rec["band_pass"] = cell.band_pass ? ordered_json(*cell.band_pass) : ordered_json(nullptr);
    rec["corollary_band"] = cell.corollary_band ? ordered_json(*cell.corollary_band) : ordered_json(nullptr);
    rec["corollary_unit_constant"] = true;
    const auto z = detail::json_number(cell.z_score);
    rec["z_score"] = z ? ordered_json(*z) : ordered_json(nullptr);
    rec["replicas"] = outcome.report.replicas;
    rec["A"] = c.A;
    js << rec.dump() << '\n';
  }
  detail::finish(js, jsonl);

  for (std::uint64_t t : ensemble.checkpoints()) {
    log << "compare t=" << t << ": " << outcome.report.cells_over(t, 4.0) << " of " << c.d_report
        << " cells beyond 4 SE (allowed " << outcome.allowance << ")\n";
  }
  if (!outcome.report.bands_available) log << "note: gamma >= 1, concentration bands omitted\n";
  log << "compare: oracle-agreement gate " << (outcome.gate ? "passed" : "FAILED") << '\n';
  return outcome;
}

inline int cmd_compare(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  return run_compare(c, dir, log).gate ? kOk : kGateFailure;
}

inline int cmd_karamata(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  if (c.grid.empty()) throw ConfigError("karamata needs a non-empty 'grid'");
  std::vector<std::uint64_t> grid = c.grid;
  std::sort(grid.begin(), grid.end());
  const bool sub = c.spec.index_gamma() < 1.0;
  if (!sub) log << "warning: gamma >= 1, H/G_bound/F_asym/err_term columns left blank\n";
  const VertexCountCurve curve(c.spec);
  const fs::path path = dir / "karamata.csv";
  auto out = detail::open_output(path);
  out << "t,H,G_bound,F_exact,F_asym,err_term\n";
  for (std::uint64_t t : grid) {
    const double td = static_cast<double>(t);
    out << t << ',';
    if (sub) out << format_double(h_integral(c.spec, td)) << ',' << format_double(g_bound(c.spec, t));
    else out << ',';
    out << ',' << format_double(curve(t)) << ',';
    if (sub) {
      out << format_double(expected_vertices_asymptotic(c.spec, td)) << ','
          << format_double(err_term(c.spec, td, c.alpha).value);
    } else {
      out << ',';
    }
    out << '\n';
  }
  detail::finish(out, path);
  if (sub) log << "karamata: err_term sup(H) grid ratio 1.25, capped at s = t^2; unit multiplicative constant\n";
  return kOk;
}

inline int cmd_maxdeg(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  const ReplicaEnsemble ensemble = run_ensemble(detail::ensemble_options(c));
  const MaxDegreeTrace trace = max_degree_trace(ensemble);
  const auto& cps = ensemble.checkpoints();

  const fs::path path = dir / "maxdeg.csv";
  auto out = detail::open_output(path);
  out << "t,max_degree,first_vertex_degree,first_over_t,first_over_t_f,replica\n";
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const double t = static_cast<double>(cps[k]);
    const double ft = evaluate(c.spec, t);
    for (std::size_t r = 0; r < trace.per_replica.size(); ++r) {
      const auto [max_d, first] = trace.per_replica[r][k];
      out << cps[k] << ',' << max_d << ',' << first << ',' << format_double(static_cast<double>(first) / t) << ','
          << format_double(static_cast<double>(first) / (t * ft)) << ',' << r << '\n';
    }
  }
  detail::finish(out, path);

  const auto expected_first = expected_first_vertex_degree(c.spec, cps);
  const fs::path summary = dir / "maxdeg_summary.csv";
  auto sum = detail::open_output(summary);
  sum << "t,mean_max_degree,mean_first_vertex_degree,mean_first_over_t,mean_first_over_t_f,expected_first_vertex_degree\n";
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const auto& p = trace.mean[k];
    sum << p.t << ',' << format_double(p.max_degree) << ',' << format_double(p.first_vertex_degree) << ','
        << format_double(p.first_over_t) << ',' << format_double(p.first_over_t_f) << ','
        << format_double(expected_first[k]) << '\n';
  }
  detail::finish(sum, summary);
  log << "maxdeg: traces for " << trace.per_replica.size() << " replicas written\n";
  return kOk;
}

inline int cmd_sweep(const ExperimentConfig& c, const fs::path& dir, std::ostream& log) {
  if (c.families.empty() || c.gammas.empty()) throw ConfigError("sweep needs non-empty 'families' and 'gammas'");
  const fs::path path = dir / "sweep.csv";
  auto out = detail::open_output(path);
  out << "family,gamma,t,cells_over_4se,max_abs_z,gate_pass\n";
  bool all_pass = true;
  for (const auto& name : c.families) {
    const Family family = family_from_name(name);
    for (std::size_t gi = 0; gi < c.gammas.size(); ++gi) {
      if (family == Family::Constant && gi > 0) break;  // gamma does not apply
      ExperimentConfig sub = c;
      sub.spec.family = family;
      sub.spec.gamma = family == Family::Constant ? 0.0 : c.gammas[gi];
      sub.spec.validate();
      const fs::path sub_dir = dir / (name + "_gamma" + format_double(sub.spec.gamma));
      fs::create_directories(sub_dir);
      sub.out = sub_dir.string();
      detail::write_resolved_config(sub, sub_dir);
      const CompareOutcome outcome = run_compare(sub, sub_dir, log);
      all_pass = all_pass && outcome.gate;
      for (std::uint64_t t : sub.checkpoints) {
        double max_z = 0.0;
        for (const auto& cell : outcome.report.cells) {
          if (cell.t == t) max_z = std::max(max_z, std::abs(cell.z_score));
        }
        out << name << ',' << format_double(sub.spec.gamma) << ',' << t << ','
            << outcome.report.cells_over(t, 4.0) << ',' << format_double(max_z) << ','
            << (outcome.gate ? "true" : "false") << '\n';
      }
    }
  }
  detail::finish(out, path);
  return all_pass ? kOk : kGateFailure;
}

// ---------------------------------------------------------------------------

/// Entry point shared by the executable and the integration tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Edge-step preferential attachment: simulation, exact expectations and diagnostics", "edgestep"};
  app.require_subcommand(1);

  std::string config_path;
  FieldMap overrides;
  bool wide_ids = false;
  bool edges = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key=value grammar)");
    struct Flag {
      const char* name;
      const char* key;
      const char* help;
    };
    static const Flag flags[] = {
        {"--seed", "seed", "Base seed (u64)"},
        {"--replicas", "replicas", "Number of replicas"},
        {"--checkpoints", "checkpoints", "Comma separated checkpoint times"},
        {"--family", "family", "Edge-step family"},
        {"--gamma", "gamma", "Regular variation index gamma"},
        {"--c", "c", "power_law constant / inverse_log_power exponent"},
        {"--p", "p", "constant family probability"},
        {"--log-delta", "log_delta", "exp_neg_log_delta exponent"},
        {"--delta", "delta", "Affine offset (>= 0)"},
        {"--out", "out", "Output directory"},
        {"--threads", "threads", "Parallel width (0 = EDGESTEP_THREADS or hardware)"},
        {"--d-max", "d_max", "Recursion degree cap (0 = auto)"},
        {"--d-report", "d_report", "Degrees reported by compare"},
        {"--A", "A", "Concentration parameter A"},
        {"--alpha", "alpha", "err_t parameter alpha"},
        {"--grid", "grid", "Comma separated karamata grid"},
        {"--gammas", "gammas", "Sweep gammas"},
        {"--families", "families", "Sweep families"},
        {"--oracle", "oracle", "Expectation CSV used by compare"},
    };
    for (const auto& f : flags) {
      sub->add_option_function<std::string>(
          f.name, [&overrides, key = std::string(f.key)](const std::string& v) { overrides[key] = v; }, f.help);
    }
    sub->add_flag("--wide-ids", wide_ids, "64-bit vertex ids");
    sub->add_flag("--edges", edges, "Export replica 0's edge list (simulate)");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&, const fs::path&, std::ostream&);
  };
  static const Command commands[] = {
      {"simulate", "Run an ensemble and write degree histograms", cmd_simulate},
      {"expect", "Run the exact expectation recursion", cmd_expect},
      {"compare", "Compare an ensemble with the recursion", cmd_compare},
      {"karamata", "Regular-variation diagnostics on a time grid", cmd_karamata},
      {"maxdeg", "Maximum and first-vertex degree traces", cmd_maxdeg},
      {"sweep", "compare over families x gammas", cmd_sweep},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : commands) {
    subs.push_back(app.add_subcommand(cmd.name, cmd.help));
    add_common(subs.back());
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  const Command* chosen = nullptr;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) chosen = &commands[i];
  }

  ExperimentConfig config;
  try {
    FieldMap fields;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
      std::stringstream buf;
      buf << in.rdbuf();
      fields = tokenize_config(buf.str());
    }
    for (const auto& [k, v] : overrides) fields[k] = v;
    if (wide_ids) fields["wide_ids"] = "true";
    if (edges) fields["edges"] = "true";
    if (!fields.contains("family")) throw ConfigError("missing key 'family'");
    config = apply_fields(ExperimentConfig{}, fields);
    validate_config(config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const fs::path dir(config.out);
    fs::create_directories(dir);
    DirectoryLock lock(dir);
    detail::write_resolved_config(config, dir);
    return chosen->fn(config, dir, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOperationalError;
  }
}

}  // namespace edgestep::cli
