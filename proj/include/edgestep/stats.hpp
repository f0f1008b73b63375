#pragma once

// Replica ensembles, empirical estimators and the empirical-vs-oracle report.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <new>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "histogram.hpp"
#include "process.hpp"
#include "rng.hpp"
#include "theory.hpp"

namespace edgestep {

/// P_t(d) = N_t(d) / V_t.
inline double empirical_distribution(const DegreeHistogram& hist, std::uint64_t d) {
  if (hist.vertex_count == 0) throw DomainError("empirical distribution of an empty histogram");
  return static_cast<double>(hist.count(d)) / static_cast<double>(hist.vertex_count);
}

/// N_t(<= d).
inline std::uint64_t count_at_most(const DegreeHistogram& hist, std::uint64_t d) {
  std::uint64_t s = 0;
  hist.for_each([&](std::uint64_t k, std::uint64_t n) {
    if (k <= d) s += n;
  });
  return s;
}

// ---------------------------------------------------------------------------

struct EnsembleOptions {
  EdgeStepSpec spec;
  double delta = 0.0;
  std::vector<std::uint64_t> checkpoints;
  std::size_t replicas = 1;
  std::uint64_t base_seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency
  bool retain_births = false;
  bool wide_ids = false;  // 64-bit vertex ids; forced on for t >= 2^31
};

struct ReplicaSnapshot {
  DegreeHistogram histogram;
  // Only filled when births are retained; indexed by vertex id.
  std::vector<std::uint64_t> births;
  std::vector<std::uint64_t> degrees;
};

struct ReplicaRun {
  std::uint64_t seed = 0;
  std::vector<ReplicaSnapshot> snapshots;  // one per checkpoint, ascending t
};

class ReplicaEnsemble {
 public:
  ReplicaEnsemble(EnsembleOptions options, std::vector<ReplicaRun> runs)
      : options_(std::move(options)), runs_(std::move(runs)) {}

  const EnsembleOptions& options() const noexcept { return options_; }
  const EdgeStepSpec& spec() const noexcept { return options_.spec; }
  const std::vector<std::uint64_t>& checkpoints() const noexcept { return options_.checkpoints; }
  std::size_t replica_count() const noexcept { return runs_.size(); }
  const std::vector<ReplicaRun>& runs() const noexcept { return runs_; }

  std::size_t checkpoint_index(std::uint64_t t) const {
    auto it = std::lower_bound(options_.checkpoints.begin(), options_.checkpoints.end(), t);
    if (it == options_.checkpoints.end() || *it != t) {
      throw LookupError("checkpoint t=" + std::to_string(t) + " not in ensemble");
    }
    return static_cast<std::size_t>(it - options_.checkpoints.begin());
  }

  const DegreeHistogram& histogram(std::size_t replica, std::uint64_t t) const {
    return runs_.at(replica).snapshots[checkpoint_index(t)].histogram;
  }

  friend bool operator==(const ReplicaEnsemble& a, const ReplicaEnsemble& b) {
    if (a.runs_.size() != b.runs_.size() || a.options_.checkpoints != b.options_.checkpoints) return false;
    for (std::size_t r = 0; r < a.runs_.size(); ++r) {
      const auto& x = a.runs_[r];
      const auto& y = b.runs_[r];
      if (x.seed != y.seed || x.snapshots.size() != y.snapshots.size()) return false;
      for (std::size_t i = 0; i < x.snapshots.size(); ++i) {
        if (!(x.snapshots[i].histogram == y.snapshots[i].histogram) || x.snapshots[i].births != y.snapshots[i].births ||
            x.snapshots[i].degrees != y.snapshots[i].degrees) {
          return false;
        }
      }
    }
    return true;
  }

 private:
  EnsembleOptions options_;
  std::vector<ReplicaRun> runs_;
};

namespace detail {

template <typename Id>
ReplicaRun run_replica(const EnsembleOptions& options, std::uint64_t seed) {
  ReplicaRun run;
  run.seed = seed;
  run.snapshots.reserve(options.checkpoints.size());
  GraphState<Id> state(options.spec, seed, ProcessOptions{options.delta, options.retain_births, 0});
  std::vector<typename GraphState<Id>::Observer> observers;
  for (std::uint64_t t : options.checkpoints) {
    observers.emplace_back(t, [&run](const GraphState<Id>& g) {
      ReplicaSnapshot snap;
      snap.histogram = g.snapshot_histogram();
      if (g.retains_births()) {
        snap.births = g.births();
        snap.degrees.assign(g.degrees().begin(), g.degrees().end());
      }
      run.snapshots.push_back(std::move(snap));
    });
  }
  state.run_to(options.checkpoints.back(), std::move(observers));
  return run;
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace detail

/// Runs `replicas` independent realizations; replica r uses derive_seed(base_seed, r).
/// Replicas execute concurrently on up to `threads` workers; results are stored
/// by replica index, so the output does not depend on scheduling.
inline ReplicaEnsemble run_ensemble(EnsembleOptions options) {
  options.spec.validate();
  if (options.replicas < 1) throw DomainError("run_ensemble: replicas must be >= 1");
  if (options.checkpoints.empty()) throw DomainError("run_ensemble: no checkpoints");
  std::sort(options.checkpoints.begin(), options.checkpoints.end());
  options.checkpoints.erase(std::unique(options.checkpoints.begin(), options.checkpoints.end()),
                            options.checkpoints.end());
  if (options.checkpoints.front() < 1) throw DomainError("checkpoint times must be >= 1");
  const bool wide = options.wide_ids || options.checkpoints.back() >= (std::uint64_t{1} << 31);

  std::vector<ReplicaRun> runs(options.replicas);
  std::vector<std::exception_ptr> errors(options.replicas);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < options.replicas; r = next++) {
      try {
        const std::uint64_t seed = derive_seed(options.base_seed, r);
        runs[r] = wide ? detail::run_replica<std::uint64_t>(options, seed)
                       : detail::run_replica<std::uint32_t>(options, seed);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const unsigned width = std::min<std::size_t>(detail::resolve_threads(options.threads), options.replicas);
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(width);
    for (unsigned i = 0; i < width; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t r = 0; r < errors.size(); ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const std::bad_alloc&) {
      throw ReplicaError(r, "out of memory");
    } catch (const std::exception& e) {
      throw ReplicaError(r, e.what());
    }
  }
  return ReplicaEnsemble(std::move(options), std::move(runs));
}

// ---------------------------------------------------------------------------

struct ComparisonCell {
  std::uint64_t t = 0;
  std::uint64_t d = 0;
  double emp_mean = 0.0;      // mean over replicas of P_t(d)
  double emp_se = 0.0;        // its standard error
  double count_mean = 0.0;    // mean of N_t(d)
  double count_se = 0.0;
  double oracle_count = 0.0;  // E N_t(d)
  double oracle = 0.0;        // E N_t(d) / F(t)
  std::optional<double> limit_p;
  std::optional<Concentration> band;  // absent for gamma >= 1 or t = 1
  std::optional<bool> band_pass;
  std::optional<double> corollary_band;  // A sqrt(40 d^2 / F(t)) + err_t(alpha), around p_gamma(d)
  double z_score = 0.0;  // (count_mean - oracle_count) / count_se
};

struct ComparisonReport {
  EdgeStepSpec spec;
  std::size_t replicas = 0;
  double A = 0.0;
  double alpha = 0.0;
  bool bands_available = false;
  std::vector<ComparisonCell> cells;  // ordered by t, then d

  /// Cells of checkpoint t with |z| > z_gate.
  std::size_t cells_over(std::uint64_t t, double z_gate) const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [&](const auto& c) {
      return c.t == t && !(std::abs(c.z_score) <= z_gate);
    }));
  }

  /// Oracle-agreement gate: at every checkpoint at most `allowance` cells exceed z_gate.
  bool gate_pass(double z_gate = 4.0, std::size_t allowance = 1) const {
    std::map<std::uint64_t, std::size_t> over;
    for (const auto& c : cells) {
      if (!(std::abs(c.z_score) <= z_gate)) ++over[c.t];
    }
    return std::all_of(over.begin(), over.end(), [&](const auto& kv) { return kv.second <= allowance; });
  }
};

namespace detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  long double sum = 0.0L;
  for (double x : xs) sum += x;
  const double mean = static_cast<double>(sum / xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(static_cast<double>(ss / (n - 1.0)) / n)};
}

inline double z_score(double mean, double se, double expected) {
  const double diff = mean - expected;
  if (se > 0.0) return diff / se;
  if (std::abs(diff) <= 1e-9 * std::max(1.0, std::abs(expected))) return 0.0;
  return diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Per (t, d <= d_report): replica mean and SE of N_t(d) and P_t(d), the z-score
/// against the recursion's E N_t(d), the concentration band around
/// E N_t(d)/F(t), and p_gamma(d) (only when f vanishes at infinity).
inline ComparisonReport compare_to_theory(const ReplicaEnsemble& ensemble, const ExpectationTable& table, double A,
                                          double alpha, std::uint64_t d_report = 20) {
  for (std::uint64_t t : ensemble.checkpoints()) {
    if (!table.has_checkpoint(t)) throw LookupError("expectation table lacks ensemble checkpoint t=" + std::to_string(t));
  }
  if (d_report < 1) throw DomainError("d_report must be >= 1");
  if (d_report > table.d_max()) throw LookupError("d_report exceeds the expectation table's degree range");
  const double gamma = ensemble.spec().index_gamma();
  const bool has_limit = ensemble.spec().vanishes_at_infinity();

  ComparisonReport report;
  report.spec = ensemble.spec();
  report.replicas = ensemble.replica_count();
  report.A = A;
  report.alpha = alpha;
  report.bands_available = gamma < 1.0;

  std::vector<double> counts(ensemble.replica_count());
  std::vector<double> fractions(ensemble.replica_count());
  for (std::uint64_t t : ensemble.checkpoints()) {
    const std::size_t k = ensemble.checkpoint_index(t);
    std::optional<double> err;
    if (gamma < 1.0 && t >= 2 && alpha > 0.0 && alpha < 1.0) {
      err = err_term(ensemble.spec(), static_cast<double>(t), alpha).value;
    }
    for (std::uint64_t d = 1; d <= d_report; ++d) {
      for (std::size_t r = 0; r < ensemble.replica_count(); ++r) {
        const auto& h = ensemble.runs()[r].snapshots[k].histogram;
        counts[r] = static_cast<double>(h.count(d));
        fractions[r] = counts[r] / static_cast<double>(h.vertex_count);
      }
      ComparisonCell cell;
      cell.t = t;
      cell.d = d;
      const auto n = detail::mean_se(counts);
      const auto p = detail::mean_se(fractions);
      cell.count_mean = n.mean;
      cell.count_se = n.se;
      cell.emp_mean = p.mean;
      cell.emp_se = p.se;
      cell.oracle_count = table.expected_count(t, d);
      cell.oracle = cell.oracle_count / table.expected_vertices(t);
      cell.z_score = detail::z_score(n.mean, n.se, cell.oracle_count);
      if (gamma < 1.0) {
        if (has_limit) cell.limit_p = p_gamma(gamma, d);
        if (t >= 2) {
          cell.band = concentration_halfwidth(gamma, table.expected_vertices(t), t, d, A);
          cell.band_pass = std::abs(cell.emp_mean - cell.oracle) <= cell.band->halfwidth;
          if (err && has_limit) cell.corollary_band = corollary_concentration_part(table.expected_vertices(t), d, A) + *err;
        }
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

inline void write_comparison_csv(std::ostream& out, const ComparisonReport& report) {
  out << "t,d,emp_mean,emp_se,oracle,limit_p,halfwidth,band_pass,z_score\n";
  for (const auto& c : report.cells) {
    out << c.t << ',' << c.d << ',' << format_double(c.emp_mean) << ',' << format_double(c.emp_se) << ','
        << format_double(c.oracle) << ',' << (c.limit_p ? format_double(*c.limit_p) : "") << ','
        << (c.band ? format_double(c.band->halfwidth) : "") << ','
        << (c.band_pass ? (*c.band_pass ? "true" : "false") : "") << ',' << format_double(c.z_score) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct TailFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares of log value on log d over d in [d_min, d_max].
inline TailFit fit_tail_exponent(const std::map<std::uint64_t, double>& values, std::uint64_t d_min,
                                 std::uint64_t d_max) {
  std::vector<std::pair<double, double>> pts;
  for (auto it = values.lower_bound(d_min); it != values.end() && it->first <= d_max; ++it) {
    if (it->first >= 1 && it->second > 0.0) {
      pts.emplace_back(std::log(static_cast<double>(it->first)), std::log(it->second));
    }
  }
  if (pts.size() < 5) throw DomainError("fit_tail_exponent needs at least 5 positive points in range");
  const double n = static_cast<double>(pts.size());
  double mx = 0, my = 0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ssr = 0;
  for (auto [x, y] : pts) {
    const double r = y - (intercept + slope * x);
    ssr += r * r;
  }
  return {slope, pts.size() > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : 0.0, pts.size()};
}

/// Fraction, among vertices born at step <= t^(1 - delta_exp), with degree <= d
/// at time t; averaged over replicas. Needs an ensemble run with births retained.
inline double early_vertex_small_degree_rate(const ReplicaEnsemble& ensemble, std::uint64_t t, double delta_exp,
                                             std::uint64_t d) {
  if (!(delta_exp > 0.0 && delta_exp < 1.0)) throw DomainError("delta_exp must lie in (0, 1)");
  if (!ensemble.options().retain_births) throw DomainError("early-vertex rate needs an ensemble with retained births");
  const std::size_t k = ensemble.checkpoint_index(t);
  const double cutoff = std::floor(std::pow(static_cast<double>(t), 1.0 - delta_exp) + 1e-9);
  long double total = 0.0L;
  for (const auto& run : ensemble.runs()) {
    const auto& snap = run.snapshots[k];
    std::uint64_t eligible = 0, small = 0;
    for (std::size_t v = 0; v < snap.births.size() && static_cast<double>(snap.births[v]) <= cutoff; ++v) {
      ++eligible;
      if (snap.degrees[v] <= d) ++small;
    }
    total += eligible == 0 ? 0.0L : static_cast<long double>(small) / eligible;
  }
  return static_cast<double>(total / ensemble.replica_count());
}

/// e^d t^(-delta/4): the upper bound on P(D_t(v_r) <= d) for r <= t^(1-delta).
inline double early_vertex_bound(std::uint64_t t, double delta_exp, std::uint64_t d) {
  return std::exp(static_cast<double>(d)) * std::pow(static_cast<double>(t), -delta_exp / 4.0);
}

struct MaxDegreePoint {
  std::uint64_t t = 0;
  double max_degree = 0.0;           // replica mean
  double first_vertex_degree = 0.0;  // replica mean of D_t(v_1)
  double first_over_t = 0.0;         // mean of D_t(v_1) / t
  double first_over_t_f = 0.0;       // mean of D_t(v_1) / (t f(t))
};

struct MaxDegreeTrace {
  std::vector<MaxDegreePoint> mean;
  // per_replica[r][k] = (max degree, first-vertex degree) at checkpoint k.
  std::vector<std::vector<std::pair<std::uint64_t, std::uint64_t>>> per_replica;
};

inline MaxDegreeTrace max_degree_trace(const ReplicaEnsemble& ensemble) {
  MaxDegreeTrace trace;
  const auto& cps = ensemble.checkpoints();
  const double n = static_cast<double>(ensemble.replica_count());
  trace.per_replica.resize(ensemble.replica_count());
  for (std::size_t k = 0; k < cps.size(); ++k) {
    const double t = static_cast<double>(cps[k]);
    const double ft = evaluate(ensemble.spec(), t);
    MaxDegreePoint p;
    p.t = cps[k];
    for (std::size_t r = 0; r < ensemble.replica_count(); ++r) {
      const auto& h = ensemble.runs()[r].snapshots[k].histogram;
      trace.per_replica[r].emplace_back(h.max_degree, h.first_vertex_degree);
      const double first = static_cast<double>(h.first_vertex_degree);
      p.max_degree += static_cast<double>(h.max_degree) / n;
      p.first_vertex_degree += first / n;
      p.first_over_t += first / t / n;
      p.first_over_t_f += first / (t * ft) / n;
    }
    trace.mean.push_back(p);
  }
  return trace;
}

}  // namespace edgestep
