#pragma once

// Deterministic ground truth: the limiting degree law p_gamma, the exact
// recursion for E N_t(d), and the concentration / band formulas that the
// simulations are compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "format.hpp"

namespace edgestep {

inline void require_limit_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("p_gamma requires gamma in [0, 1)");
}

/// p_gamma(d) = (1-gamma) Gamma(2-gamma) Gamma(d) / Gamma(d+2-gamma), through log-Gamma.
inline double p_gamma(double gamma, std::uint64_t d) {
  require_limit_gamma(gamma);
  if (d < 1) throw DomainError("p_gamma requires d >= 1");
  const double dd = static_cast<double>(d);
  const double log_p = std::log1p(-gamma) + std::lgamma(2.0 - gamma) + std::lgamma(dd) - std::lgamma(dd + 2.0 - gamma);
  return std::exp(log_p);
}

/// Same quantity from p(1) = (1-gamma)/(2-gamma), p(d) = (d-1)/(d+1-gamma) p(d-1).
inline double p_gamma_recursive(double gamma, std::uint64_t d) {
  require_limit_gamma(gamma);
  if (d < 1) throw DomainError("p_gamma requires d >= 1");
  double p = (1.0 - gamma) / (2.0 - gamma);
  for (std::uint64_t k = 2; k <= d; ++k) {
    const double kd = static_cast<double>(k);
    p *= (kd - 1.0) / (kd + 1.0 - gamma);
  }
  return p;
}

// ---------------------------------------------------------------------------

struct ExpectationRow {
  std::uint64_t t = 0;
  double expected_vertices = 0.0;  // F(t)
  double truncated_mass = 0.0;     // expected number of vertices with degree > d_max
  std::vector<double> counts;      // counts[d-1] = E N_t(d), d = 1..d_max
};

/// E N_t(d) for 1 <= d <= d_max at a set of checkpoint times.
class ExpectationTable {
 public:
  ExpectationTable() = default;
  ExpectationTable(std::optional<EdgeStepSpec> spec, std::uint64_t d_max, std::vector<ExpectationRow> rows)
      : spec_(spec), d_max_(d_max), rows_(std::move(rows)) {
    std::sort(rows_.begin(), rows_.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  }

  const std::optional<EdgeStepSpec>& spec() const noexcept { return spec_; }
  std::uint64_t d_max() const noexcept { return d_max_; }
  std::uint64_t t_max() const noexcept { return rows_.empty() ? 0 : rows_.back().t; }
  const std::vector<ExpectationRow>& rows() const noexcept { return rows_; }

  /// Set when some checkpoint lost more than 1e-6 F(t) of mass above d_max.
  bool truncation_warning() const noexcept {
    return std::any_of(rows_.begin(), rows_.end(),
                       [](const auto& r) { return r.truncated_mass > 1e-6 * r.expected_vertices; });
  }

  bool has_checkpoint(std::uint64_t t) const noexcept { return find(t) != nullptr; }

  std::vector<std::uint64_t> checkpoints() const {
    std::vector<std::uint64_t> out;
    for (const auto& r : rows_) out.push_back(r.t);
    return out;
  }

  const ExpectationRow& row(std::uint64_t t) const {
    if (const auto* r = find(t)) return *r;
    throw LookupError("no checkpoint t=" + std::to_string(t) + " in expectation table");
  }

  double expected_count(std::uint64_t t, std::uint64_t d) const {
    const auto& r = row(t);
    if (d < 1 || d > d_max_) throw LookupError("degree " + std::to_string(d) + " outside table range");
    return r.counts[d - 1];
  }

  double expected_vertices(std::uint64_t t) const { return row(t).expected_vertices; }

  /// Sum over retained degrees.
  double retained_mass(std::uint64_t t) const {
    const auto& c = row(t).counts;
    long double s = 0.0L;
    for (double x : c) s += x;
    return static_cast<double>(s);
  }

  double degree_sum(std::uint64_t t) const {
    const auto& c = row(t).counts;
    long double s = 0.0L;
    for (std::size_t i = 0; i < c.size(); ++i) s += static_cast<long double>(i + 1) * c[i];
    return static_cast<double>(s);
  }

  /// E N_t(<= d).
  double expected_count_at_most(std::uint64_t t, std::uint64_t d) const {
    const auto& c = row(t).counts;
    long double s = 0.0L;
    for (std::uint64_t k = 1; k <= std::min<std::uint64_t>(d, d_max_); ++k) s += c[k - 1];
    return static_cast<double>(s);
  }

 private:
  const ExpectationRow* find(std::uint64_t t) const noexcept {
    auto it = std::lower_bound(rows_.begin(), rows_.end(), t, [](const auto& r, std::uint64_t v) { return r.t < v; });
    return it != rows_.end() && it->t == t ? &*it : nullptr;
  }

  std::optional<EdgeStepSpec> spec_;
  std::uint64_t d_max_ = 0;
  std::vector<ExpectationRow> rows_;
};

/// Support cap used when the caller passes d_max = 0.
inline std::uint64_t default_d_max(std::uint64_t t_max) { return std::clamp<std::uint64_t>(2 * t_max, 2, 20000); }

/// Runs the exact recursion for E N_t(d) from G_1 (one vertex carrying a loop).
///
/// Step t -> t+1 with f = f(t+1), a = (2-f)/(2t), b = (1-f)/(4t^2):
///   E N_{t+1}(1) = (1 - a + b) E N_t(1) + f
///   E N_{t+1}(d) = (1 - a d + b d^2) E N_t(d)
///                + (a (d-1) - 2 b (d-1)^2) E N_t(d-1)
///                + b (d-2)^2 E N_t(d-2)
/// i.e. the degree of a vertex grows by one with probability a d - 2 b d^2 and
/// by two (a loop) with probability b d^2. Entries with d <= d_max do not
/// depend on anything above d_max, so truncation is exact below the cap; mass
/// pushed past d_max is accumulated separately.
inline ExpectationTable evolve_expectations(const EdgeStepSpec& spec, std::vector<std::uint64_t> checkpoints,
                                            std::uint64_t d_max = 0) {
  spec.validate();
  if (checkpoints.empty()) throw DomainError("evolve_expectations: no checkpoints");
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  if (checkpoints.front() < 1) throw DomainError("checkpoint times must be >= 1");
  if (d_max == 0) d_max = default_d_max(checkpoints.back());
  if (d_max < 2) throw DomainError("d_max must be >= 2");

  // cur[d] for d = 0..d_max; index 0 stays zero so that d-1, d-2 lookups need no branches.
  std::vector<double> cur(d_max + 1, 0.0);
  cur[2] = 1.0;
  long double vertices = 1.0L;
  long double overflow = 0.0L;
  std::vector<ExpectationRow> rows;
  rows.reserve(checkpoints.size());
  auto record = [&](std::uint64_t t) {
    rows.push_back({t, static_cast<double>(vertices), static_cast<double>(overflow),
                    std::vector<double>(cur.begin() + 1, cur.end())});
  };

  std::size_t next = 0;
  if (checkpoints[next] == 1) record(checkpoints[next++]);
  for (std::uint64_t t = 1; next < checkpoints.size(); ++t) {
    const double f = evaluate(spec, static_cast<double>(t + 1));
    const double td = static_cast<double>(t);
    const double a = (2.0 - f) / (2.0 * td);
    const double b = (1.0 - f) / (4.0 * td * td);

    const double top = static_cast<double>(d_max);
    overflow += (a * top - b * top * top) * cur[d_max] + b * (top - 1.0) * (top - 1.0) * cur[d_max - 1];

    // Degrees at time t are at most 2t, so rows above 2t+2 are still zero.
    const std::uint64_t hi = std::min<std::uint64_t>(d_max, 2 * t + 2);
    for (std::uint64_t d = hi; d >= 2; --d) {
      const double dd = static_cast<double>(d);
      const double d1 = dd - 1.0;
      const double d2 = dd - 2.0;
      double next_value = (1.0 - a * dd + b * dd * dd) * cur[d] + (a * d1 - 2.0 * b * d1 * d1) * cur[d - 1];
      if (d >= 3) next_value += b * d2 * d2 * cur[d - 2];
      cur[d] = next_value;
    }
    cur[1] = (1.0 - a + b) * cur[1] + f;
    vertices += f;

    if (t + 1 == checkpoints[next]) record(checkpoints[next++]);
  }
  return ExpectationTable(spec, d_max, std::move(rows));
}

/// E N_t(d) / F(t).
inline double expected_ratio(const ExpectationTable& table, std::uint64_t t, std::uint64_t d) {
  return table.expected_count(t, d) / table.expected_vertices(t);
}

/// E D_t(v_1) at each checkpoint, from E D_{t+1} = (1 + 1/t - f(t+1)/(2t)) E D_t and E D_1 = 2.
inline std::vector<double> expected_first_vertex_degree(const EdgeStepSpec& spec, std::vector<std::uint64_t> checkpoints) {
  std::sort(checkpoints.begin(), checkpoints.end());
  std::vector<double> out;
  double degree = 2.0;
  std::uint64_t t = 1;
  for (std::uint64_t target : checkpoints) {
    if (target < 1) throw DomainError("checkpoint times must be >= 1");
    for (; t < target; ++t) {
      const double td = static_cast<double>(t);
      degree *= 1.0 + 1.0 / td - evaluate(spec, td + 1.0) / (2.0 * td);
    }
    out.push_back(degree);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Concentration bounds.

struct Concentration {
  double halfwidth = 0.0;
  bool condition_ok = false;
  double failure_prob = 0.0;
};

/// Band |P_t(d) - E N_t(d)/F(t)| <= 10 d A / sqrt((1-gamma) F(t)), valid with
/// probability >= 1 - 3 exp(-A^2/3) when A < sqrt(F(t)/(1-gamma)) / (4 d log t).
inline Concentration concentration_halfwidth(double gamma, double expected_vertices, std::uint64_t t, std::uint64_t d,
                                             double A) {
  if (gamma >= 1.0) throw UnsupportedRegime("concentration band requires gamma < 1");
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  if (t < 2 || d < 1 || !(A > 0.0) || !(expected_vertices > 0.0)) {
    throw DomainError("concentration band requires t >= 2, d >= 1, A > 0");
  }
  const double dd = static_cast<double>(d);
  Concentration c;
  c.halfwidth = 10.0 * dd * A / std::sqrt((1.0 - gamma) * expected_vertices);
  c.condition_ok = A < std::sqrt(expected_vertices / (1.0 - gamma)) / (4.0 * dd * std::log(static_cast<double>(t)));
  c.failure_prob = 3.0 * std::exp(-A * A / 3.0);
  return c;
}

inline Concentration concentration_halfwidth(const EdgeStepSpec& spec, std::uint64_t t, std::uint64_t d, double A) {
  require_subcritical(spec, "concentration band");
  return concentration_halfwidth(spec.index_gamma(), expected_vertices(spec, t), t, d, A);
}

/// P(|N_t(d) - E N_t(d)| >= lambda) <= exp(-l^2/(2 s^2 + 8l/3)) + exp(-l^2/(2F(t) + 4l/3)),
/// s^2 = 10 d^2 sum_{s=1}^{t-1} (F(s) + lambda)/s. Holds for any edge-step function.
inline double general_concentration_bound(const EdgeStepSpec& spec, std::uint64_t t, std::uint64_t d, double lambda) {
  spec.validate();
  if (!(lambda > 0.0)) throw DomainError("lambda must be > 0");
  if (t < 1 || d < 1) throw DomainError("general bound requires t >= 1, d >= 1");
  long double vertices = 1.0L;  // F(s)
  long double sum = 0.0L;
  for (std::uint64_t s = 1; s < t; ++s) {
    sum += (vertices + lambda) / static_cast<long double>(s);
    vertices += evaluate(spec, static_cast<double>(s + 1));
  }
  const double dd = static_cast<double>(d);
  const double sigma2 = 10.0 * dd * dd * static_cast<double>(sum);
  const double ft = static_cast<double>(vertices);
  return std::exp(-lambda * lambda / (2.0 * sigma2 + 8.0 * lambda / 3.0)) +
         std::exp(-lambda * lambda / (2.0 * ft + 4.0 * lambda / 3.0));
}

struct Band {
  double value = 0.0;
  double concentration_part = 0.0;  // A sqrt(40 d^2 / F(t))
  ErrTerm err;                      // err.unit_constant: scale only, not a certified bound
};

inline double corollary_concentration_part(double expected_vertices, std::uint64_t d, double A) {
  const double dd = static_cast<double>(d);
  return A * std::sqrt(40.0 * dd * dd / expected_vertices);
}

/// |P_t(d) - p_gamma(d)| band: A sqrt(40 d^2 / F(t)) + err_t(alpha, f).
inline Band corollary_band(const EdgeStepSpec& spec, std::uint64_t t, std::uint64_t d, double A, double alpha) {
  require_subcritical(spec, "corollary band");
  if (t < 1 || d < 1 || !(A > 0.0)) throw DomainError("corollary band requires t >= 1, d >= 1, A > 0");
  Band band;
  band.concentration_part = corollary_concentration_part(expected_vertices(spec, t), d, A);
  band.err = err_term(spec, static_cast<double>(t), alpha);
  band.value = band.concentration_part + band.err.value;
  return band;
}

// ---------------------------------------------------------------------------
// CSV: t,d,expected_count,F_t,ratio. Rows ordered by t then d; exact zeros are
// omitted.

inline void write_expectation_csv(std::ostream& out, const ExpectationTable& table) {
  out << "t,d,expected_count,F_t,ratio\n";
  for (const auto& row : table.rows()) {
    for (std::size_t i = 0; i < row.counts.size(); ++i) {
      const double count = row.counts[i];
      if (count == 0.0) continue;
      out << row.t << ',' << (i + 1) << ',' << format_double(count) << ',' << format_double(row.expected_vertices)
          << ',' << format_double(count / row.expected_vertices) << '\n';
    }
  }
}

/// Parses the CSV form back. Anything malformed or internally inconsistent is
/// an OperationalError.
/// Zeros are not stored in the file, so the caller can widen the degree range
/// with `min_d_max`.
inline ExpectationTable read_expectation_csv(std::istream& in, std::optional<EdgeStepSpec> spec = std::nullopt,
                                             std::uint64_t min_d_max = 2) {
  auto fail = [](std::size_t line, const std::string& why) -> OperationalError {
    return OperationalError("expectation file line " + std::to_string(line) + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "t,d,expected_count,F_t,ratio") {
    throw fail(1, "missing header 't,d,expected_count,F_t,ratio'");
  }
  std::map<std::uint64_t, std::pair<double, std::map<std::uint64_t, double>>> cells;
  std::uint64_t d_max = std::max<std::uint64_t>(2, min_d_max);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, ',');) parts.push_back(field);
    if (parts.size() != 5) throw fail(lineno, "expected 5 fields");
    std::uint64_t t = 0, d = 0;
    double count = 0, ft = 0, ratio = 0;
    try {
      t = parse_integer<std::uint64_t>(parts[0], "t");
      d = parse_integer<std::uint64_t>(parts[1], "d");
      count = parse_double(parts[2], "expected_count");
      ft = parse_double(parts[3], "F_t");
      ratio = parse_double(parts[4], "ratio");
    } catch (const ConfigError& e) {
      throw fail(lineno, e.what());
    }
    if (t < 1 || d < 1) throw fail(lineno, "t and d must be >= 1");
    if (!(count >= 0.0) || !std::isfinite(count) || !(ft >= 1.0) || !std::isfinite(ft)) {
      throw fail(lineno, "non-finite or negative value");
    }
    if (std::abs(ratio - count / ft) > 1e-9 * std::max(1.0, std::abs(ratio))) throw fail(lineno, "ratio != count / F_t");
    auto& entry = cells[t];
    if (entry.second.empty()) {
      entry.first = ft;
    } else if (entry.first != ft) {
      throw fail(lineno, "inconsistent F_t within checkpoint");
    }
    if (!entry.second.emplace(d, count).second) throw fail(lineno, "duplicate cell");
    d_max = std::max(d_max, d);
  }
  if (cells.empty()) throw fail(lineno, "no data rows");
  std::vector<ExpectationRow> rows;
  std::optional<VertexCountCurve> curve;
  if (spec) curve.emplace(*spec);
  for (auto& [t, entry] : cells) {
    if (curve) {
      const double expected = (*curve)(t);
      if (std::abs(entry.first - expected) > 1e-9 * expected) {
        throw fail(lineno, "F_t at t=" + std::to_string(t) + " does not match the configured edge-step function");
      }
    }
    ExpectationRow row{t, entry.first, 0.0, std::vector<double>(d_max, 0.0)};
    long double retained = 0.0L;
    for (auto [d, count] : entry.second) {
      row.counts[d - 1] = count;
      retained += count;
    }
    if (static_cast<double>(retained) > entry.first * (1.0 + 1e-9)) {
      throw fail(lineno, "expected counts at t=" + std::to_string(t) + " exceed F_t");
    }
    row.truncated_mass = std::max(0.0, entry.first - static_cast<double>(retained));
    rows.push_back(std::move(row));
  }
  return ExpectationTable(spec, d_max, std::move(rows));
}

}  // namespace edgestep
