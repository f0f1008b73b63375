#pragma once

// Edge-step functions f(t) = min(1, l(t) t^-gamma) from a small closed-form
// catalog, together with the regular-variation numerics built on them:
// expected vertex counts F(t), the Karamata functionals H and G, the
// err_t(alpha, f) scale and a few slowly-varying diagnostics.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "format.hpp"
#include "quadrature.hpp"

namespace edgestep {

enum class Family { PowerLaw, InverseLogPower, InverseLogLog, ExpNegLogDelta, Constant };

inline std::string_view family_name(Family family) {
  switch (family) {
    case Family::PowerLaw: return "power_law";
    case Family::InverseLogPower: return "inverse_log_power";
    case Family::InverseLogLog: return "inverse_log_log";
    case Family::ExpNegLogDelta: return "exp_neg_log_delta";
    case Family::Constant: return "constant";
  }
  return "unknown";
}

inline Family family_from_name(std::string_view name) {
  for (Family f : {Family::PowerLaw, Family::InverseLogPower, Family::InverseLogLog, Family::ExpNegLogDelta,
                   Family::Constant}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown family '" + std::string(name) +
                    "' (expected power_law, inverse_log_power, inverse_log_log, exp_neg_log_delta or constant)");
}

/// One member of the edge-step catalog. Slowly varying parts, with y = log t:
///
///   power_law          l = c                      f = min(1, c t^-gamma)
///   inverse_log_power  l = (1 + y)^-c             i.e. log(e t)^-c
///   inverse_log_log    l = 1 / log(e + y)         i.e. 1 / log log(e^e t)
///   exp_neg_log_delta  l = exp(-y^log_delta)
///   constant           f = p                      (gamma = 0)
///
/// The log offsets make every l finite and equal to 1 at t = 1 (c for
/// power_law). Below t = 1 the slowly varying part is extended by its value
/// at 1; this only matters inside H, whose integral reaches u t < 1.
struct EdgeStepSpec {
  Family family = Family::PowerLaw;
  double c = 1.0;
  double gamma = 0.0;
  double log_delta = 0.5;
  double p = 0.5;

  static EdgeStepSpec power_law(double c, double gamma) { return checked({Family::PowerLaw, c, gamma, 0.5, 0.5}); }
  static EdgeStepSpec inverse_log_power(double c, double gamma) {
    return checked({Family::InverseLogPower, c, gamma, 0.5, 0.5});
  }
  static EdgeStepSpec inverse_log_log(double gamma) { return checked({Family::InverseLogLog, 1.0, gamma, 0.5, 0.5}); }
  static EdgeStepSpec exp_neg_log_delta(double delta, double gamma) {
    return checked({Family::ExpNegLogDelta, 1.0, gamma, delta, 0.5});
  }
  static EdgeStepSpec constant(double p) { return checked({Family::Constant, 1.0, 0.0, 0.5, p}); }

  /// Index of regular variation is -index_gamma().
  double index_gamma() const noexcept { return family == Family::Constant ? 0.0 : gamma; }

  bool constant_slow_part() const noexcept { return family == Family::PowerLaw || family == Family::Constant; }

  /// Whether f(t) -> 0. Only then is p_gamma the limiting degree law.
  bool vanishes_at_infinity() const noexcept {
    return !(family == Family::Constant || (family == Family::PowerLaw && gamma == 0.0));
  }

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be a finite real >= 0");
    switch (family) {
      case Family::PowerLaw:
      case Family::InverseLogPower:
        if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("c must be a finite positive real");
        break;
      case Family::ExpNegLogDelta:
        if (!(log_delta > 0.0 && log_delta < 1.0)) throw DomainError("log_delta must lie in (0, 1)");
        break;
      case Family::Constant:
        if (!(p > 0.0 && p <= 1.0)) throw DomainError("p must lie in (0, 1]");
        break;
      case Family::InverseLogLog: break;
    }
  }

  friend bool operator==(const EdgeStepSpec& a, const EdgeStepSpec& b) {
    if (a.family != b.family) return false;
    switch (a.family) {
      case Family::PowerLaw:
      case Family::InverseLogPower: return a.c == b.c && a.gamma == b.gamma;
      case Family::InverseLogLog: return a.gamma == b.gamma;
      case Family::ExpNegLogDelta: return a.log_delta == b.log_delta && a.gamma == b.gamma;
      case Family::Constant: return a.p == b.p;
    }
    return false;
  }

 private:
  static EdgeStepSpec checked(EdgeStepSpec s) {
    s.validate();
    return s;
  }
};

/// Slowly varying part as a function of y = log s, y >= 0.
inline double slowly_varying_at_log(const EdgeStepSpec& spec, double y) {
  y = std::max(y, 0.0);
  switch (spec.family) {
    case Family::PowerLaw: return spec.c;
    case Family::Constant: return spec.p;
    case Family::InverseLogPower: return std::pow(1.0 + y, -spec.c);
    case Family::InverseLogLog: return 1.0 / std::log(std::numbers::e + y);
    case Family::ExpNegLogDelta: return std::exp(-std::pow(y, spec.log_delta));
  }
  return 0.0;
}

/// l(s); s < 1 maps to l(1).
inline double slowly_varying(const EdgeStepSpec& spec, double s) {
  return slowly_varying_at_log(spec, s > 1.0 ? std::log(s) : 0.0);
}

/// f(t) in [0, 1]. Throws DomainError for t < 1.
inline double evaluate(const EdgeStepSpec& spec, double t) {
  if (!(t >= 1.0)) throw DomainError("edge-step function evaluated at t < 1");
  if (spec.family == Family::Constant) return spec.p;
  const double y = std::log(t);
  const double value = slowly_varying_at_log(spec, y) * std::exp(-spec.gamma * y);
  return std::clamp(value, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Text form: whitespace separated key=value tokens, e.g.
//   family=power_law c=1.0 gamma=0.5
// Keys per family: power_law/inverse_log_power {c, gamma}; inverse_log_log
// {gamma}; exp_neg_log_delta {log_delta, gamma}; constant {p}.

inline std::string to_string(const EdgeStepSpec& spec) {
  std::string out = "family=" + std::string(family_name(spec.family));
  switch (spec.family) {
    case Family::PowerLaw:
    case Family::InverseLogPower:
      out += " c=" + format_double(spec.c) + " gamma=" + format_double(spec.gamma);
      break;
    case Family::InverseLogLog: out += " gamma=" + format_double(spec.gamma); break;
    case Family::ExpNegLogDelta:
      out += " log_delta=" + format_double(spec.log_delta) + " gamma=" + format_double(spec.gamma);
      break;
    case Family::Constant: out += " p=" + format_double(spec.p); break;
  }
  return out;
}

/// Builds a spec from already-split fields; unknown keys are left to the caller.
inline EdgeStepSpec spec_from_fields(const std::map<std::string, std::string, std::less<>>& fields) {
  auto it = fields.find("family");
  if (it == fields.end()) throw ConfigError("missing key 'family'");
  auto number = [&](std::string_view key, double fallback) {
    auto f = fields.find(key);
    return f == fields.end() ? fallback : parse_double(f->second, key);
  };
  EdgeStepSpec spec;
  spec.family = family_from_name(it->second);
  spec.c = number("c", 1.0);
  spec.gamma = spec.family == Family::Constant ? 0.0 : number("gamma", 0.0);
  spec.log_delta = number("log_delta", 0.5);
  spec.p = number("p", 0.5);
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid edge-step spec: ") + e.what());
  }
  return spec;
}

inline EdgeStepSpec parse_spec(std::string_view text) {
  std::map<std::string, std::string, std::less<>> fields;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end > pos) {
      const std::string_view token = text.substr(pos, end - pos);
      const auto eq = token.find('=');
      if (eq == std::string_view::npos || eq == 0) throw ConfigError("malformed token '" + std::string(token) + "'");
      fields[std::string(token.substr(0, eq))] = std::string(token.substr(eq + 1));
    }
    pos = end;
  }
  for (const auto& [key, _] : fields) {
    if (key != "family" && key != "c" && key != "gamma" && key != "log_delta" && key != "p") {
      throw ConfigError("unknown spec key '" + key + "'");
    }
  }
  return spec_from_fields(fields);
}

// ---------------------------------------------------------------------------

/// F(t) = 1 + sum_{s=2}^t f(s), the expected number of vertices at time t.
///
/// Prefix sums are cached at block boundaries, so a query costs at most one
/// block of evaluations once the cache reaches t. Thread safe; concurrent
/// queries see the same values as sequential ones because every value is a
/// fixed-order sum from the nearest cached boundary.
class VertexCountCurve {
 public:
  static constexpr std::uint64_t kBlock = 4096;

  explicit VertexCountCurve(EdgeStepSpec spec) : spec_(spec) { spec_.validate(); }

  const EdgeStepSpec& spec() const noexcept { return spec_; }

  double operator()(std::uint64_t t) const {
    if (t < 1) throw DomainError("F(t) requires t >= 1");
    const std::uint64_t block = t / kBlock;
    long double base;
    {
      std::lock_guard lock(mutex_);
      while (boundaries_.size() <= block) {
        const std::uint64_t k = boundaries_.size() - 1;
        boundaries_.push_back(boundaries_.back() + partial(k * kBlock + 1, (k + 1) * kBlock));
      }
      base = boundaries_[block];
    }
    return static_cast<double>(base + partial(block * kBlock + 1, t));
  }

 private:
  long double partial(std::uint64_t from, std::uint64_t to) const {
    long double sum = 0.0L;
    for (std::uint64_t s = from; s <= to; ++s) sum += s == 1 ? 1.0L : evaluate(spec_, static_cast<double>(s));
    return sum;
  }

  EdgeStepSpec spec_;
  mutable std::mutex mutex_;
  mutable std::vector<long double> boundaries_{0.0L};
};

inline double expected_vertices(const EdgeStepSpec& spec, std::uint64_t t) { return VertexCountCurve(spec)(t); }

/// Integral approximation l(t) t^(1-gamma) / (1-gamma) of F(t).
inline double expected_vertices_asymptotic(const EdgeStepSpec& spec, double t) {
  const double g = spec.index_gamma();
  if (g >= 1.0) throw UnsupportedRegime("F(t) asymptotic requires gamma < 1");
  return slowly_varying(spec, t) * std::pow(t, 1.0 - g) / (1.0 - g);
}

// ---------------------------------------------------------------------------
// Karamata functionals.

inline void require_subcritical(const EdgeStepSpec& spec, std::string_view op) {
  if (spec.index_gamma() >= 1.0) throw UnsupportedRegime(std::string(op) + " is only defined for gamma < 1");
}

/// H(t) = int_0^1 |l(ut)/l(t) - 1| u^-gamma du.
///
/// On u <= 1/t the integrand is |l(1)/l(t) - 1| u^-gamma and is integrated in
/// closed form. The rest is integrated in x = -log u, where it becomes the
/// smooth |l(t e^-x)/l(t) - 1| e^-(1-gamma)x on [0, log t].
inline double h_integral(const EdgeStepSpec& spec, double t, double rel_tol = 1e-8) {
  require_subcritical(spec, "H");
  if (!(t >= 1.0)) throw DomainError("H(t) requires t >= 1");
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw DomainError("rel_tol must lie in (0, 1)");
  if (spec.constant_slow_part()) return 0.0;

  const double g = spec.index_gamma();
  const double log_t = std::log(t);
  const double lt = slowly_varying_at_log(spec, log_t);
  const double near_zero = std::abs(slowly_varying_at_log(spec, 0.0) / lt - 1.0) * std::exp(-(1.0 - g) * log_t) / (1.0 - g);

  auto integrand = [&](double x) {
    return std::abs(slowly_varying_at_log(spec, log_t - x) / lt - 1.0) * std::exp(-(1.0 - g) * x);
  };
  double main = 0.0;
  double lo = 0.0;
  for (double cut : {1.0, 4.0, 16.0, log_t}) {
    const double hi = std::min(cut, log_t);
    if (hi > lo) {
      main += quadrature::integrate(integrand, lo, hi, rel_tol * 0.25, 1e-300).value;
      lo = hi;
    }
  }
  return main + near_zero;
}

/// Right-hand side of the partial-sum bound as stated in the literature:
/// H(t) + 1/(t^(1-gamma) l(t)).
///
/// NOTE: for constant l with gamma >= ~0.35 this is not an upper bound on
/// g_partial_sum_error (the constant term of the sum is zeta(gamma), with
/// |zeta(gamma)| > 1). g_bound_rigorous carries the constant that does hold.
inline double g_bound(const EdgeStepSpec& spec, std::uint64_t t) {
  require_subcritical(spec, "G bound");
  if (t < 1) throw DomainError("G bound requires t >= 1");
  const double td = static_cast<double>(t);
  const double scale = std::pow(td, 1.0 - spec.index_gamma()) * slowly_varying(spec, td);
  return h_integral(spec, td) + 1.0 / scale;
}

/// H(t) + l(1) / ((1-gamma) t^(1-gamma) l(t)); valid whenever l(s) s^-gamma is
/// non-increasing, which holds for every catalog family.
inline double g_bound_rigorous(const EdgeStepSpec& spec, std::uint64_t t) {
  require_subcritical(spec, "G bound");
  if (t < 1) throw DomainError("G bound requires t >= 1");
  const double g = spec.index_gamma();
  const double td = static_cast<double>(t);
  const double scale = std::pow(td, 1.0 - g) * slowly_varying(spec, td);
  return h_integral(spec, td) + slowly_varying(spec, 1.0) / ((1.0 - g) * scale);
}

struct ErrTerm {
  double value = 0.0;
  double log_part = 0.0;       // 1 + log t
  double early_part = 0.0;     // l(t^a) t^(a(1-gamma))
  double late_part = 0.0;      // l(t)/l(t^a) t^((1-a)(1-gamma))
  double sup_h = 0.0;          // max of H over the search grid
  double h_part = 0.0;         // sup_h * t^(1-gamma) l(t)
  double sup_grid_ratio = 1.25;
  double sup_grid_cap = 0.0;   // the grid runs over [t^a, t^2]
  bool unit_constant = true;   // reported with the unknown multiplicative constant set to 1
};

/// err_t(alpha, f). The supremum of H over s >= t^alpha is a maximum over the
/// geometric grid t^alpha * 1.25^k, k = 0, 1, ..., capped at s = t^2 (the cap
/// itself is included).
inline ErrTerm err_term(const EdgeStepSpec& spec, double t, double alpha) {
  require_subcritical(spec, "err_t");
  if (!(t >= 1.0)) throw DomainError("err_t requires t >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const double g = spec.index_gamma();
  const double t_alpha = std::pow(t, alpha);
  const double l_t = slowly_varying(spec, t);
  const double l_ta = slowly_varying(spec, t_alpha);

  ErrTerm e;
  e.log_part = 1.0 + std::log(t);
  e.early_part = l_ta * std::pow(t, alpha * (1.0 - g));
  e.late_part = l_t / l_ta * std::pow(t, (1.0 - alpha) * (1.0 - g));
  e.sup_grid_cap = t * t;
  if (!spec.constant_slow_part()) {
    for (double s = t_alpha;; s *= e.sup_grid_ratio) {
      const double at = std::min(s, e.sup_grid_cap);
      e.sup_h = std::max(e.sup_h, h_integral(spec, at));
      if (at >= e.sup_grid_cap) break;
    }
  }
  e.h_part = e.sup_h * std::pow(t, 1.0 - g) * l_t;
  e.value = e.log_part + e.early_part + e.late_part + e.h_part;
  return e;
}

/// l(t) / sum_{s<=t} l(s)/s at each point of an ascending grid (one pass).
inline std::vector<double> slowly_varying_ratio_diagnostic(const EdgeStepSpec& spec,
                                                           const std::vector<std::uint64_t>& t_grid) {
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw DomainError("t_grid must be ascending");
  std::vector<double> out;
  out.reserve(t_grid.size());
  long double sum = 0.0L;
  std::uint64_t s = 0;
  for (std::uint64_t t : t_grid) {
    if (t < 1) throw DomainError("t_grid entries must be >= 1");
    for (; s < t; ++s) {
      const double sd = static_cast<double>(s + 1);
      sum += slowly_varying(spec, sd) / sd;
    }
    out.push_back(static_cast<double>(slowly_varying(spec, static_cast<double>(t)) / sum));
  }
  return out;
}

/// int_1^x s^-gamma l(s) ds divided by its Karamata asymptote x^(1-gamma) l(x) / (1-gamma).
inline double karamata_integral_ratio(const EdgeStepSpec& spec, double x, double rel_tol = 1e-10) {
  require_subcritical(spec, "Karamata ratio");
  if (!(x > 1.0)) throw DomainError("Karamata ratio requires x > 1");
  const double a = 1.0 - spec.index_gamma();
  const double log_x = std::log(x);
  // s = e^y: integrand e^(a y) l(e^y). Scaled by e^(-a log x) to keep it O(1).
  auto integrand = [&](double y) { return std::exp(a * (y - log_x)) * slowly_varying_at_log(spec, y); };
  const double scaled = quadrature::integrate(integrand, 0.0, log_x, rel_tol, 1e-300, 20000).value;
  return scaled * a / slowly_varying_at_log(spec, log_x);
}

}  // namespace edgestep
