#pragma once

// Experiment configuration and its plain-text form.
//
// Grammar: the text is a sequence of `key=value` tokens separated by
// whitespace (spaces or newlines). `#` starts a comment that runs to the end
// of the line. Values contain no whitespace; lists are comma separated.
// Keys:
//   family c gamma log_delta p      edge-step spec (see EdgeStepSpec)
//   delta                           affine offset >= 0
//   checkpoints                     list of times >= 1
//   replicas seed threads           ensemble size, base seed, parallel width (0 = auto)
//   d_max d_report                  recursion degree cap (0 = auto), reported degrees
//   A alpha                         band parameters
//   out                             output directory
//   grid                            time grid for `karamata`
//   gammas families                 sweep axes
//   oracle                          expectation CSV to compare against (optional)
//   wide_ids edges                  64-bit ids; export replica 0's edge list (true/false)

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "format.hpp"

namespace edgestep {

struct ExperimentConfig {
  EdgeStepSpec spec = EdgeStepSpec::power_law(1.0, 0.5);
  double delta = 0.0;
  std::vector<std::uint64_t> checkpoints{1000};
  std::uint64_t replicas = 100;
  std::uint64_t seed = 1;
  std::uint64_t d_max = 0;
  std::uint64_t d_report = 20;
  double A = 3.0;
  double alpha = 0.5;
  std::string out = ".";
  unsigned threads = 0;
  std::vector<std::uint64_t> grid{100, 1000, 10000, 100000, 1000000, 10000000, 100000000};
  std::vector<double> gammas;
  std::vector<std::string> families;
  std::string oracle;
  bool wide_ids = false;
  bool edges = false;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? text.size() : comma;
    out.emplace_back(text.substr(start, end - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& xs, Fn&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

inline bool parse_bool(std::string_view v, std::string_view key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for '" + std::string(key) + "': '" + std::string(v) + "'");
}

}  // namespace detail

using FieldMap = std::map<std::string, std::string, std::less<>>;

/// Splits config text into key -> value. Later occurrences of a key win.
inline FieldMap tokenize_config(std::string_view text) {
  FieldMap fields;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    for (std::string token; tokens >> token;) {
      const auto eq = token.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("malformed config token '" + token + "'");
      fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  return fields;
}

/// Applies fields on top of `base`; the spec is rebuilt if any spec key is present.
inline ExperimentConfig apply_fields(ExperimentConfig base, const FieldMap& fields) {
  static const std::vector<std::string_view> spec_keys = {"family", "c", "gamma", "log_delta", "p"};
  static const std::vector<std::string_view> known = {"family",  "c",        "gamma",    "log_delta", "p",
                                                      "delta",   "checkpoints", "replicas", "seed",   "threads",
                                                      "d_max",   "d_report", "A",        "alpha",     "out",
                                                      "grid",    "gammas",   "families", "oracle",    "wide_ids",
                                                      "edges"};
  for (const auto& [key, _] : fields) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  }
  if (std::any_of(spec_keys.begin(), spec_keys.end(), [&](auto k) { return fields.contains(k); })) {
    FieldMap spec_fields;
    for (auto k : spec_keys) {
      if (auto it = fields.find(k); it != fields.end()) spec_fields[std::string(k)] = it->second;
    }
    base.spec = spec_from_fields(spec_fields);
  }
  auto get = [&](std::string_view key) -> const std::string* {
    auto it = fields.find(key);
    return it == fields.end() ? nullptr : &it->second;
  };
  if (auto v = get("delta")) base.delta = parse_double(*v, "delta");
  if (auto v = get("checkpoints")) {
    base.checkpoints.clear();
    for (const auto& item : detail::split_list(*v)) base.checkpoints.push_back(parse_integer<std::uint64_t>(item, "checkpoints"));
  }
  if (auto v = get("replicas")) base.replicas = parse_integer<std::uint64_t>(*v, "replicas");
  if (auto v = get("seed")) base.seed = parse_integer<std::uint64_t>(*v, "seed");
  if (auto v = get("threads")) base.threads = parse_integer<unsigned>(*v, "threads");
  if (auto v = get("d_max")) base.d_max = parse_integer<std::uint64_t>(*v, "d_max");
  if (auto v = get("d_report")) base.d_report = parse_integer<std::uint64_t>(*v, "d_report");
  if (auto v = get("A")) base.A = parse_double(*v, "A");
  if (auto v = get("alpha")) base.alpha = parse_double(*v, "alpha");
  if (auto v = get("out")) base.out = *v;
  if (auto v = get("grid")) {
    base.grid.clear();
    if (!v->empty()) {
      for (const auto& item : detail::split_list(*v)) base.grid.push_back(parse_integer<std::uint64_t>(item, "grid"));
    }
  }
  if (auto v = get("gammas")) {
    base.gammas.clear();
    if (!v->empty()) {
      for (const auto& item : detail::split_list(*v)) base.gammas.push_back(parse_double(item, "gammas"));
    }
  }
  if (auto v = get("families")) {
    base.families.clear();
    if (!v->empty()) {
      for (const auto& item : detail::split_list(*v)) {
        family_from_name(item);
        base.families.push_back(item);
      }
    }
  }
  if (auto v = get("oracle")) base.oracle = *v;
  if (auto v = get("wide_ids")) base.wide_ids = detail::parse_bool(*v, "wide_ids");
  if (auto v = get("edges")) base.edges = detail::parse_bool(*v, "edges");
  return base;
}

inline void validate_config(const ExperimentConfig& c);

/// Parses and validates a full config. `family` is mandatory.
inline ExperimentConfig parse_config(std::string_view text) {
  const FieldMap fields = tokenize_config(text);
  if (!fields.contains("family")) throw ConfigError("missing key 'family'");
  auto config = apply_fields(ExperimentConfig{}, fields);
  validate_config(config);
  return config;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Canonical text form, one key per line in a fixed order.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out = to_string(c.spec);
  std::replace(out.begin(), out.end(), ' ', '\n');
  out += '\n';
  auto u64 = [](std::uint64_t x) { return std::to_string(x); };
  auto line = [&](std::string_view key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  line("delta", format_double(c.delta));
  line("checkpoints", detail::join(c.checkpoints, u64));
  line("replicas", u64(c.replicas));
  line("seed", u64(c.seed));
  line("threads", std::to_string(c.threads));
  line("d_max", u64(c.d_max));
  line("d_report", u64(c.d_report));
  line("A", format_double(c.A));
  line("alpha", format_double(c.alpha));
  line("out", c.out);
  line("grid", detail::join(c.grid, u64));
  line("gammas", detail::join(c.gammas, [](double g) { return format_double(g); }));
  line("families", detail::join(c.families, [](const std::string& s) { return s; }));
  line("oracle", c.oracle);
  line("wide_ids", c.wide_ids ? "true" : "false");
  line("edges", c.edges ? "true" : "false");
  return out;
}

/// Range checks that do not depend on the subcommand.
inline void validate_config(const ExperimentConfig& c) {
  auto bad = [](const std::string& why) { return ConfigError(why); };
  if (!(c.delta >= 0.0) || !std::isfinite(c.delta)) throw bad("delta must be a finite real >= 0");
  if (c.checkpoints.empty()) throw bad("checkpoints must not be empty");
  if (std::any_of(c.checkpoints.begin(), c.checkpoints.end(), [](auto t) { return t < 1; })) {
    throw bad("checkpoints must be >= 1");
  }
  if (c.replicas < 1) throw bad("replicas must be >= 1");
  if (c.d_max == 1) throw bad("d_max must be 0 (auto) or >= 2");
  if (c.d_report < 1) throw bad("d_report must be >= 1");
  if (!(c.A > 0.0)) throw bad("A must be > 0");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw bad("alpha must lie in (0, 1)");
  if (c.out.empty()) throw bad("out must not be empty");
  if (std::any_of(c.grid.begin(), c.grid.end(), [](auto t) { return t < 1; })) throw bad("grid entries must be >= 1");
  for (double g : c.gammas) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw bad("gammas must be finite reals >= 0");
  }
  auto has_space = [](const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch) || ch == '#'; });
  };
  if (has_space(c.out) || has_space(c.oracle)) throw bad("paths must not contain whitespace or '#'");
}

}  // namespace edgestep
