#pragma once

// The edge-step preferential attachment process G_t(f).
//
// Degree-proportional sampling uses the endpoint list: every edge appends its
// two endpoints (a loop appends the same vertex twice), so a uniform entry of
// the list is a vertex drawn with probability degree / 2t. Each step appends
// exactly one edge and nothing is ever reweighted, which keeps a step O(1).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "histogram.hpp"
#include "rng.hpp"

namespace edgestep {

enum class StepType { Vertex, Edge };

template <typename Id>
struct StepOutcome {
  StepType type = StepType::Edge;
  Id endpoint_a = 0;  // for a vertex-step: the old vertex that was chosen
  Id endpoint_b = 0;  // for a vertex-step: the new vertex
  std::optional<Id> new_vertex;
};

struct ProcessOptions {
  double delta = 0.0;          // affine offset: attach with probability proportional to degree + delta
  bool retain_births = false;  // keep per-vertex birth times
  std::uint64_t reserve_steps = 0;
};

/// State of one realization. Vertex ids are 0-based and assigned in order of
/// birth, so vertex 0 is the initial vertex.
template <typename Id = std::uint32_t>
class GraphState {
 public:
  using id_type = Id;
  using Observer = std::pair<std::uint64_t, std::function<void(const GraphState&)>>;

  /// G_1: one vertex with one loop.
  GraphState(const EdgeStepSpec& spec, std::uint64_t seed, ProcessOptions options = {})
      : spec_(spec), delta_(options.delta), retain_births_(options.retain_births), rng_(seed) {
    spec_.validate();
    if (!(delta_ >= 0.0) || !std::isfinite(delta_)) {
      throw DomainError("affine offset delta must be a finite real >= 0 (negative offsets are unsupported)");
    }
    if (options.reserve_steps > 0) reserve(options.reserve_steps);
    endpoints_ = {0, 0};
    degrees_ = {2};
    if (retain_births_) births_ = {1};
  }

  std::uint64_t t() const noexcept { return t_; }
  std::uint64_t vertex_count() const noexcept { return degrees_.size(); }
  const EdgeStepSpec& spec() const noexcept { return spec_; }
  double delta() const noexcept { return delta_; }
  const std::vector<Id>& endpoints() const noexcept { return endpoints_; }
  const std::vector<Id>& degrees() const noexcept { return degrees_; }
  /// Empty unless retain_births was requested. births()[v] is the step at which v appeared.
  const std::vector<std::uint64_t>& births() const noexcept { return births_; }
  bool retains_births() const noexcept { return retain_births_; }
  const Xoshiro256& rng() const noexcept { return rng_; }

  void reserve(std::uint64_t steps) {
    endpoints_.reserve(2 * steps);
  }

  /// A vertex with probability proportional to degree + delta.
  Id sample_preferential() {
    if (delta_ == 0.0) return sample_endpoint();
    return sample_mixture();
  }

  /// The affine rule as a mixture: a uniform endpoint with probability
  /// 2t / (2t + delta V), otherwise a uniform vertex. Used for every delta > 0;
  /// callable directly so the branch can be exercised at tiny delta.
  Id sample_mixture() {
    const double endpoint_mass = static_cast<double>(endpoints_.size());
    const double uniform_mass = delta_ * static_cast<double>(degrees_.size());
    if (rng_.uniform01() * (endpoint_mass + uniform_mass) < endpoint_mass) return sample_endpoint();
    return static_cast<Id>(rng_.below(degrees_.size()));
  }

  /// One step t -> t+1: a vertex-step with probability f(t+1), an edge-step otherwise.
  StepOutcome<Id> advance() {
    const bool vertex_step = rng_.uniform01() < evaluate(spec_, static_cast<double>(t_ + 1));
    return advance_with(vertex_step ? StepType::Vertex : StepType::Edge);
  }

  /// Same step with the coin already decided.
  StepOutcome<Id> advance_with(StepType type) {
    if constexpr (sizeof(Id) < sizeof(std::uint64_t)) {
      if (t_ + 1 >= (std::uint64_t{1} << (8 * sizeof(Id) - 1))) {
        throw DomainError("time exceeds the range of the vertex id type; use wide ids");
      }
    }
    StepOutcome<Id> out;
    out.type = type;
    if (type == StepType::Vertex) {
      const Id u = sample_preferential();
      const auto v = static_cast<Id>(degrees_.size());
      endpoints_.push_back(u);
      endpoints_.push_back(v);
      ++degrees_[u];
      degrees_.push_back(1);
      if (retain_births_) births_.push_back(t_ + 1);
      out.endpoint_a = u;
      out.endpoint_b = v;
      out.new_vertex = v;
    } else {
      const Id u1 = sample_preferential();
      const Id u2 = sample_preferential();
      endpoints_.push_back(u1);
      endpoints_.push_back(u2);
      ++degrees_[u1];
      ++degrees_[u2];
      out.endpoint_a = u1;
      out.endpoint_b = u2;
    }
    ++t_;
    return out;
  }

  /// Advances to t_target. Each observer fires once, right after the step that
  /// completes its time (immediately if that time is the current one).
  void run_to(std::uint64_t t_target, std::vector<Observer> observers = {}) {
    if (t_target < t_) throw DomainError("run_to: target time is in the past");
    std::sort(observers.begin(), observers.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [when, _] : observers) {
      if (when < t_ || when > t_target) throw DomainError("run_to: observer time outside [t, t_target]");
    }
    reserve(t_target);
    auto next = observers.begin();
    auto fire = [&] {
      for (; next != observers.end() && next->first == t_; ++next) next->second(*this);
    };
    fire();
    while (t_ < t_target) {
      advance();
      if (next != observers.end() && next->first == t_) fire();
    }
  }

  DegreeHistogram snapshot_histogram() const {
    DegreeHistogram h;
    h.t = t_;
    h.vertex_count = degrees_.size();
    h.first_vertex_degree = degrees_.front();
    for (Id d : degrees_) {
      h.add(d);
      h.max_degree = std::max<std::uint64_t>(h.max_degree, d);
    }
    return h;
  }

  friend bool operator==(const GraphState&, const GraphState&) = default;

 private:
  Id sample_endpoint() { return endpoints_[rng_.below(endpoints_.size())]; }

  EdgeStepSpec spec_;
  double delta_ = 0.0;
  bool retain_births_ = false;
  Xoshiro256 rng_;
  std::uint64_t t_ = 1;
  std::vector<Id> endpoints_;
  std::vector<Id> degrees_;
  std::vector<std::uint64_t> births_;
};

// Free-function spellings of the state operations.

template <typename Id = std::uint32_t>
GraphState<Id> new_initial(const EdgeStepSpec& spec, double delta, std::uint64_t seed, bool retain_births = false) {
  return GraphState<Id>(spec, seed, ProcessOptions{delta, retain_births, 0});
}

template <typename Id>
Id sample_preferential(GraphState<Id>& state) {
  return state.sample_preferential();
}

template <typename Id>
StepOutcome<Id> advance(GraphState<Id>& state) {
  return state.advance();
}

template <typename Id>
GraphState<Id>& run_to(GraphState<Id>& state, std::uint64_t t_target,
                       std::vector<typename GraphState<Id>::Observer> observers = {}) {
  state.run_to(t_target, std::move(observers));
  return state;
}

template <typename Id>
DegreeHistogram snapshot_histogram(const GraphState<Id>& state) {
  return state.snapshot_histogram();
}

}  // namespace edgestep
