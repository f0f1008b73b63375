#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

namespace edgestep {

/// Degree counts N_t(d) at one snapshot. Degrees below kDenseLimit are kept in
/// a dense array, larger ones in an ordered sparse map.
struct DegreeHistogram {
  static constexpr std::uint64_t kDenseLimit = 1024;

  std::uint64_t t = 0;
  std::uint64_t vertex_count = 0;
  std::uint64_t max_degree = 0;
  std::uint64_t first_vertex_degree = 0;
  std::vector<std::uint64_t> dense;  // dense[d] = N_t(d)
  std::map<std::uint64_t, std::uint64_t> sparse;

  void add(std::uint64_t d, std::uint64_t n = 1) {
    if (d < kDenseLimit) {
      if (dense.size() <= d) dense.resize(d + 1, 0);
      dense[d] += n;
    } else {
      sparse[d] += n;
    }
  }

  std::uint64_t count(std::uint64_t d) const {
    if (d < kDenseLimit) return d < dense.size() ? dense[d] : 0;
    auto it = sparse.find(d);
    return it == sparse.end() ? 0 : it->second;
  }

  /// Visits realized degrees in ascending order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint64_t d = 0; d < dense.size(); ++d) {
      if (dense[d] != 0) fn(d, dense[d]);
    }
    for (const auto& [d, n] : sparse) fn(d, n);
  }

  std::uint64_t total_count() const {
    std::uint64_t s = 0;
    for_each([&](std::uint64_t, std::uint64_t n) { s += n; });
    return s;
  }

  std::uint64_t degree_total() const {
    std::uint64_t s = 0;
    for_each([&](std::uint64_t d, std::uint64_t n) { s += d * n; });
    return s;
  }

  friend bool operator==(const DegreeHistogram&, const DegreeHistogram&) = default;
};

}  // namespace edgestep
