#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
//
// The interval with the largest error estimate is bisected until the summed
// estimate satisfies max(abs_tol, rel_tol * |I|) or the subdivision budget is
// spent. Nodes never touch the endpoints, so integrable endpoint singularities
// are tolerated, but convergence near them is slow; callers are expected to
// transform those away first.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

#include "errors.hpp"

namespace edgestep::quadrature {

struct Result {
  double value = 0.0;
  double error = 0.0;
  std::size_t intervals = 0;
  bool converged = false;
};

namespace detail {

// Kronrod abscissae (positive half, descending) and weights; Gauss weights for
// the embedded 7-point rule sit at the odd Kronrod positions.
inline constexpr std::array<double, 8> kXk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <typename F>
Segment gk15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWk[7];
  double gauss = fc * kWg[3];
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kXk[j];
    const double fsum = f(center - dx) + f(center + dx);
    kronrod += kWk[j] * fsum;
    if (j % 2 == 1) gauss += kWg[j / 2] * fsum;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

template <typename F>
Result integrate(F&& f, double a, double b, double rel_tol, double abs_tol = 0.0,
                 std::size_t max_intervals = 4000) {
  if (!(b >= a)) throw DomainError("integrate: require a <= b");
  if (a == b) return {0.0, 0.0, 0, true};
  std::priority_queue<detail::Segment> heap;
  heap.push(detail::gk15(f, a, b));
  double total = heap.top().value;
  double error = heap.top().error;
  std::size_t count = 1;
  auto target = [&] { return std::max(abs_tol, rel_tol * std::abs(total)); };
  while (error > target() && count < max_intervals) {
    const detail::Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // interval below resolution
    heap.pop();
    const detail::Segment left = detail::gk15(f, worst.a, mid);
    const detail::Segment right = detail::gk15(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++count;
  }
  // Re-sum from scratch to shed the drift of the running updates.
  double value = 0.0;
  double err = 0.0;
  for (auto copy = heap; !copy.empty(); copy.pop()) {
    value += copy.top().value;
    err += copy.top().error;
  }
  return {value, err, count, err <= std::max(abs_tol, rel_tol * std::abs(value))};
}

}  // namespace edgestep::quadrature
