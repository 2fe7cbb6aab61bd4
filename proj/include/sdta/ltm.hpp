#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "sdta/network.hpp"

namespace sdta {

inline constexpr double kXi = 1e-9;  // vehicles

/// Vehicle count at one link boundary sampled at t = s*dt, s = 0, 1, ...
/// Non-decreasing; sample 0 is the initial (empty network) count.
class CumulativeCurve {
 public:
  explicit CumulativeCurve(double dt = 1.0, std::size_t reserve = 0) : dt_(dt) {
    samples_.reserve(reserve + 1);
    samples_.push_back(0.0);
  }
  CumulativeCurve(double dt, std::vector<double> samples) : dt_(dt), samples_(std::move(samples)) {
    if (samples_.empty()) samples_.push_back(0.0);
  }

  double dt() const { return dt_; }
  std::size_t size() const { return samples_.size(); }
  double operator[](std::size_t s) const { return samples_[s]; }
  double back() const { return samples_.back(); }
  const std::vector<double>& samples() const { return samples_; }
  void push(double v) { samples_.push_back(v); }

  /// Linear interpolation between grid samples; clamps before 0 and after the last sample.
  double interp(double t) const {
    if (t <= 0.0) return samples_.front();
    const double x = t / dt_;
    const auto s = static_cast<std::size_t>(x);
    if (s + 1 >= samples_.size()) return samples_.back();
    const double frac = x - static_cast<double>(s);
    return samples_[s] + frac * (samples_[s + 1] - samples_[s]);
  }

  /// Earliest time at which the curve reaches n; nullopt when n exceeds the last sample.
  std::optional<double> inverse(double n) const {
    if (n > samples_.back()) return std::nullopt;
    const auto it = std::lower_bound(samples_.begin(), samples_.end(), n);
    const auto s = static_cast<std::size_t>(it - samples_.begin());
    if (s == 0) return 0.0;
    return bracket(s - 1, n);
  }

  /// Latest time at which the curve equals n: the end of a plateau at level n.
  /// n above the last sample maps to the last sample time.
  double inverse_latest(double n) const {
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), n);
    const auto s = static_cast<std::size_t>(it - samples_.begin());
    if (s == samples_.size()) return static_cast<double>(samples_.size() - 1) * dt_;
    if (s == 0) return 0.0;
    return bracket(s - 1, n);
  }

 private:
  double bracket(std::size_t lo, double n) const {
    const double a = samples_[lo], b = samples_[lo + 1];
    const double frac = b > a ? (n - a) / (b - a) : 0.0;
    return (static_cast<double>(lo) + frac) * dt_;
  }

  double dt_;
  std::vector<double> samples_;
};

/// Boundary curves of one link for one loading run. Commodity curves are kept
/// only for the commodities that can use the link (local indices).
struct LinkState {
  const LinkSpec* spec = nullptr;
  CumulativeCurve up, down;
  std::vector<CumulativeCurve> up_c, down_c;

  LinkState(const LinkSpec& s, double dt, std::size_t steps, std::size_t commodities)
      : spec(&s), up(dt, steps), down(dt, steps) {
    up_c.reserve(commodities);
    down_c.reserve(commodities);
    for (std::size_t c = 0; c < commodities; ++c) {
      up_c.emplace_back(dt, steps);
      down_c.emplace_back(dt, steps);
    }
  }

  double vehicles() const { return up.back() - down.back(); }
};

/// Vehicles ready to leave during step t (interval ending at t*dt), capped by capacity.
inline double sending_flow(const LinkState& link, int t, double capacity) {
  const double dt = link.up.dt();
  const double ready = link.up.interp(t * dt - link.spec->free_flow_time()) - link.down[static_cast<std::size_t>(t - 1)];
  return std::max(0.0, std::min(ready, capacity * dt));
}

/// Space available at the upstream end during step t, capped by capacity.
inline double receiving_flow(const LinkState& link, int t, double capacity) {
  const double dt = link.up.dt();
  const double space = link.down.interp(t * dt - link.spec->backwave_time()) + link.spec->jam_storage() -
                       link.up[static_cast<std::size_t>(t - 1)];
  return std::max(0.0, std::min(space, capacity * dt));
}

/// Per-commodity component of the sending flow numerator, floored at 0.
inline double commodity_ready(const LinkState& link, std::size_t c, int t) {
  const double dt = link.up.dt();
  return std::max(0.0, link.up_c[c].interp(t * dt - link.spec->free_flow_time()) -
                           link.down_c[c][static_cast<std::size_t>(t - 1)]);
}

inline double transition_inhomogeneous(double s_a, double r_b) { return std::min(s_a, r_b); }

inline double transition_origin(double demand_released, double r_b) { return std::max(0.0, std::min(demand_released, r_b)); }

inline double transition_destination(double s_a) { return s_a; }

inline double median3(double a, double b, double c) { return std::max(std::min(a, b), std::min(std::max(a, b), c)); }

/// Priority merge of a and a' into b; p_a is the priority of a (p_a' = 1 - p_a).
inline std::pair<double, double> transition_merge(double s_a, double s_a2, double r_b, double p_a) {
  if (s_a + s_a2 <= r_b) return {s_a, s_a2};
  return {median3(s_a, r_b - s_a2, p_a * r_b), median3(s_a2, r_b - s_a, (1.0 - p_a) * r_b)};
}

/// Diverge of a into b and b': G_ab = min(R_b S_ab / S_ab', S_ab, R_b), a zero
/// denominator dropping the ratio term.
inline std::pair<double, double> transition_diverge(double s_ab, double s_ab2, double r_b, double r_b2) {
  auto one = [](double s, double s_other, double r) {
    double g = std::min(s, r);
    if (s_other > 0.0) g = std::min(g, r * s / s_other);
    return std::max(0.0, g);
  };
  return {one(s_ab, s_ab2, r_b), one(s_ab2, s_ab, r_b2)};
}

/// flow_c = G w_c / (sum w + xi).
inline std::vector<double> disaggregate(double g, const std::vector<double>& weights, double xi = kXi) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<double> out(weights.size());
  for (std::size_t c = 0; c < weights.size(); ++c) out[c] = g * weights[c] / (sum + xi);
  return out;
}

/// Exit-based travel time at t*dt: elapsed time since the upstream curve last
/// stood at the current downstream count, never below free-flow time. Empty and
/// untouched links give the free-flow time.
inline double link_travel_time(const LinkState& link, int t) {
  const double ff = link.spec->free_flow_time();
  const auto s = static_cast<std::size_t>(t);
  const double n = link.down[std::min(s, link.down.size() - 1)];
  const double now = t * link.up.dt();
  if (link.up[std::min(s, link.up.size() - 1)] - n <= kXi) return ff;
  return std::max(ff, now - link.up.inverse_latest(n));
}

/// Debug dump: step, up, down, then up/down per local commodity.
inline void write_curves_tsv(std::ostream& os, const LinkState& link) {
  os << "step\tup\tdown";
  for (std::size_t c = 0; c < link.up_c.size(); ++c) os << "\tup_" << c << "\tdown_" << c;
  os << '\n';
  for (std::size_t s = 0; s < link.up.size(); ++s) {
    os << s << '\t' << link.up[s] << '\t' << link.down[s];
    for (std::size_t c = 0; c < link.up_c.size(); ++c) os << '\t' << link.up_c[c][s] << '\t' << link.down_c[c][s];
    os << '\n';
  }
}

}  // namespace sdta
