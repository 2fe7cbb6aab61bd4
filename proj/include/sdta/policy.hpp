#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "sdta/events.hpp"

namespace sdta {

enum class PolicyKind { Optimal, Suboptimal };

/// Routing policy: next link and expected time to the destination for every
/// state (node, step, event). Levels t = 1..T use the event tree as given;
/// level T+1 stores the post-horizon static solution of each terminal class.
/// Next links are stored (not next nodes) so parallel links stay distinct.
class Policy {
 public:
  Policy() = default;
  Policy(PolicyKind kind, double z, TravelTimeDistribution defining, EventTree tree, std::size_t nodes,
         std::size_t origin, std::size_t destination, double infinity)
      : kind_(kind),
        z_(z),
        defining_(std::move(defining)),
        tree_(std::move(tree)),
        nodes_(nodes),
        origin_(origin),
        destination_(destination),
        infinity_(infinity) {
    const int levels = tree_.steps() + 1;
    e_.resize(static_cast<std::size_t>(levels));
    next_.resize(static_cast<std::size_t>(levels));
    for (int t = 1; t <= levels; ++t) {
      const auto n = tree_.level(t).size() * nodes_;
      e_[static_cast<std::size_t>(t - 1)].assign(n, infinity_);
      next_[static_cast<std::size_t>(t - 1)].assign(n, -1);
      for (std::size_t ev = 0; ev < tree_.level(t).size(); ++ev)
        e_[static_cast<std::size_t>(t - 1)][ev * nodes_ + destination_] = 0.0;
    }
  }

  PolicyKind kind() const { return kind_; }
  double z() const { return z_; }
  const TravelTimeDistribution& defining_ttd() const { return defining_; }
  const EventTree& tree() const { return tree_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t origin() const { return origin_; }
  std::size_t destination() const { return destination_; }
  int steps() const { return tree_.steps(); }
  double infinity() const { return infinity_; }

  /// Expected seconds to the destination; values >= infinity() mean no route.
  double expected_time(std::size_t node, int t, std::size_t event) const { return e_[level(t)][event * nodes_ + node]; }
  double& expected_time_ref(std::size_t node, int t, std::size_t event) { return e_[level(t)][event * nodes_ + node]; }

  /// Link index to take, or -1 at the destination and at unreachable states.
  int next_link(std::size_t node, int t, std::size_t event) const { return next_[level(t)][event * nodes_ + node]; }
  int& next_link_ref(std::size_t node, int t, std::size_t event) { return next_[level(t)][event * nodes_ + node]; }

  /// Next node; the destination maps to itself.
  std::size_t next_node(const Network& net, std::size_t node, int t, std::size_t event) const {
    if (node == destination_) return destination_;
    const int l = next_link(node, t, event);
    return l < 0 ? node : net.to(static_cast<std::size_t>(l));
  }

  bool reachable(std::size_t node, int t, std::size_t event) const {
    return expected_time(node, t, event) < infinity_;
  }

 private:
  std::size_t level(int t) const {
    const int c = std::clamp(t, 1, tree_.steps() + 1);
    return static_cast<std::size_t>(c - 1);
  }

  PolicyKind kind_ = PolicyKind::Optimal;
  double z_ = 1.0;
  TravelTimeDistribution defining_;
  EventTree tree_;
  std::size_t nodes_ = 0;
  std::size_t origin_ = 0;
  std::size_t destination_ = 0;
  double infinity_ = 0.0;
  std::vector<std::vector<double>> e_;
  std::vector<std::vector<int>> next_;
};

namespace detail {

/// Out-links ordered by (head node id, link index): the argmin tie-break order.
inline std::vector<std::vector<std::size_t>> tie_break_order(const Network& net) {
  std::vector<std::vector<std::size_t>> order(net.node_count());
  for (std::size_t j = 0; j < net.node_count(); ++j) {
    order[j] = net.out_links(j);
    std::sort(order[j].begin(), order[j].end(), [&](std::size_t a, std::size_t b) {
      const auto na = net.node_id(net.to(a)), nb = net.node_id(net.to(b));
      return na != nb ? na < nb : a < b;
    });
  }
  return order;
}

/// Strict improvement beyond floating noise; equal candidates keep the earlier link.
inline bool improves(double candidate, double incumbent) {
  return candidate < incumbent - 1e-12 * std::max(1.0, std::abs(incumbent));
}

inline double unreachable_sentinel(const Network& net, const TravelTimeDistribution& ttd) {
  double maxcost = ttd.dt();
  for (double v : ttd.raw()) maxcost = std::max(maxcost, v);
  const double T = ttd.steps(), R = static_cast<double>(ttd.realizations());
  return std::max(T * R * maxcost, T * ttd.dt() + static_cast<double>(net.node_count()) * maxcost) + 1.0;
}

}  // namespace detail

/// Static all-to-destination shortest paths on a single cost vector.
struct StaticSolution {
  std::vector<double> time;  // seconds; >= infinity when no route
  std::vector<int> next;     // link index, -1 at destination or without route
};

inline StaticSolution static_shortest(const Network& net, const std::vector<double>& cost, double infinity) {
  const auto n = net.node_count();
  const auto d = net.destination();
  StaticSolution s{std::vector<double>(n, infinity), std::vector<int>(n, -1)};
  s.time[d] = 0.0;
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.push({0.0, d});
  std::vector<char> done(n, 0);
  while (!pq.empty()) {
    auto [dist, k] = pq.top();
    pq.pop();
    if (done[k]) continue;
    done[k] = 1;
    for (auto l : net.in_links(k)) {
      const auto j = net.from(l);
      const double cand = dist + cost[l];
      if (cand < s.time[j]) {
        s.time[j] = cand;
        pq.push({cand, j});
      }
    }
  }
  const auto order = detail::tie_break_order(net);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == d || s.time[j] >= infinity) continue;
    double best = infinity;
    for (auto l : order[j]) {
      const auto k = net.to(l);
      if (s.time[k] >= infinity) continue;
      const double v = cost[l] + s.time[k];
      if (detail::improves(v, best)) {
        best = v;
        s.next[j] = static_cast<int>(l);
      }
    }
  }
  return s;
}

/// Post-horizon solution for each terminal class (tree level T+1), using that
/// class's step-T link costs. For a singleton event of Theta(T) this is the
/// step-T solution itself.
inline std::vector<StaticSolution> horizon_shortest(const Network& net, const TravelTimeDistribution& ttd,
                                                    const EventTree& tree) {
  const double inf = detail::unreachable_sentinel(net, ttd);
  std::vector<StaticSolution> out;
  std::vector<double> cost(net.link_count());
  for (const auto& ev : tree.level(tree.terminal_level())) {
    const auto r = ev.support.front();
    for (std::size_t l = 0; l < net.link_count(); ++l) cost[l] = ttd(r, l, ttd.steps());
    out.push_back(static_shortest(net, cost, inf));
  }
  return out;
}

namespace detail {

/// Expected cost of taking link l from state (t, event) and continuing with the
/// values already stored in `p` (levels > t must be final).
inline double step_value(const Network& net, const TravelTimeDistribution& ttd, const Policy& p, std::size_t l,
                         int t, const Event& ev, double mass) {
  const auto& tree = p.tree();
  const int T = ttd.steps();
  const auto k = net.to(l);
  const auto& rho = tree.probabilities();
  double acc = 0.0;
  for (auto r : ev.support) {
    const double c = ttd(r, l, t);
    const int t2 = t + to_steps(c, ttd.dt());
    const int lvl = t2 <= T ? t2 : T + 1;
    const double cont = p.expected_time(k, lvl, tree.event_of(lvl, r));
    if (cont >= p.infinity()) return p.infinity();
    acc += rho[r] * (c + cont);
  }
  return std::min(acc / mass, p.infinity());
}

inline void fill_terminal(const Network& net, const TravelTimeDistribution& ttd, Policy& p) {
  const auto statics = horizon_shortest(net, ttd, p.tree());
  const int lvl = p.steps() + 1;
  for (std::size_t ev = 0; ev < statics.size(); ++ev) {
    for (std::size_t j = 0; j < net.node_count(); ++j) {
      p.expected_time_ref(j, lvl, ev) = std::min(statics[ev].time[j], p.infinity());
      p.next_link_ref(j, lvl, ev) = statics[ev].next[j];
    }
  }
}

}  // namespace detail

/// Optimal policy by backward recursion over steps T..1 (Bellman equation with
/// event-conditional expectations). Continuations past T use the post-horizon
/// static solution of the realization's terminal class.
inline Policy dot_spi(const Network& net, const TravelTimeDistribution& ttd, const EventTree& tree,
                      PolicyKind kind = PolicyKind::Optimal, double z = 1.0) {
  if (ttd.links() != net.link_count() || tree.steps() != ttd.steps() || tree.realizations() != ttd.realizations())
    throw Error(ErrorCode::ShapeMismatch, "travel-time distribution, event tree and network disagree in shape");
  const double inf = detail::unreachable_sentinel(net, ttd);
  Policy p(kind, z, ttd, tree, net.node_count(), net.origin(), net.destination(), inf);
  detail::fill_terminal(net, ttd, p);
  const auto order = detail::tie_break_order(net);
  const auto d = net.destination();
  for (int t = ttd.steps(); t >= 1; --t) {
    const auto& lvl = tree.level(t);
    for (std::size_t ev = 0; ev < lvl.size(); ++ev) {
      const double mass = tree.mass(t, ev);
      for (std::size_t j = 0; j < net.node_count(); ++j) {
        if (j == d) continue;
        double best = inf;
        int arg = -1;
        for (auto l : order[j]) {
          const double v = detail::step_value(net, ttd, p, l, t, lvl[ev], mass);
          if (v < inf && detail::improves(v, best)) {
            best = v;
            arg = static_cast<int>(l);
          }
        }
        p.expected_time_ref(j, t, ev) = best;
        p.next_link_ref(j, t, ev) = arg;
      }
    }
  }
  return p;
}

/// Re-evaluates the decisions of `policy` under another distribution (same
/// event tree): expected times of following its next links when travel times
/// are `ttd`. Cyclic post-horizon decisions yield the unreachable sentinel.
inline Policy evaluate_policy(const Network& net, const TravelTimeDistribution& ttd, const Policy& policy) {
  Policy p(policy.kind(), policy.z(), ttd, policy.tree(), net.node_count(), net.origin(), net.destination(),
           std::max(policy.infinity(), detail::unreachable_sentinel(net, ttd)));
  const auto& tree = policy.tree();
  const int T = ttd.steps();
  const auto d = net.destination();
  for (std::size_t ev = 0; ev < tree.level(T + 1).size(); ++ev) {
    const auto r = tree.level(T + 1)[ev].support.front();
    for (std::size_t j = 0; j < net.node_count(); ++j) {
      p.next_link_ref(j, T + 1, ev) = policy.next_link(j, T + 1, ev);
      if (j == d) continue;
      double acc = 0.0;
      std::size_t node = j;
      std::size_t hops = 0;
      while (node != d && hops <= net.node_count()) {
        const int l = policy.next_link(node, T + 1, ev);
        if (l < 0) break;
        acc += ttd(r, static_cast<std::size_t>(l), T);
        node = net.to(static_cast<std::size_t>(l));
        ++hops;
      }
      p.expected_time_ref(j, T + 1, ev) = node == d ? acc : p.infinity();
    }
  }
  for (int t = T; t >= 1; --t) {
    const auto& lvl = tree.level(t);
    for (std::size_t ev = 0; ev < lvl.size(); ++ev) {
      for (std::size_t j = 0; j < net.node_count(); ++j) {
        if (j == d) continue;
        const int l = policy.next_link(j, t, ev);
        p.next_link_ref(j, t, ev) = l;
        p.expected_time_ref(j, t, ev) =
            l < 0 ? p.infinity()
                  : detail::step_value(net, ttd, p, static_cast<std::size_t>(l), t, lvl[ev], tree.mass(t, ev));
      }
    }
  }
  return p;
}

/// True iff every series strictly increases with time.
inline bool check_monotone(const TravelTimeDistribution& ttd) {
  for (std::size_t r = 0; r < ttd.realizations(); ++r)
    for (std::size_t l = 0; l < ttd.links(); ++l)
      for (int t = 2; t <= ttd.steps(); ++t)
        if (!(ttd(r, l, t) > ttd(r, l, t - 1))) return false;
  return true;
}

namespace detail {

inline void check_z(const std::vector<double>& z) {
  for (double v : z)
    if (!(v > 1.0) || !std::isfinite(v))
      throw Error(ErrorCode::InvalidZFactor, "z-factors must be finite and greater than 1, got " + std::to_string(v));
}

/// Inflates the optimal policy's links at the given steps and rounds back to the grid.
inline TravelTimeDistribution inflate_optimal(const Network& net, const TravelTimeDistribution& ttd,
                                              const Policy& optimal, double z, const std::set<int>& steps) {
  auto mod = ttd;
  const auto& tree = optimal.tree();
  for (int t : steps) {
    const auto& lvl = tree.level(t);
    for (std::size_t ev = 0; ev < lvl.size(); ++ev) {
      for (std::size_t j = 0; j < net.node_count(); ++j) {
        if (j == net.destination()) continue;
        const int l = optimal.next_link(j, t, ev);
        if (l < 0) continue;
        for (auto r : lvl[ev].support) mod.at(r, static_cast<std::size_t>(l), t) = z * ttd(r, static_cast<std::size_t>(l), t);
      }
    }
  }
  return round_to_grid(mod);
}

inline std::vector<Policy> suboptimal_set(const Network& net, const TravelTimeDistribution& ttd,
                                          const Policy& optimal, const std::vector<double>& z,
                                          const std::set<int>& steps, unsigned threads) {
  auto one = [&](double zi) {
    return dot_spi(net, inflate_optimal(net, ttd, optimal, zi, steps), optimal.tree(), PolicyKind::Suboptimal, zi);
  };
  std::vector<Policy> out;
  if (threads <= 1 || z.size() <= 1) {
    for (double zi : z) out.push_back(one(zi));
    return out;
  }
  std::vector<std::future<Policy>> jobs;
  for (double zi : z) jobs.push_back(std::async(std::launch::async, one, zi));
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace detail

/// Suboptimal policies: for each z, the optimal policy of a copy of `ttd` whose
/// step-T elements on the optimal policy's links are multiplied by z (rounded
/// to the grid). Each result keeps the original event tree.
inline std::vector<Policy> lp_policy(const Network& net, const TravelTimeDistribution& ttd, const Policy& optimal,
                                     const std::vector<double>& z, unsigned threads = 1) {
  detail::check_z(z);
  return detail::suboptimal_set(net, ttd, optimal, z, {ttd.steps()}, threads);
}

/// As lp_policy, inflating at every step in `steps`. Requires a strictly
/// increasing distribution.
inline std::vector<Policy> lp_policy_arbitrary(const Network& net, const TravelTimeDistribution& ttd,
                                               const Policy& optimal, const std::vector<double>& z,
                                               const std::set<int>& steps, unsigned threads = 1) {
  detail::check_z(z);
  if (!check_monotone(ttd))
    throw Error(ErrorCode::MonotonicityRequired, "travel times must strictly increase with time at every link");
  for (int t : steps)
    if (t < 1 || t > ttd.steps())
      throw Error(ErrorCode::InvalidConfig, "modification step " + std::to_string(t) + " is off the grid");
  return detail::suboptimal_set(net, ttd, optimal, z, steps, threads);
}

/// z_i = 1 + 0.5 i for i = 1..W-1.
inline std::vector<double> default_z(std::size_t policies) {
  std::vector<double> z;
  for (std::size_t i = 1; i < policies; ++i) z.push_back(1.0 + 0.5 * static_cast<double>(i));
  return z;
}

/// Probability-weighted origin expected time over Theta(t); +inf when the
/// destination is unreachable under some event.
inline double expected_origin_time(const Policy& policy, int t) {
  const auto& tree = policy.tree();
  double acc = 0.0;
  for (std::size_t ev = 0; ev < tree.level(t).size(); ++ev) {
    const double e = policy.expected_time(policy.origin(), t, ev);
    if (e >= policy.infinity()) return std::numeric_limits<double>::infinity();
    acc += e * tree.mass(t, ev);
  }
  return acc;
}

inline std::string support_label(const Event& ev) {
  std::string s;
  for (auto r : ev.support) {
    if (!s.empty()) s += ',';
    s += std::to_string(r + 1);
  }
  return s;
}

/// Tab-separated dump: node, t, event (1-based realizations), next_node, next_link, expected_s.
/// Row t = T+1 is the post-horizon level.
inline void write_policy_tsv(std::ostream& os, const Network& net, const Policy& p) {
  os << "node\tt\tevent\tnext_node\tnext_link\texpected_s\n";
  for (int t = 1; t <= p.steps() + 1; ++t) {
    const auto& lvl = p.tree().level(t);
    for (std::size_t ev = 0; ev < lvl.size(); ++ev) {
      for (std::size_t j = 0; j < net.node_count(); ++j) {
        const int l = p.next_link(j, t, ev);
        os << net.node_id(j) << '\t' << t << '\t' << support_label(lvl[ev]) << '\t';
        if (j == p.destination())
          os << net.node_id(j) << "\t-\t0\n";
        else if (l < 0)
          os << "-\t-\tinf\n";
        else
          os << net.node_id(net.to(static_cast<std::size_t>(l))) << '\t' << net.link(static_cast<std::size_t>(l)).id
             << '\t' << p.expected_time(j, t, ev) << '\n';
      }
    }
  }
}

}  // namespace sdta
