#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "sdta/scenario.hpp"

namespace sdta {

/// Realizations indistinguishable from observed link travel times before `time`.
struct Event {
  std::vector<std::size_t> support;  // sorted realization indices (0-based)
  int time = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Time-indexed partitions Theta(t) of the realization set.
///
/// Levels 1..T follow the event definition (identical values at every step
/// before t). Level T+1 is the post-horizon level: realizations grouped by
/// their complete history through T. Since the network is static after T,
/// every post-horizon event has constant link costs from then on. Within a
/// level, events are ordered by their smallest member.
class EventTree {
 public:
  EventTree() = default;
  EventTree(int steps, std::vector<double> rho, std::vector<std::vector<Event>> levels)
      : steps_(steps), rho_(std::move(rho)), levels_(std::move(levels)) {
    member_.assign(levels_.size(), std::vector<std::size_t>(rho_.size(), 0));
    mass_.resize(levels_.size());
    for (std::size_t t = 0; t < levels_.size(); ++t) {
      for (std::size_t e = 0; e < levels_[t].size(); ++e) {
        double m = 0.0;
        for (auto r : levels_[t][e].support) {
          member_[t][r] = e;
          m += rho_[r];
        }
        mass_[t].push_back(m);
      }
    }
  }

  int steps() const { return steps_; }
  int terminal_level() const { return steps_ + 1; }
  std::size_t realizations() const { return rho_.size(); }
  const std::vector<double>& probabilities() const { return rho_; }

  /// t in 1..T+1; larger t maps to the post-horizon level.
  const std::vector<Event>& level(int t) const { return levels_[index(t)]; }
  const Event& event(int t, std::size_t e) const { return levels_[index(t)][e]; }
  std::size_t event_of(int t, std::size_t r) const { return member_[index(t)][r]; }
  double mass(int t, std::size_t e) const { return mass_[index(t)][e]; }

  std::optional<std::size_t> find(const Event& ev) const {
    if (ev.support.empty() || ev.time < 1) return std::nullopt;
    const auto& lvl = level(ev.time);
    const auto e = event_of(ev.time, ev.support.front());
    if (lvl[e].support == ev.support) return e;
    return std::nullopt;
  }

 private:
  std::size_t index(int t) const {
    const int c = t < 1 ? 1 : (t > steps_ + 1 ? steps_ + 1 : t);
    return static_cast<std::size_t>(c - 1);
  }

  int steps_ = 0;
  std::vector<double> rho_;
  std::vector<std::vector<Event>> levels_;
  std::vector<std::vector<std::size_t>> member_;
  std::vector<std::vector<double>> mass_;
};

/// Builds the event tree by refining the partition one step at a time: members
/// of an event at t stay together at t+1 iff their values at step t coincide on
/// every link (exact comparison on grid-rounded values).
inline EventTree generate_events(const TravelTimeDistribution& ttd) {
  const int T = ttd.steps();
  const std::size_t R = ttd.realizations();
  const std::size_t L = ttd.links();
  std::vector<std::vector<Event>> levels;
  levels.reserve(static_cast<std::size_t>(T) + 1);

  Event all{std::vector<std::size_t>(R), 1};
  std::iota(all.support.begin(), all.support.end(), std::size_t{0});
  levels.push_back({all});

  auto less_at = [&](int step) {
    return [&ttd, L, step](std::size_t a, std::size_t b) {
      for (std::size_t l = 0; l < L; ++l) {
        const double x = ttd(a, l, step), y = ttd(b, l, step);
        if (x != y) return x < y;
      }
      return a < b;
    };
  };
  auto same_at = [&](std::size_t a, std::size_t b, int step) {
    for (std::size_t l = 0; l < L; ++l)
      if (ttd(a, l, step) != ttd(b, l, step)) return false;
    return true;
  };

  for (int t = 2; t <= T + 1; ++t) {
    const int observed = t - 1;
    std::vector<Event> next;
    for (const auto& parent : levels.back()) {
      auto members = parent.support;
      std::sort(members.begin(), members.end(), less_at(observed));
      Event cur{{members.front()}, t};
      for (std::size_t i = 1; i < members.size(); ++i) {
        if (same_at(members[i], cur.support.front(), observed)) {
          cur.support.push_back(members[i]);
        } else {
          next.push_back(std::move(cur));
          cur = Event{{members[i]}, t};
        }
      }
      next.push_back(std::move(cur));
    }
    for (auto& e : next) std::sort(e.support.begin(), e.support.end());
    std::sort(next.begin(), next.end(),
              [](const Event& a, const Event& b) { return a.support.front() < b.support.front(); });
    levels.push_back(std::move(next));
  }
  return EventTree(T, ttd.probabilities(), std::move(levels));
}

/// Probability mass of an event; with a parent, the conditional probability
/// given the parent event (which must contain it).
inline double event_probability(const EventTree& tree, const Event& event,
                                const std::optional<Event>& parent = std::nullopt) {
  auto e = tree.find(event);
  if (!e) throw Error(ErrorCode::UnknownReference, "event is not part of the tree at its time level");
  const double m = tree.mass(event.time, *e);
  if (!parent) return m;
  auto p = tree.find(*parent);
  if (!p) throw Error(ErrorCode::UnknownReference, "parent event is not part of the tree");
  if (!std::includes(parent->support.begin(), parent->support.end(), event.support.begin(), event.support.end()))
    throw Error(ErrorCode::InvariantViolation, "parent event does not contain the event");
  return m / tree.mass(parent->time, *p);
}

/// Index into tree.level(t) of the event whose common history (steps before t)
/// is closest to `info` in summed absolute difference over links and steps.
/// Ties go to the event with the lowest realization index.
inline std::size_t nearest_event_index(const TravelTimeDistribution& defining, const EventTree& tree,
                                       const TravelTimeTable& info, int t) {
  const auto& lvl = tree.level(t);
  const int last = std::min(t - 1, defining.steps());
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t e = 0; e < lvl.size(); ++e) {
    const auto rep = lvl[e].support.front();
    double d = 0.0;
    for (std::size_t l = 0; l < defining.links(); ++l)
      for (int s = 1; s <= last; ++s) d += std::abs(defining(rep, l, s) - info(l, s));
    if (e == 0 || d < best_d) {
      best = e;
      best_d = d;
    }
  }
  return best;
}

inline Event nearest_event(const TravelTimeDistribution& defining, const EventTree& tree,
                           const TravelTimeTable& info, int t) {
  return tree.level(t)[nearest_event_index(defining, tree, info, t)];
}

/// Incremental form of nearest_event for a forward pass over time: keeps the
/// running history distance of every realization of the defining distribution.
class EventMatcher {
 public:
  EventMatcher(const TravelTimeDistribution& defining, const EventTree& tree)
      : defining_(&defining), tree_(&tree), dist_(defining.realizations(), 0.0) {}

  /// Adds the observed travel times of step s (must be called for s = 1, 2, ... in order).
  void observe(const TravelTimeTable& info, int s) {
    if (s > defining_->steps()) return;
    for (std::size_t r = 0; r < dist_.size(); ++r) {
      double d = 0.0;
      for (std::size_t l = 0; l < defining_->links(); ++l) d += std::abs((*defining_)(r, l, s) - info(l, s));
      dist_[r] += d;
    }
  }

  /// Nearest event at level t given everything observed so far.
  std::size_t nearest(int t) const {
    const auto& lvl = tree_->level(t);
    std::size_t best = 0;
    for (std::size_t e = 1; e < lvl.size(); ++e)
      if (dist_[lvl[e].support.front()] < dist_[lvl[best].support.front()]) best = e;
    return best;
  }

  void reset() { std::fill(dist_.begin(), dist_.end(), 0.0); }

 private:
  const TravelTimeDistribution* defining_;
  const EventTree* tree_;
  std::vector<double> dist_;
};

/// Prefix history distances D[r][s] = sum over steps < s of |defining - info|,
/// for s = 1..T+1. Lets a walker query the nearest event at any clock value.
class PrefixMatcher {
 public:
  PrefixMatcher(const TravelTimeDistribution& defining, const EventTree& tree, const TravelTimeTable& info)
      : tree_(&tree), steps_(defining.steps()), prefix_(defining.realizations()) {
    for (std::size_t r = 0; r < prefix_.size(); ++r) {
      auto& p = prefix_[r];
      p.assign(static_cast<std::size_t>(steps_) + 1, 0.0);
      for (int s = 1; s <= steps_; ++s) {
        double d = 0.0;
        for (std::size_t l = 0; l < defining.links(); ++l) d += std::abs(defining(r, l, s) - info(l, s));
        p[static_cast<std::size_t>(s)] = p[static_cast<std::size_t>(s) - 1] + d;
      }
    }
  }

  std::size_t nearest(int t) const {
    const int c = std::clamp(t, 1, steps_ + 1);
    const auto& lvl = tree_->level(c);
    const auto k = static_cast<std::size_t>(c - 1);
    std::size_t best = 0;
    for (std::size_t e = 1; e < lvl.size(); ++e)
      if (prefix_[lvl[e].support.front()][k] < prefix_[lvl[best].support.front()][k]) best = e;
    return best;
  }

 private:
  const EventTree* tree_;
  int steps_;
  std::vector<std::vector<double>> prefix_;
};

}  // namespace sdta
