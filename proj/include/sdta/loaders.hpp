#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <map>
#include <ostream>
#include <vector>

#include "sdta/choice.hpp"
#include "sdta/ltm.hpp"

namespace sdta {

/// Paths (link sequences origin -> destination) with splits mu[p][t-1].
struct PathSet {
  std::vector<std::vector<std::size_t>> paths;
  std::vector<std::vector<double>> mu;

  std::size_t size() const { return paths.size(); }
};

/// Instrumentation shared by both loaders.
struct LoaderStats {
  std::size_t time_loops = 0;    // full passes over the horizon
  std::size_t translations = 0;  // policy -> path translations
  std::size_t node_updates = 0;

  LoaderStats& operator+=(const LoaderStats& o) {
    time_loops += o.time_loops;
    translations += o.translations;
    node_updates += o.node_updates;
    return *this;
  }
};

/// One loading run for one realization.
struct LoadResult {
  TravelTimeTable travel_times;
  std::vector<double> backlog;     // origin queue after each step
  std::vector<double> in_network;  // vehicles on links after each step
  double demand = 0.0;             // total released demand
  double exited = 0.0;
  double dropped = 0.0;            // strict origin mode only
  double max_storage_excess = 0.0; // max over links/steps of (up - down) - kL, or of down - up
  double max_commodity_gap = 0.0;  // max |sum of commodity curves - aggregate|
  std::vector<LinkState> links;    // kept only on request

  double conservation_error() const {
    const double held = in_network.empty() ? 0.0 : in_network.back();
    const double queued = backlog.empty() ? 0.0 : backlog.back();
    return std::abs(demand - (exited + held + queued + dropped));
  }
};

struct LoadOptions {
  bool strict_origin = false;
  bool keep_curves = false;
  unsigned threads = 1;
};

namespace detail {

/// Explicit LTM time loop over one realization. The router supplies commodity
/// membership per link, origin shares and diverge decisions.
template <class Router>
LoadResult run_ltm(const Network& net, const Realization& real, double dt, int steps, Router& router,
                   const LoadOptions& opt, LoaderStats& stats) {
  const std::size_t L = net.link_count();
  const std::size_t C = router.commodities();
  const auto& members = router.link_commodities();
  const auto T = static_cast<std::size_t>(steps);

  std::vector<LinkState> links;
  links.reserve(L);
  std::vector<std::vector<int>> local(L, std::vector<int>(C, -1));
  for (std::size_t l = 0; l < L; ++l) {
    links.emplace_back(net.link(l), dt, T, members[l].size());
    for (std::size_t k = 0; k < members[l].size(); ++k) local[l][members[l][k]] = static_cast<int>(k);
  }

  std::vector<NodeKind> kinds(net.node_count());
  for (std::size_t n = 0; n < net.node_count(); ++n) {
    auto k = kind_from_degrees(net.in_links(n).size(), net.out_links(n).size());
    if (!k) throw Error(ErrorCode::UnsupportedNodeType, "node " + std::to_string(net.node_id(n)) + " has no archetype");
    kinds[n] = *k;
  }

  LoadResult res;
  res.travel_times = TravelTimeTable(L, steps);
  res.backlog.reserve(T);
  res.in_network.reserve(T);
  for (std::size_t l = 0; l < L; ++l)
    for (auto& v : res.travel_times.series(l)) v = net.link(l).free_flow_time();

  std::vector<double> cum_demand(C, 0.0), entered(C, 0.0);
  double cum_total = 0.0, entered_total = 0.0;
  std::vector<double> S(L), R(L), inc_up(L), inc_down(L);
  std::vector<std::vector<double>> ready(L), inc_up_c(L), inc_down_c(L);
  for (std::size_t l = 0; l < L; ++l) {
    ready[l].resize(members[l].size());
    inc_up_c[l].resize(members[l].size());
    inc_down_c[l].resize(members[l].size());
  }
  std::vector<double> w;
  std::vector<char> to_b;

  // Moves g vehicles from in-link a to out-link b, split over commodities of a
  // by weights ready[a][k] restricted to those selected by `take`.
  auto move = [&](std::size_t a, std::size_t b, double g, double wsum, auto&& take) {
    inc_down[a] += g;
    inc_up[b] += g;
    if (g <= 0.0) return;
    for (std::size_t k = 0; k < members[a].size(); ++k) {
      if (!take(k)) continue;
      const double f = g * ready[a][k] / (wsum + kXi);
      inc_down_c[a][k] += f;
      const int kb = local[b][members[a][k]];
      if (kb >= 0) inc_up_c[b][static_cast<std::size_t>(kb)] += f;
    }
  };
  auto sink = [&](std::size_t a, double g, double wsum) {
    inc_down[a] += g;
    for (std::size_t k = 0; k < members[a].size(); ++k) inc_down_c[a][k] += g * ready[a][k] / (wsum + kXi);
  };
  auto all = [](std::size_t) { return true; };

  for (int t = 1; t <= steps; ++t) {
    router.begin_step(t);
    const auto ti = static_cast<std::size_t>(t - 1);
    for (std::size_t l = 0; l < L; ++l) {
      const double q = real.capacity[l][ti];
      S[l] = sending_flow(links[l], t, q);
      R[l] = receiving_flow(links[l], t, q);
      for (std::size_t k = 0; k < members[l].size(); ++k) ready[l][k] = commodity_ready(links[l], k, t);
      inc_up[l] = inc_down[l] = 0.0;
      std::fill(inc_up_c[l].begin(), inc_up_c[l].end(), 0.0);
      std::fill(inc_down_c[l].begin(), inc_down_c[l].end(), 0.0);
    }
    const double d_t = real.demand[ti];
    res.demand += d_t;

    for (std::size_t n = 0; n < net.node_count(); ++n) {
      ++stats.node_updates;
      const auto& ins = net.in_links(n);
      const auto& outs = net.out_links(n);
      switch (kinds[n]) {
        case NodeKind::Origin: {
          const auto b = outs[0];
          w.assign(C, 0.0);
          for (std::size_t c = 0; c < C; ++c) {
            const double inc = d_t * router.share(c, t);
            cum_demand[c] += inc;
            w[c] = opt.strict_origin ? inc : std::max(0.0, cum_demand[c] - entered[c]);
          }
          cum_total += d_t;
          const double released = opt.strict_origin ? d_t : std::max(0.0, cum_total - entered_total);
          const double g = transition_origin(released, R[b]);
          if (opt.strict_origin) res.dropped += d_t - g;
          entered_total += g;
          inc_up[b] += g;
          double wsum = 0.0;
          for (double x : w) wsum += x;
          for (std::size_t c = 0; c < C; ++c) {
            const double f = g * w[c] / (wsum + kXi);
            entered[c] += f;
            const int kb = local[b][c];
            if (kb >= 0) inc_up_c[b][static_cast<std::size_t>(kb)] += f;
          }
          break;
        }
        case NodeKind::Destination: {
          const auto a = ins[0];
          const double g = transition_destination(S[a]);
          double wsum = 0.0;
          for (double x : ready[a]) wsum += x;
          sink(a, g, wsum);
          res.exited += g;
          break;
        }
        case NodeKind::Inhomogeneous: {
          const auto a = ins[0], b = outs[0];
          double wsum = 0.0;
          for (double x : ready[a]) wsum += x;
          move(a, b, transition_inhomogeneous(S[a], R[b]), wsum, all);
          break;
        }
        case NodeKind::Merge: {
          const auto a = ins[0], a2 = ins[1], b = outs[0];
          const auto [g1, g2] = transition_merge(S[a], S[a2], R[b], net.merge_priority(a));
          double w1 = 0.0, w2 = 0.0;
          for (double x : ready[a]) w1 += x;
          for (double x : ready[a2]) w2 += x;
          move(a, b, g1, w1, all);
          move(a2, b, g2, w2, all);
          break;
        }
        case NodeKind::Diverge: {
          const auto a = ins[0], b = outs[0], b2 = outs[1];
          double gap_b = 0.0, gap_b2 = 0.0;
          to_b.assign(members[a].size(), 0);
          for (std::size_t k = 0; k < members[a].size(); ++k) {
            to_b[k] = router.route(members[a][k], n, t, a) == b;
            (to_b[k] ? gap_b : gap_b2) += ready[a][k];
          }
          const double gaps = gap_b + gap_b2;
          const double s_ab = gaps > 0.0 ? S[a] * gap_b / gaps : 0.0;
          const double s_ab2 = gaps > 0.0 ? S[a] * gap_b2 / gaps : 0.0;
          const auto [g1, g2] = transition_diverge(s_ab, s_ab2, R[b], R[b2]);
          move(a, b, g1, gap_b, [&](std::size_t k) { return to_b[k] != 0; });
          move(a, b2, g2, gap_b2, [&](std::size_t k) { return to_b[k] == 0; });
          break;
        }
      }
    }

    double held = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      auto& ls = links[l];
      ls.up.push(ls.up.back() + inc_up[l]);
      ls.down.push(ls.down.back() + inc_down[l]);
      for (std::size_t k = 0; k < members[l].size(); ++k) {
        ls.up_c[k].push(ls.up_c[k].back() + inc_up_c[l][k]);
        ls.down_c[k].push(ls.down_c[k].back() + inc_down_c[l][k]);
      }
      const double v = ls.vehicles();
      held += v;
      res.max_storage_excess = std::max({res.max_storage_excess, v - ls.spec->jam_storage(), -v});
      res.travel_times.at(l, t) = link_travel_time(ls, t);
    }
    res.in_network.push_back(held);
    res.backlog.push_back(opt.strict_origin ? 0.0 : std::max(0.0, cum_total - entered_total));
    router.end_step(t, res.travel_times);
  }
  ++stats.time_loops;

  for (const auto& ls : links) {
    double su = 0.0, sd = 0.0;
    for (const auto& c : ls.up_c) su += c.back();
    for (const auto& c : ls.down_c) sd += c.back();
    if (!ls.up_c.empty())
      res.max_commodity_gap = std::max({res.max_commodity_gap, std::abs(su - ls.up.back()), std::abs(sd - ls.down.back())});
  }
  if (opt.keep_curves) res.links = std::move(links);
  return res;
}

class PathRouter {
 public:
  PathRouter(const Network& net, const PathSet& ps)
      : ps_(&ps), members_(net.link_count()), next_(net.link_count(), std::vector<std::size_t>(ps.size(), SIZE_MAX)) {
    for (std::size_t p = 0; p < ps.size(); ++p) {
      const auto& path = ps.paths[p];
      if (path.empty() || net.from(path.front()) != net.origin() || net.to(path.back()) != net.destination())
        throw Error(ErrorCode::ShapeMismatch, "path " + std::to_string(p) + " does not join origin to destination");
      for (std::size_t i = 0; i < path.size(); ++i) {
        if (path[i] >= net.link_count() || (i > 0 && net.from(path[i]) != net.to(path[i - 1])))
          throw Error(ErrorCode::ShapeMismatch, "path " + std::to_string(p) + " is not connected");
        members_[path[i]].push_back(p);
        next_[path[i]][p] = i + 1 < path.size() ? path[i + 1] : path[i];
      }
    }
  }
  std::size_t commodities() const { return ps_->size(); }
  const std::vector<std::vector<std::size_t>>& link_commodities() const { return members_; }
  double share(std::size_t c, int t) const { return ps_->mu[c][static_cast<std::size_t>(t - 1)]; }
  void begin_step(int) {}
  std::size_t route(std::size_t c, std::size_t, int, std::size_t a) const { return next_[a][c]; }
  void end_step(int, const TravelTimeTable&) {}

 private:
  const PathSet* ps_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::vector<std::size_t>> next_;  // [link][path]
};

class PolicyRouter {
 public:
  PolicyRouter(const Network& net, const std::vector<Policy>& policies, const SplitSchedule& splits)
      : net_(&net), policies_(&policies), splits_(&splits), members_(net.link_count()) {
    std::vector<std::size_t> all(policies.size());
    for (std::size_t w = 0; w < all.size(); ++w) all[w] = w;
    for (auto& m : members_) m = all;
    for (const auto& p : policies) matchers_.emplace_back(p.defining_ttd(), p.tree());
    delta_.assign(policies.size(), std::vector<std::size_t>(net.node_count(), 0));
  }
  std::size_t commodities() const { return policies_->size(); }
  const std::vector<std::vector<std::size_t>>& link_commodities() const { return members_; }
  double share(std::size_t c, int t) const { return (*splits_)(c, t); }

  void begin_step(int t) {
    for (std::size_t w = 0; w < policies_->size(); ++w) {
      const auto& p = (*policies_)[w];
      const auto ev = matchers_[w].nearest(t);
      for (std::size_t n = 0; n < net_->node_count(); ++n) {
        if (net_->out_links(n).size() < 2) continue;
        const int l = p.next_link(n, t, ev);
        delta_[w][n] = l >= 0 ? static_cast<std::size_t>(l) : net_->out_links(n).front();
      }
    }
  }
  std::size_t route(std::size_t c, std::size_t n, int, std::size_t) const { return delta_[c][n]; }
  void end_step(int t, const TravelTimeTable& info) {
    for (auto& m : matchers_) m.observe(info, t);
  }

 private:
  const Network* net_;
  const std::vector<Policy>* policies_;
  const SplitSchedule* splits_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<EventMatcher> matchers_;
  std::vector<std::vector<std::size_t>> delta_;
};

template <class Fn>
std::vector<LoadResult> per_realization(std::size_t count, unsigned threads, Fn fn) {
  std::vector<LoadResult> out(count);
  if (threads <= 1 || count <= 1) {
    for (std::size_t r = 0; r < count; ++r) out[r] = fn(r);
    return out;
  }
  std::vector<std::future<LoadResult>> jobs;
  for (std::size_t r = 0; r < count; ++r) jobs.push_back(std::async(std::launch::async, fn, r));
  for (std::size_t r = 0; r < count; ++r) out[r] = jobs[r].get();
  return out;
}

}  // namespace detail

/// Path-based LTM for one realization.
inline LoadResult path_ltm(const Network& net, const PathSet& ps, const Realization& real, double dt, int steps,
                           const LoadOptions& opt = {}, LoaderStats* stats = nullptr) {
  detail::PathRouter router(net, ps);
  LoaderStats local;
  auto res = detail::run_ltm(net, real, dt, steps, router, opt, local);
  if (stats) *stats += local;
  return res;
}

/// Translation V: walks every policy from the origin at each departure step,
/// choosing the nearest event of the policy's defining distribution against
/// `info` at the walker's clock, and pools the resulting paths. Node cycles are
/// cut from the recorded path; a walk longer than 2T + |U| hops is an error.
inline PathSet translate(const Network& net, const std::vector<Policy>& policies, const SplitSchedule& splits,
                         const TravelTimeTable& info, LoaderStats* stats = nullptr) {
  PathSet ps;
  std::map<std::vector<std::size_t>, std::size_t> index;
  const int T = splits.steps();
  std::vector<PrefixMatcher> matchers;
  matchers.reserve(policies.size());
  for (const auto& p : policies) matchers.emplace_back(p.defining_ttd(), p.tree(), info);
  const std::size_t hop_limit = 2 * static_cast<std::size_t>(T) + net.node_count();
  std::vector<std::size_t> path;
  std::vector<std::size_t> visited_at(net.node_count());

  for (int t = 1; t <= T; ++t) {
    for (std::size_t w = 0; w < policies.size(); ++w) {
      const double eta = splits(w, t);
      if (!(eta > 0.0)) continue;
      const auto& p = policies[w];
      const auto& def = p.defining_ttd();
      const auto& tree = p.tree();
      path.clear();
      std::fill(visited_at.begin(), visited_at.end(), SIZE_MAX);
      std::size_t node = net.origin();
      visited_at[node] = 0;
      int clock = t;
      std::size_t hops = 0;
      while (node != net.destination()) {
        if (++hops > hop_limit)
          throw Error(ErrorCode::NonTerminatingTranslation,
                      "policy " + std::to_string(w) + " does not reach the destination from departure step " +
                          std::to_string(t));
        const int lvl = std::min(clock, T + 1);
        const auto ev = matchers[w].nearest(lvl);
        const int l = p.next_link(node, lvl, ev);
        if (l < 0)
          throw Error(ErrorCode::NonTerminatingTranslation,
                      "policy " + std::to_string(w) + " has no decision at node " + std::to_string(net.node_id(node)));
        const auto li = static_cast<std::size_t>(l);
        const auto& event = tree.event(lvl, ev);
        double expect = 0.0;
        for (auto r : event.support) expect += tree.probabilities()[r] * def(r, li, clock);
        clock += to_steps(expect / tree.mass(lvl, ev), def.dt());
        node = net.to(li);
        if (visited_at[node] != SIZE_MAX) {
          for (std::size_t i = visited_at[node]; i < path.size(); ++i) visited_at[net.to(path[i])] = SIZE_MAX;
          path.resize(visited_at[node]);
          visited_at[node] = path.size();
        } else {
          path.push_back(li);
          visited_at[node] = path.size();
        }
      }
      auto [it, fresh] = index.try_emplace(path, ps.paths.size());
      if (fresh) {
        ps.paths.push_back(path);
        ps.mu.emplace_back(static_cast<std::size_t>(T), 0.0);
      }
      ps.mu[it->second][static_cast<std::size_t>(t - 1)] += eta;
    }
  }
  if (stats) ++stats->translations;
  return ps;
}

/// Loader outputs: the assembled distribution plus per-realization diagnostics.
struct LoadOutput {
  TravelTimeDistribution ttd;
  std::vector<LoadResult> runs;
  LoaderStats stats;
};

namespace detail {

inline TravelTimeDistribution assemble(const Network& net, const Scenario& sc, const std::vector<LoadResult>& runs) {
  TravelTimeDistribution ttd(sc.dt, sc.steps, net.link_count(), sc.probabilities());
  for (std::size_t r = 0; r < runs.size(); ++r) set_realization(ttd, r, runs[r].travel_times);
  return ttd;
}

}  // namespace detail

/// Iterative loading: per realization, K_inner rounds of PathLTM with inner MSA
/// blending and re-translation. The reported result of each realization is the
/// last PathLTM run with its travel times replaced by the blended table.
inline LoadOutput iterative_loading(const Network& net, const std::vector<Policy>& policies, const SplitSchedule& splits,
                                    const Scenario& sc, int inner_iterations, const LoadOptions& opt = {}) {
  if (inner_iterations < 1) throw Error(ErrorCode::InvalidConfig, "inner iterations must be at least 1");
  std::vector<LoaderStats> stats(sc.realizations.size());
  auto one = [&](std::size_t r) {
    TravelTimeTable c(net.link_count(), sc.steps);
    for (std::size_t l = 0; l < net.link_count(); ++l)
      for (auto& v : c.series(l)) v = net.link(l).free_flow_time();
    auto ps = translate(net, policies, splits, c, &stats[r]);
    LoadResult last;
    for (int l = 1; l <= inner_iterations; ++l) {
      last = path_ltm(net, ps, sc.realizations[r], sc.dt, sc.steps, opt, &stats[r]);
      const double alpha = 1.0 / l;
      for (std::size_t k = 0; k < net.link_count(); ++k) {
        auto dst = c.series(k);
        auto src = last.travel_times.series(k);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (1.0 - alpha) * dst[i] + alpha * src[i];
      }
      ps = translate(net, policies, splits, c, &stats[r]);
    }
    last.travel_times = c;
    return last;
  };
  LoadOutput out;
  out.runs = detail::per_realization(sc.realizations.size(), opt.threads, one);
  for (const auto& s : stats) out.stats += s;
  out.ttd = detail::assemble(net, sc, out.runs);
  return out;
}

/// Policy-direct chronological loading: one forward pass per realization with
/// diverge decisions re-derived each step from the information observed so far.
inline LoadOutput po_ltm(const Network& net, const std::vector<Policy>& policies, const SplitSchedule& splits,
                         const Scenario& sc, const LoadOptions& opt = {}) {
  if (splits.policies() != policies.size() || splits.steps() != sc.steps)
    throw Error(ErrorCode::ShapeMismatch, "splits do not match the policy set or horizon");
  std::vector<LoaderStats> stats(sc.realizations.size());
  auto one = [&](std::size_t r) {
    detail::PolicyRouter router(net, policies, splits);
    return detail::run_ltm(net, sc.realizations[r], sc.dt, sc.steps, router, opt, stats[r]);
  };
  LoadOutput out;
  out.runs = detail::per_realization(sc.realizations.size(), opt.threads, one);
  for (const auto& s : stats) out.stats += s;
  out.ttd = detail::assemble(net, sc, out.runs);
  return out;
}

/// delta[w][n]: link chosen at node n by policy w at step t given `info` for
/// steps before t. Nodes with one outgoing link get that link; the destination gets -1.
inline std::vector<std::vector<int>> link_policy_incidence(const Network& net, const std::vector<Policy>& policies,
                                                           const TravelTimeTable& info, int t) {
  std::vector<std::vector<int>> delta;
  for (const auto& p : policies) {
    const auto ev = nearest_event_index(p.defining_ttd(), p.tree(), info, t);
    std::vector<int> row(net.node_count(), -1);
    for (std::size_t n = 0; n < net.node_count(); ++n) {
      const auto& outs = net.out_links(n);
      if (outs.size() == 1)
        row[n] = static_cast<int>(outs.front());
      else if (outs.size() > 1)
        row[n] = p.next_link(n, t, ev);
    }
    delta.push_back(std::move(row));
  }
  return delta;
}

/// Tab-separated (realization, link, t, seconds), realizations 1-based.
inline void write_travel_times_tsv(std::ostream& os, const Network& net, const TravelTimeDistribution& ttd) {
  os << "realization\tlink\tt\tseconds\n";
  for (std::size_t r = 0; r < ttd.realizations(); ++r)
    for (std::size_t l = 0; l < ttd.links(); ++l)
      for (int t = 1; t <= ttd.steps(); ++t)
        os << r + 1 << '\t' << net.link(l).id << '\t' << t << '\t' << ttd(r, l, t) << '\n';
}

}  // namespace sdta
