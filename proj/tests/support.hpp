#pragma once

// Shared fixtures and independent test-side oracles. Nothing here calls into
// the dynamic program or the loaders it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sdta/sdta.hpp"

namespace sdta::test {

inline std::string fixture(const std::string& name) { return std::string(SDTA_FIXTURES) + "/" + name; }

struct Case {
  Network net;
  Scenario sc;
};

inline Case load_case(const std::string& stem, const std::string& scenario = "") {
  auto net = parse_network(read_file(fixture(stem + ".network.json")));
  auto sc = parse_scenario(read_file(fixture((scenario.empty() ? stem : scenario) + ".scenario.json")), net);
  return {std::move(net), std::move(sc)};
}

inline TtdDocument table1() { return parse_ttd(read_json(fixture("table1.ttd.json"))); }

inline LinkSpec make_link(const std::string& id, NodeId from, NodeId to, double length = 100.0, double vf = 10.0,
                          double w = 5.0, double kjam = 0.2) {
  LinkSpec l;
  l.id = id;
  l.from = from;
  l.to = to;
  l.length = length;
  l.free_flow_speed = vf;
  l.backwave_speed = w;
  l.jam_density = kjam;
  return l;
}

/// Random policy instance: a small multigraph where every node reaches the
/// destination, integer travel times on a unit grid and dyadic probabilities.
struct PolicyInstance {
  Network net;
  TravelTimeDistribution ttd;
};

inline PolicyInstance random_instance(std::mt19937& rng, int max_nodes = 4, int max_steps = 5, int max_r = 3,
                                      int max_cost = 3) {
  std::uniform_int_distribution<int> nn(2, max_nodes), steps(1, max_steps), rr(1, max_r), cost(1, max_cost);
  const int n = nn(rng);
  const int d = n;  // destination id
  std::vector<NodeId> nodes;
  for (int i = 1; i <= n; ++i) nodes.push_back(i);
  std::vector<LinkSpec> links;
  auto add = [&](int a, int b) { links.push_back(make_link(std::to_string(links.size()), a, b)); };
  // Spanning arcs toward the destination guarantee reachability.
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> up(i + 1, n);
    add(i, up(rng));
  }
  std::uniform_int_distribution<int> extra(0, n), node(1, n);
  const int k = extra(rng);
  for (int e = 0; e < k; ++e) {
    const int a = node(rng), b = node(rng);
    if (a == d || a == b) continue;
    add(a, b);
  }
  Network net(nodes, links, 1, d);

  const int R = rr(rng);
  std::vector<double> rho;
  if (R == 1) rho = {1.0};
  if (R == 2) rho = std::bernoulli_distribution(0.5)(rng) ? std::vector<double>{0.5, 0.5} : std::vector<double>{0.75, 0.25};
  if (R == 3) rho = {0.5, 0.25, 0.25};
  const int T = steps(rng);
  TravelTimeDistribution ttd(1.0, T, net.link_count(), rho);
  // Realizations share prefixes with some probability so events merge.
  std::bernoulli_distribution copy(0.4);
  for (std::size_t r = 0; r < ttd.realizations(); ++r)
    for (int t = 1; t <= T; ++t)
      for (std::size_t l = 0; l < net.link_count(); ++l)
        ttd.at(r, l, t) = (r > 0 && copy(rng)) ? ttd(r - 1, l, t) : cost(rng);
  return {std::move(net), std::move(ttd)};
}

/// Static shortest times to the destination by Bellman-Ford relaxation.
inline std::vector<double> bellman_ford(const Network& net, const std::vector<double>& cost) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(net.node_count(), inf);
  dist[net.destination()] = 0.0;
  for (std::size_t it = 0; it < net.node_count(); ++it)
    for (std::size_t l = 0; l < net.link_count(); ++l)
      dist[net.from(l)] = std::min(dist[net.from(l)], cost[l] + dist[net.to(l)]);
  return dist;
}

/// Realization-level information classes at step s: realizations r, q alike
/// iff their values agree on every link at every step before s (s = T+1
/// compares the full history). Computed directly from the definition.
inline bool same_history(const TravelTimeDistribution& ttd, std::size_t r, std::size_t q, int s) {
  for (int u = 1; u < s && u <= ttd.steps(); ++u)
    for (std::size_t l = 0; l < ttd.links(); ++l)
      if (ttd(r, l, u) != ttd(q, l, u)) return false;
  return true;
}

/// Minimum expected origin travel time at step 1 over every non-anticipative
/// routing rule, by exhaustive search. A rule assigns an out-link to each
/// (node, step, information class) a traveler reaches before the horizon; after
/// the horizon the network is static and known, so the shortest path applies.
inline double enumerate_min_expected(const Network& net, const TravelTimeDistribution& ttd) {
  const int T = ttd.steps();
  const std::size_t R = ttd.realizations();
  std::vector<std::vector<double>> post(R);
  for (std::size_t r = 0; r < R; ++r) {
    std::vector<double> cost(net.link_count());
    for (std::size_t l = 0; l < cost.size(); ++l) cost[l] = ttd(r, l, T);
    post[r] = bellman_ford(net, cost);
  }
  // Class representative: smallest realization with the same history.
  auto rep = [&](std::size_t r, int s) {
    for (std::size_t q = 0; q < r; ++q)
      if (same_history(ttd, r, q, s)) return q;
    return r;
  };
  struct Walker {
    std::size_t node;
    int t;
    double elapsed;
  };
  std::map<std::tuple<std::size_t, int, std::size_t>, std::size_t> rule;
  double best = std::numeric_limits<double>::infinity();

  std::function<void(std::vector<Walker>)> search = [&](std::vector<Walker> ws) {
    for (std::size_t r = 0; r < R; ++r) {
      auto& w = ws[r];
      while (w.node != net.destination() && w.t <= T) {
        const auto key = std::make_tuple(w.node, w.t, rep(r, w.t));
        auto it = rule.find(key);
        if (it == rule.end()) {
          for (auto l : net.out_links(w.node)) {
            rule[key] = l;
            search(ws);
          }
          rule.erase(key);
          return;
        }
        const double c = ttd(r, it->second, w.t);
        w.elapsed += c;
        w.t += static_cast<int>(std::llround(c));
        w.node = net.to(it->second);
      }
      if (w.node != net.destination()) {
        w.elapsed += post[r][w.node];
        w.node = net.destination();
      }
    }
    double e = 0.0;
    for (std::size_t r = 0; r < R; ++r) e += ttd.probabilities()[r] * ws[r].elapsed;
    best = std::min(best, e);
  };
  search(std::vector<Walker>(R, Walker{net.origin(), 1, 0.0}));
  return best;
}

/// Deterministic time-dependent shortest time from every node at every step to
/// the destination for one realization, by label correcting over (node, t).
inline std::vector<std::vector<double>> tdsp(const Network& net, const TravelTimeDistribution& ttd, std::size_t r) {
  const int T = ttd.steps();
  std::vector<double> cost(net.link_count());
  for (std::size_t l = 0; l < cost.size(); ++l) cost[l] = ttd(r, l, T);
  const auto post = bellman_ford(net, cost);
  std::vector<std::vector<double>> label(static_cast<std::size_t>(T) + 2, post);
  // Iterate to a fixed point; exits past T read the static labels.
  bool changed = true;
  for (int t = 1; t <= T; ++t) label[static_cast<std::size_t>(t)].assign(net.node_count(), std::numeric_limits<double>::infinity());
  for (int t = 1; t <= T; ++t) label[static_cast<std::size_t>(t)][net.destination()] = 0.0;
  while (changed) {
    changed = false;
    for (int t = 1; t <= T; ++t)
      for (std::size_t l = 0; l < net.link_count(); ++l) {
        const double c = ttd(r, l, t);
        const int t2 = std::min(t + static_cast<int>(std::llround(c)), T + 1);
        const double cand = c + label[static_cast<std::size_t>(t2)][net.to(l)];
        auto& cur = label[static_cast<std::size_t>(t)][net.from(l)];
        if (net.from(l) != net.destination() && cand < cur - 1e-12) {
          cur = cand;
          changed = true;
        }
      }
  }
  return label;
}

inline TravelTimeTable constant_table(const Network& net, int steps) {
  TravelTimeTable c(net.link_count(), steps);
  for (std::size_t l = 0; l < net.link_count(); ++l)
    for (auto& v : c.series(l)) v = net.link(l).free_flow_time();
  return c;
}

/// Scenario with constant demand (veh/step) and constant capacity (veh/s).
inline Scenario constant_scenario(const Network& net, double dt, int steps, double demand, double capacity,
                                  std::vector<double> rho = {1.0}) {
  Scenario sc;
  sc.dt = dt;
  sc.steps = steps;
  sc.origin = net.origin_id();
  sc.destination = net.destination_id();
  for (double p : rho) {
    Realization r;
    r.probability = p;
    r.demand.assign(static_cast<std::size_t>(steps), demand);
    r.capacity.assign(net.link_count(), std::vector<double>(static_cast<std::size_t>(steps), capacity));
    sc.realizations.push_back(std::move(r));
  }
  return sc;
}

}  // namespace sdta::test
