#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sdta/error.hpp"

namespace sdta {

using NodeId = long long;
using Json = nlohmann::json;

/// Physical link with a triangular fundamental diagram. Capacity is not part of
/// the link: it varies by realization and time and lives in the Scenario.
struct LinkSpec {
  std::string id;
  NodeId from = 0;
  NodeId to = 0;
  double length = 0.0;           // m
  double free_flow_speed = 0.0;  // m/s
  double backwave_speed = 0.0;   // m/s
  double jam_density = 0.0;      // veh/m
  std::optional<double> merge_priority;

  double free_flow_time() const { return length / free_flow_speed; }
  double backwave_time() const { return length / backwave_speed; }
  double jam_storage() const { return jam_density * length; }
  /// Capacity implied by the triangular diagram, veh/s.
  double diagram_capacity() const {
    return jam_density * free_flow_speed * backwave_speed / (free_flow_speed + backwave_speed);
  }
};

enum class NodeKind { Origin, Destination, Inhomogeneous, Merge, Diverge };

inline const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Origin: return "Origin";
    case NodeKind::Destination: return "Destination";
    case NodeKind::Inhomogeneous: return "Inhomogeneous";
    case NodeKind::Merge: return "Merge";
    case NodeKind::Diverge: return "Diverge";
  }
  return "?";
}

/// Classification by (in-degree, out-degree); nullopt outside the five archetypes.
inline std::optional<NodeKind> kind_from_degrees(std::size_t in, std::size_t out) {
  if (in == 0 && out == 1) return NodeKind::Origin;
  if (in == 1 && out == 0) return NodeKind::Destination;
  if (in == 1 && out == 1) return NodeKind::Inhomogeneous;
  if (in == 2 && out == 1) return NodeKind::Merge;
  if (in == 1 && out == 2) return NodeKind::Diverge;
  return std::nullopt;
}

/// Directed multigraph with link physics. Nodes and links are addressed by dense
/// indices internally; external identifiers are kept for I/O.
///
/// Construction only checks referential integrity. Archetype and route checks
/// belong to validate(), so the same type can carry the small illustrative
/// graphs the policy engine works on (e.g. two parallel links into a sink).
class Network {
 public:
  Network() = default;

  Network(std::vector<NodeId> nodes, std::vector<LinkSpec> links, NodeId origin, NodeId destination)
      : nodes_(std::move(nodes)), links_(std::move(links)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!index_.emplace(nodes_[i], i).second) {
        throw Error(ErrorCode::InvariantViolation, "duplicate node id " + std::to_string(nodes_[i]));
      }
    }
    out_.resize(nodes_.size());
    in_.resize(nodes_.size());
    from_.reserve(links_.size());
    to_.reserve(links_.size());
    for (std::size_t l = 0; l < links_.size(); ++l) {
      const auto& spec = links_[l];
      if (!link_index_.emplace(spec.id, l).second) {
        throw Error(ErrorCode::InvariantViolation, "duplicate link id '" + spec.id + "'");
      }
      auto f = lookup(spec.from, "link '" + spec.id + "' from");
      auto t = lookup(spec.to, "link '" + spec.id + "' to");
      from_.push_back(f);
      to_.push_back(t);
      out_[f].push_back(l);
      in_[t].push_back(l);
    }
    origin_ = lookup(origin, "origin");
    destination_ = lookup(destination, "destination");
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<LinkSpec>& links() const { return links_; }
  const LinkSpec& link(std::size_t l) const { return links_.at(l); }

  std::size_t from(std::size_t l) const { return from_[l]; }
  std::size_t to(std::size_t l) const { return to_[l]; }
  const std::vector<std::size_t>& out_links(std::size_t n) const { return out_[n]; }
  const std::vector<std::size_t>& in_links(std::size_t n) const { return in_[n]; }

  NodeId node_id(std::size_t n) const { return nodes_.at(n); }
  std::size_t node_index(NodeId id) const { return lookup(id, "node"); }
  bool has_node(NodeId id) const { return index_.count(id) != 0; }
  std::optional<std::size_t> find_link(const std::string& id) const {
    auto it = link_index_.find(id);
    if (it == link_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t origin() const { return origin_; }
  std::size_t destination() const { return destination_; }
  NodeId origin_id() const { return nodes_[origin_]; }
  NodeId destination_id() const { return nodes_[destination_]; }

  /// Priority of incoming link l at its (merge) head node, normalized so the
  /// priorities of the node's incoming links sum to 1. Omitted priorities count 0.5.
  double merge_priority(std::size_t l) const {
    const auto& ins = in_[to_[l]];
    double total = 0.0;
    for (auto a : ins) total += links_[a].merge_priority.value_or(0.5);
    return links_[l].merge_priority.value_or(0.5) / total;
  }

 private:
  std::size_t lookup(NodeId id, const std::string& what) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw Error(ErrorCode::UnknownReference, what + " references unknown node " + std::to_string(id));
    }
    return it->second;
  }

  std::vector<NodeId> nodes_;
  std::vector<LinkSpec> links_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> link_index_;
  std::vector<std::size_t> from_, to_;
  std::vector<std::vector<std::size_t>> out_, in_;
  std::size_t origin_ = 0, destination_ = 0;
};

inline NodeKind classify_node(const Network& net, NodeId node) {
  const auto n = net.node_index(node);
  const auto in = net.in_links(n).size();
  const auto out = net.out_links(n).size();
  if (auto kind = kind_from_degrees(in, out)) return *kind;
  throw Error(ErrorCode::UnsupportedNodeType, "node " + std::to_string(node) + " has " + std::to_string(in) +
                                                  " incoming and " + std::to_string(out) + " outgoing links");
}

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const { return violations.empty(); }
};

namespace detail {

inline std::vector<char> reach(const Network& net, const std::vector<std::size_t>& seeds, bool forward) {
  std::vector<char> seen(net.node_count(), 0);
  std::vector<std::size_t> stack(seeds);
  for (auto s : seeds) seen[s] = 1;
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    const auto& adj = forward ? net.out_links(n) : net.in_links(n);
    for (auto l : adj) {
      auto m = forward ? net.to(l) : net.from(l);
      if (!seen[m]) {
        seen[m] = 1;
        stack.push_back(m);
      }
    }
  }
  return seen;
}

}  // namespace detail

/// Checks every Network invariant; an empty violation list means valid.
inline ValidationReport validate(const Network& net) {
  ValidationReport report;
  for (const auto& l : net.links()) {
    const std::string name = "link '" + l.id + "'";
    if (!(l.length > 0)) report.violations.push_back(name + ": length must be positive");
    if (!(l.backwave_speed > 0)) report.violations.push_back(name + ": backwave speed must be positive");
    if (!(l.backwave_speed <= l.free_flow_speed))
      report.violations.push_back(name + ": backwave speed exceeds free-flow speed");
    if (!(l.jam_density > 0)) report.violations.push_back(name + ": jam density must be positive");
    if (l.merge_priority && !(*l.merge_priority > 0 && *l.merge_priority < 1))
      report.violations.push_back(name + ": merge priority must lie in (0,1)");
  }

  std::vector<std::size_t> origins, destinations;
  for (std::size_t n = 0; n < net.node_count(); ++n) {
    auto kind = kind_from_degrees(net.in_links(n).size(), net.out_links(n).size());
    if (!kind) {
      report.violations.push_back("node " + std::to_string(net.node_id(n)) + ": unsupported node type (in=" +
                                  std::to_string(net.in_links(n).size()) +
                                  ", out=" + std::to_string(net.out_links(n).size()) + ")");
      continue;
    }
    if (*kind == NodeKind::Origin) origins.push_back(n);
    if (*kind == NodeKind::Destination) destinations.push_back(n);
  }
  if (origins.size() > 1) report.violations.push_back("multiple origins");
  if (destinations.size() > 1) report.violations.push_back("multiple destinations");
  if (std::find(origins.begin(), origins.end(), net.origin()) == origins.end() && net.link_count() > 0)
    report.violations.push_back("declared origin " + std::to_string(net.origin_id()) + " is not an origin node");
  if (std::find(destinations.begin(), destinations.end(), net.destination()) == destinations.end() &&
      net.link_count() > 0)
    report.violations.push_back("declared destination " + std::to_string(net.destination_id()) +
                                " is not a destination node");

  auto fwd = detail::reach(net, {net.origin()}, true);
  if (!fwd[net.destination()]) {
    report.violations.push_back("no route from origin");
    return report;
  }
  // Dead-end check against all origin/destination archetypes, so that a second
  // origin is reported once (as "multiple origins") rather than also as a dead end.
  if (std::find(origins.begin(), origins.end(), net.origin()) == origins.end()) origins.push_back(net.origin());
  if (std::find(destinations.begin(), destinations.end(), net.destination()) == destinations.end())
    destinations.push_back(net.destination());
  auto from_o = detail::reach(net, origins, true);
  auto to_d = detail::reach(net, destinations, false);
  for (std::size_t n = 0; n < net.node_count(); ++n) {
    if (!from_o[n] || !to_d[n])
      report.violations.push_back("node " + std::to_string(net.node_id(n)) + " lies on no origin-destination route");
  }
  return report;
}

namespace detail {

template <class T>
T field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(ErrorCode::Malformed, where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Malformed, where + ": field '" + key + "': " + e.what());
  }
}

inline std::string link_id_of(const Json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw Error(ErrorCode::Malformed, "link id must be a string or integer");
}

inline Json parse_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Malformed, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace detail

/// Builds a Network from a document without archetype validation. Physics
/// fields are optional here and default to unit values; used for policy-only
/// graphs such as travel-time files.
inline Network parse_graph(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::Malformed, "network document must be an object");
  auto nodes = detail::field<std::vector<NodeId>>(doc, "nodes", "network");
  auto links_json = detail::field<Json>(doc, "links", "network");
  if (!links_json.is_array()) throw Error(ErrorCode::Malformed, "network: 'links' must be an array");
  std::vector<LinkSpec> links;
  for (const auto& lj : links_json) {
    LinkSpec l;
    if (!lj.contains("id")) throw Error(ErrorCode::Malformed, "network: link without id");
    l.id = detail::link_id_of(lj.at("id"));
    const std::string where = "link '" + l.id + "'";
    l.from = detail::field<NodeId>(lj, "from", where);
    l.to = detail::field<NodeId>(lj, "to", where);
    l.length = lj.value("length_m", 1.0);
    l.free_flow_speed = lj.value("vf_mps", 1.0);
    l.backwave_speed = lj.value("w_mps", 1.0);
    l.jam_density = lj.value("kjam_veh_per_m", 1.0);
    if (lj.contains("priority")) l.merge_priority = detail::field<double>(lj, "priority", where);
    links.push_back(std::move(l));
  }
  return Network(std::move(nodes), std::move(links), detail::field<NodeId>(doc, "origin", "network"),
                 detail::field<NodeId>(doc, "destination", "network"));
}

/// Parses and fully validates a network document.
inline Network parse_network(const Json& doc) {
  if (doc.is_object() && doc.contains("links") && doc.at("links").is_array()) {
    for (const auto& lj : doc.at("links")) {
      const std::string where = "link '" + (lj.contains("id") ? detail::link_id_of(lj.at("id")) : "?") + "'";
      for (const char* key : {"length_m", "vf_mps", "w_mps", "kjam_veh_per_m"}) detail::field<double>(lj, key, where);
    }
  }
  auto net = parse_graph(doc);
  auto report = validate(net);
  if (!report.ok()) {
    std::string msg;
    bool no_route = false;
    for (const auto& v : report.violations) {
      if (!msg.empty()) msg += "; ";
      msg += v;
      no_route = no_route || v == "no route from origin";
    }
    throw Error(no_route ? ErrorCode::NoRoute : ErrorCode::InvariantViolation, msg);
  }
  return net;
}

inline Network parse_network(const std::string& text) { return parse_network(detail::parse_text(text)); }

inline Json serialize_network(const Network& net) {
  Json links = Json::array();
  for (const auto& l : net.links()) {
    Json lj = {{"id", l.id},
               {"from", l.from},
               {"to", l.to},
               {"length_m", l.length},
               {"vf_mps", l.free_flow_speed},
               {"w_mps", l.backwave_speed},
               {"kjam_veh_per_m", l.jam_density}};
    if (l.merge_priority) lj["priority"] = *l.merge_priority;
    links.push_back(std::move(lj));
  }
  return Json{{"nodes", net.nodes()},
              {"links", std::move(links)},
              {"origin", net.origin_id()},
              {"destination", net.destination_id()}};
}

inline bool operator==(const LinkSpec& a, const LinkSpec& b) {
  return a.id == b.id && a.from == b.from && a.to == b.to && a.length == b.length &&
         a.free_flow_speed == b.free_flow_speed && a.backwave_speed == b.backwave_speed &&
         a.jam_density == b.jam_density && a.merge_priority == b.merge_priority;
}

inline bool operator==(const Network& a, const Network& b) {
  return a.nodes() == b.nodes() && a.links() == b.links() && a.origin_id() == b.origin_id() &&
         a.destination_id() == b.destination_id();
}

}  // namespace sdta
