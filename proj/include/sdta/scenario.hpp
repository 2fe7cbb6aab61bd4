#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdta/network.hpp"

namespace sdta {

/// Travel times C^r_{l,t} in seconds for realizations r, links l and departure
/// steps t = 1..T. Values past the horizon are the step-T values (the network is
/// static after the last step). Carries the realization probabilities so that
/// event machinery can be derived from the distribution alone.
class TravelTimeDistribution {
 public:
  TravelTimeDistribution() = default;

  TravelTimeDistribution(double dt, int steps, std::size_t links, std::vector<double> probabilities,
                         double fill = 0.0)
      : dt_(dt),
        steps_(steps),
        links_(links),
        probabilities_(std::move(probabilities)),
        values_(probabilities_.size() * links * static_cast<std::size_t>(steps), fill) {}

  double dt() const { return dt_; }
  int steps() const { return steps_; }
  std::size_t links() const { return links_; }
  std::size_t realizations() const { return probabilities_.size(); }
  const std::vector<double>& probabilities() const { return probabilities_; }

  double operator()(std::size_t r, std::size_t l, int t) const { return values_[offset(r, l) + clamp(t) - 1]; }
  double& at(std::size_t r, std::size_t l, int t) { return values_[offset(r, l) + clamp(t) - 1]; }

  std::span<const double> series(std::size_t r, std::size_t l) const {
    return {values_.data() + offset(r, l), static_cast<std::size_t>(steps_)};
  }
  std::span<double> series(std::size_t r, std::size_t l) {
    return {values_.data() + offset(r, l), static_cast<std::size_t>(steps_)};
  }

  const std::vector<double>& raw() const { return values_; }
  std::vector<double>& raw() { return values_; }

  bool same_shape(const TravelTimeDistribution& o) const {
    return dt_ == o.dt_ && steps_ == o.steps_ && links_ == o.links_ && realizations() == o.realizations();
  }

  friend bool operator==(const TravelTimeDistribution&, const TravelTimeDistribution&) = default;

 private:
  std::size_t offset(std::size_t r, std::size_t l) const {
    return (r * links_ + l) * static_cast<std::size_t>(steps_);
  }
  std::size_t clamp(int t) const { return static_cast<std::size_t>(t < 1 ? 1 : (t > steps_ ? steps_ : t)); }

  double dt_ = 1.0;
  int steps_ = 0;
  std::size_t links_ = 0;
  std::vector<double> probabilities_;
  std::vector<double> values_;
};

/// Single-realization link travel-time table C_{l,t}, t = 1..T (one loader run,
/// or the current information observed so far).
class TravelTimeTable {
 public:
  TravelTimeTable() = default;
  TravelTimeTable(std::size_t links, int steps, double fill = 0.0)
      : links_(links), steps_(steps), values_(links * static_cast<std::size_t>(steps), fill) {}

  std::size_t links() const { return links_; }
  int steps() const { return steps_; }
  double operator()(std::size_t l, int t) const { return values_[l * steps_ + clamp(t) - 1]; }
  double& at(std::size_t l, int t) { return values_[l * steps_ + clamp(t) - 1]; }
  std::span<const double> series(std::size_t l) const {
    return {values_.data() + l * steps_, static_cast<std::size_t>(steps_)};
  }
  std::span<double> series(std::size_t l) { return {values_.data() + l * steps_, static_cast<std::size_t>(steps_)}; }

  friend bool operator==(const TravelTimeTable&, const TravelTimeTable&) = default;

 private:
  std::size_t clamp(int t) const { return static_cast<std::size_t>(t < 1 ? 1 : (t > steps_ ? steps_ : t)); }

  std::size_t links_ = 0;
  int steps_ = 0;
  std::vector<double> values_;
};

inline TravelTimeTable realization_table(const TravelTimeDistribution& ttd, std::size_t r) {
  TravelTimeTable table(ttd.links(), ttd.steps());
  for (std::size_t l = 0; l < ttd.links(); ++l) {
    auto src = ttd.series(r, l);
    std::copy(src.begin(), src.end(), table.series(l).begin());
  }
  return table;
}

inline void set_realization(TravelTimeDistribution& ttd, std::size_t r, const TravelTimeTable& table) {
  for (std::size_t l = 0; l < ttd.links(); ++l) {
    auto src = table.series(l);
    std::copy(src.begin(), src.end(), ttd.series(r, l).begin());
  }
}

/// Rounds every value to the nearest positive multiple of dt (at least dt).
inline TravelTimeDistribution round_to_grid(const TravelTimeDistribution& ttd) {
  auto out = ttd;
  const double dt = ttd.dt();
  for (auto& v : out.raw()) {
    double steps = std::round(v / dt);
    v = (steps < 1.0 ? 1.0 : steps) * dt;
  }
  return out;
}

/// Travel time as a whole number of steps (values are grid-rounded).
inline int to_steps(double seconds, double dt) {
  auto s = static_cast<int>(std::llround(seconds / dt));
  return s < 1 ? 1 : s;
}

/// One support point of the joint demand/supply distribution.
struct Realization {
  double probability = 0.0;
  std::vector<double> demand;                 // veh/step, index t-1
  std::vector<std::vector<double>> capacity;  // veh/s, [link][t-1]
};

struct Scenario {
  double dt = 1.0;
  int steps = 0;
  std::vector<Realization> realizations;
  NodeId origin = 0;
  NodeId destination = 0;

  std::vector<double> probabilities() const {
    std::vector<double> p;
    for (const auto& r : realizations) p.push_back(r.probability);
    return p;
  }
};

inline TravelTimeDistribution free_flow_ttd(const Network& net, const Scenario& sc) {
  TravelTimeDistribution ttd(sc.dt, sc.steps, net.link_count(), sc.probabilities());
  for (std::size_t r = 0; r < ttd.realizations(); ++r)
    for (std::size_t l = 0; l < net.link_count(); ++l)
      for (auto& v : ttd.series(r, l)) v = net.link(l).free_flow_time();
  return ttd;
}

namespace detail {

inline void append_series(const Json& spec, std::size_t n, std::vector<double>& out, const std::string& where) {
  std::vector<double> values;
  if (spec.is_array()) {
    try {
      values = spec.get<std::vector<double>>();
    } catch (const Json::exception&) {
      throw Error(ErrorCode::Malformed, where + ": series array must contain numbers");
    }
    if (values.size() != n)
      throw Error(ErrorCode::Malformed, where + ": series has " + std::to_string(values.size()) +
                                            " values, expected " + std::to_string(n));
  } else if (spec.is_number()) {
    values.assign(n, spec.get<double>());
  } else if (spec.is_object() && spec.contains("segments")) {
    std::size_t used = 0;
    for (const auto& seg : spec.at("segments")) {
      auto len = field<std::size_t>(seg, "steps", where + " segment");
      append_series(seg, len, values, where);
      used += len;
    }
    if (used != n)
      throw Error(ErrorCode::Malformed, where + ": segments cover " + std::to_string(used) + " steps, expected " +
                                            std::to_string(n));
  } else if (spec.is_object() && spec.contains("constant")) {
    values.assign(n, field<double>(spec, "constant", where));
  } else if (spec.is_object() && spec.contains("uniform")) {
    auto bounds = field<std::vector<double>>(spec, "uniform", where);
    if (bounds.size() != 2 || bounds[0] > bounds[1])
      throw Error(ErrorCode::Malformed, where + ": 'uniform' needs [lo, hi] with lo <= hi");
    std::mt19937_64 rng(spec.value("seed", std::uint64_t{0}));
    std::uniform_real_distribution<double> dist(bounds[0], bounds[1]);
    values.resize(n);
    for (auto& v : values) v = bounds[0] == bounds[1] ? bounds[0] : dist(rng);
  } else {
    throw Error(ErrorCode::Malformed, where + ": unrecognized series spec");
  }
  if (spec.is_object() && spec.contains("scale")) {
    const double s = field<double>(spec, "scale", where);
    for (auto& v : values) v *= s;
  }
  out.insert(out.end(), values.begin(), values.end());
}

}  // namespace detail

/// Expands a series spec (array, number, {constant}, {uniform, seed}, {segments})
/// into n values. An optional "scale" multiplies the result.
inline std::vector<double> expand_series(const Json& spec, std::size_t n, const std::string& where = "series") {
  std::vector<double> out;
  out.reserve(n);
  detail::append_series(spec, n, out, where);
  return out;
}

/// Load-time checks tying a scenario to a network. Throws on invariant
/// violations; returns diagram-consistency warnings.
inline std::vector<std::string> check_scenario(const Network& net, const Scenario& sc) {
  std::vector<std::string> warnings;
  for (std::size_t l = 0; l < net.link_count(); ++l) {
    const auto& spec = net.link(l);
    if (spec.free_flow_time() < sc.dt) {
      throw Error(ErrorCode::InvariantViolation, "link '" + spec.id + "': free-flow time " +
                                                     std::to_string(spec.free_flow_time()) +
                                                     " s is shorter than one step");
    }
    double qmax = 0.0;
    for (const auto& r : sc.realizations)
      for (double q : r.capacity[l]) qmax = std::max(qmax, q);
    if (qmax > spec.diagram_capacity() * (1.0 + 1e-12)) {
      warnings.push_back("link '" + spec.id + "': scenario capacity " + std::to_string(qmax) +
                         " veh/s exceeds the triangular diagram capacity " +
                         std::to_string(spec.diagram_capacity()) + " veh/s");
    }
  }
  return warnings;
}

/// Parses a scenario document against a network. Demand is given in veh/h and
/// stored as veh/step; capacities are veh/s.
inline Scenario parse_scenario(const Json& doc, const Network& net) {
  if (!doc.is_object()) throw Error(ErrorCode::Malformed, "scenario document must be an object");
  Scenario sc;
  sc.dt = detail::field<double>(doc, "dt_s", "scenario");
  if (!(sc.dt > 0)) throw Error(ErrorCode::NonPositiveStep, "dt_s must be positive");
  sc.steps = detail::field<int>(doc, "steps", "scenario");
  if (sc.steps < 1) throw Error(ErrorCode::NonPositiveStep, "steps must be at least 1");
  sc.origin = net.origin_id();
  sc.destination = net.destination_id();
  const auto n = static_cast<std::size_t>(sc.steps);

  const auto reals = detail::field<Json>(doc, "realizations", "scenario");
  if (!reals.is_array() || reals.empty()) throw Error(ErrorCode::Malformed, "scenario needs at least one realization");
  double mass = 0.0;
  for (std::size_t i = 0; i < reals.size(); ++i) {
    const auto& rj = reals[i];
    const std::string where = "realization " + std::to_string(i + 1);
    Realization r;
    r.probability = detail::field<double>(rj, "prob", where);
    if (!(r.probability > 0)) throw Error(ErrorCode::ProbabilityMass, where + ": probability must be positive");
    mass += r.probability;

    if (!rj.contains("demand")) throw Error(ErrorCode::MissingSeries, where + ": missing demand series");
    r.demand = expand_series(rj.at("demand"), n, where + " demand");
    for (auto& d : r.demand) {
      if (d < 0) throw Error(ErrorCode::InvariantViolation, where + ": negative demand");
      d *= sc.dt / 3600.0;
    }

    if (!rj.contains("capacity") || !rj.at("capacity").is_object())
      throw Error(ErrorCode::MissingSeries, where + ": missing capacity object");
    const auto& cap = rj.at("capacity");
    for (auto it = cap.begin(); it != cap.end(); ++it) {
      if (!net.find_link(it.key()))
        throw Error(ErrorCode::UnknownReference, where + ": capacity for unknown link '" + it.key() + "'");
    }
    r.capacity.resize(net.link_count());
    for (std::size_t l = 0; l < net.link_count(); ++l) {
      const auto& id = net.link(l).id;
      if (!cap.contains(id)) throw Error(ErrorCode::MissingSeries, where + ": no capacity series for link '" + id + "'");
      r.capacity[l] = expand_series(cap.at(id), n, where + " capacity '" + id + "'");
      for (double q : r.capacity[l])
        if (!(q > 0)) throw Error(ErrorCode::InvariantViolation, where + ": capacity of link '" + id + "' must be positive");
    }
    sc.realizations.push_back(std::move(r));
  }
  if (std::abs(mass - 1.0) > 1e-9)
    throw Error(ErrorCode::ProbabilityMass, "realization probabilities sum to " + std::to_string(mass));
  check_scenario(net, sc);
  return sc;
}

inline Scenario parse_scenario(const std::string& text, const Network& net) {
  return parse_scenario(detail::parse_text(text), net);
}

/// Writes a scenario with explicit arrays (demand back in veh/h).
inline Json serialize_scenario(const Scenario& sc, const Network& net) {
  Json reals = Json::array();
  for (const auto& r : sc.realizations) {
    std::vector<double> vph(r.demand);
    for (auto& d : vph) d *= 3600.0 / sc.dt;
    Json cap = Json::object();
    for (std::size_t l = 0; l < net.link_count(); ++l) cap[net.link(l).id] = r.capacity[l];
    reals.push_back({{"prob", r.probability}, {"demand", vph}, {"capacity", cap}});
  }
  return Json{{"dt_s", sc.dt}, {"steps", sc.steps}, {"realizations", reals}};
}

}  // namespace sdta
