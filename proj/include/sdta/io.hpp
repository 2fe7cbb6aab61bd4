#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "sdta/scenario.hpp"

namespace sdta {

/// Reads a whole file; a missing or unreadable file is a parse failure.
inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Malformed, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json(const std::string& path) { return detail::parse_text(read_file(path)); }

/// A travel-time distribution file with its graph:
/// {network, dt_s, steps, realizations: [{prob, times: {link-id: [seconds per step]}}]}.
struct TtdDocument {
  Network network;
  TravelTimeDistribution ttd;
};

inline TtdDocument parse_ttd(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::Malformed, "travel-time document must be an object");
  auto net = parse_graph(detail::field<Json>(doc, "network", "travel-time document"));
  const double dt = detail::field<double>(doc, "dt_s", "travel-time document");
  if (!(dt > 0)) throw Error(ErrorCode::NonPositiveStep, "dt_s must be positive");
  const int steps = detail::field<int>(doc, "steps", "travel-time document");
  if (steps < 1) throw Error(ErrorCode::NonPositiveStep, "steps must be at least 1");
  const auto reals = detail::field<Json>(doc, "realizations", "travel-time document");
  if (!reals.is_array() || reals.empty()) throw Error(ErrorCode::Malformed, "at least one realization is required");

  std::vector<double> rho;
  double mass = 0.0;
  for (const auto& r : reals) {
    rho.push_back(detail::field<double>(r, "prob", "realization"));
    if (!(rho.back() > 0)) throw Error(ErrorCode::ProbabilityMass, "realization probability must be positive");
    mass += rho.back();
  }
  if (std::abs(mass - 1.0) > 1e-9)
    throw Error(ErrorCode::ProbabilityMass, "realization probabilities sum to " + std::to_string(mass));

  TravelTimeDistribution ttd(dt, steps, net.link_count(), rho);
  for (std::size_t r = 0; r < reals.size(); ++r) {
    const std::string where = "realization " + std::to_string(r + 1);
    const auto times = detail::field<Json>(reals[r], "times", where);
    for (auto it = times.begin(); it != times.end(); ++it)
      if (!net.find_link(it.key())) throw Error(ErrorCode::UnknownReference, where + ": unknown link '" + it.key() + "'");
    for (std::size_t l = 0; l < net.link_count(); ++l) {
      const auto& id = net.link(l).id;
      if (!times.contains(id)) throw Error(ErrorCode::MissingSeries, where + ": no times for link '" + id + "'");
      const auto v = expand_series(times.at(id), static_cast<std::size_t>(steps), where + " link '" + id + "'");
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0)) throw Error(ErrorCode::InvariantViolation, where + ": travel times must be positive");
        ttd.at(r, l, static_cast<int>(i) + 1) = v[i];
      }
    }
  }
  return {std::move(net), std::move(ttd)};
}

inline Json serialize_ttd(const Network& net, const TravelTimeDistribution& ttd) {
  Json reals = Json::array();
  for (std::size_t r = 0; r < ttd.realizations(); ++r) {
    Json times = Json::object();
    for (std::size_t l = 0; l < ttd.links(); ++l) {
      auto s = ttd.series(r, l);
      times[net.link(l).id] = std::vector<double>(s.begin(), s.end());
    }
    reals.push_back({{"prob", ttd.probabilities()[r]}, {"times", times}});
  }
  return Json{{"network", serialize_network(net)}, {"dt_s", ttd.dt()}, {"steps", ttd.steps()}, {"realizations", reals}};
}

}  // namespace sdta
