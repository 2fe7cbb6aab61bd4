#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "sdta/loaders.hpp"

namespace sdta {

enum class LoaderKind { Chronological, Iterative };

struct SolverConfig {
  int outer_iterations = 50;
  std::size_t policies = 3;
  std::vector<double> z;  // empty: 1 + 0.5 i
  ChoiceParams choice;
  LoaderKind loader = LoaderKind::Chronological;
  int inner_iterations = 5;
  double eps = 1e-3;
  bool early_stop = true;
  bool strict_origin = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  std::vector<double> z_factors() const {
    if (z.empty()) return default_z(policies);
    if (z.size() + 1 != policies)
      throw Error(ErrorCode::InvalidConfig, std::to_string(z.size()) + " z-factors given for " +
                                                std::to_string(policies) + " policies");
    return z;
  }

  void check() const {
    if (outer_iterations < 1) throw Error(ErrorCode::InvalidConfig, "outer iterations must be at least 1");
    if (policies < 1) throw Error(ErrorCode::InvalidConfig, "policy count must be at least 1");
    if (!(eps > 0)) throw Error(ErrorCode::InvalidConfig, "convergence tolerance must be positive");
    if (!(choice.kappa < 0)) throw Error(ErrorCode::InvalidConfig, "kappa must be negative");
    if (inner_iterations < 1) throw Error(ErrorCode::InvalidConfig, "inner iterations must be at least 1");
    detail::check_z(z_factors());
  }
};

/// Wall time per pipeline stage, milliseconds.
struct StageTimes {
  double policy = 0.0, choice = 0.0, load = 0.0;

  StageTimes& operator+=(const StageTimes& o) {
    policy += o.policy;
    choice += o.choice;
    load += o.load;
    return *this;
  }
  double total() const { return policy + choice + load; }
};

struct TraceEntry {
  int iteration = 0;
  SplitSchedule splits;
  double delta = std::numeric_limits<double>::infinity();  // vs previous iteration
  StageTimes ms;
};

struct EquilibriumResult {
  TravelTimeDistribution final_ttd;  // blended C_l
  SplitSchedule final_splits;
  std::vector<Policy> final_policies;  // optimal first, then by z
  std::vector<TraceEntry> trace;
  std::vector<LoadResult> last_runs;
  LoaderStats stats;
  StageTimes total_ms;

  bool converged(double eps) const { return !trace.empty() && trace.back().delta < eps; }
};

struct ConvergenceReport {
  double absolute = 0.0;
  double relative = 0.0;
};

/// Max |eta - prev| over (policy rank, t), and the same relative to |prev|.
inline ConvergenceReport convergence_report(const SplitSchedule& eta, const SplitSchedule& prev) {
  if (eta.policies() != prev.policies() || eta.steps() != prev.steps())
    throw Error(ErrorCode::ShapeMismatch, "split schedules differ in shape");
  ConvergenceReport rep;
  for (std::size_t w = 0; w < eta.policies(); ++w)
    for (int t = 1; t <= eta.steps(); ++t) {
      const double d = std::abs(eta(w, t) - prev(w, t));
      rep.absolute = std::max(rep.absolute, d);
      rep.relative = std::max(rep.relative, d / std::max(std::abs(prev(w, t)), 1e-12));
    }
  return rep;
}

inline double convergence_metric(const SplitSchedule& eta, const SplitSchedule& prev) {
  return convergence_report(eta, prev).absolute;
}

/// Policy generation on a grid-rounded distribution: optimal policy then LP-policy set.
inline std::vector<Policy> generate_policies(const Network& net, const TravelTimeDistribution& ttd,
                                             const SolverConfig& cfg) {
  const auto grid = round_to_grid(ttd);
  const auto tree = generate_events(grid);
  std::vector<Policy> out;
  out.push_back(dot_spi(net, grid, tree));
  if (cfg.policies > 1)
    for (auto& p : lp_policy(net, grid, out.front(), cfg.z_factors(), cfg.threads)) out.push_back(std::move(p));
  return out;
}

inline LoadOutput load(const Network& net, const std::vector<Policy>& policies, const SplitSchedule& splits,
                       const Scenario& sc, const SolverConfig& cfg) {
  LoadOptions opt{cfg.strict_origin, false, cfg.threads};
  return cfg.loader == LoaderKind::Chronological ? po_ltm(net, policies, splits, sc, opt)
                                                 : iterative_loading(net, policies, splits, sc, cfg.inner_iterations, opt);
}

/// Successive-averages fixed point over generation, choice and loading.
inline EquilibriumResult msa_solve(const Network& net, const Scenario& sc, const SolverConfig& cfg) {
  cfg.check();
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point a) {
    return std::chrono::duration<double, std::milli>(Clock::now() - a).count();
  };
  EquilibriumResult res;
  auto c = free_flow_ttd(net, sc);
  for (int l = 1; l <= cfg.outer_iterations; ++l) {
    TraceEntry entry;
    entry.iteration = l;
    auto t0 = Clock::now();
    auto policies = generate_policies(net, c, cfg);
    entry.ms.policy = ms_since(t0);

    t0 = Clock::now();
    auto splits = logit_splits(utilities(policies, cfg.choice));
    entry.ms.choice = ms_since(t0);

    t0 = Clock::now();
    auto out = load(net, policies, splits, sc, cfg);
    entry.ms.load = ms_since(t0);

    const double alpha = 1.0 / l;
    auto& cv = c.raw();
    const auto& nv = out.ttd.raw();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = (1.0 - alpha) * cv[i] + alpha * nv[i];

    if (!res.trace.empty()) entry.delta = convergence_metric(splits, res.trace.back().splits);
    entry.splits = splits;
    res.total_ms += entry.ms;
    res.stats += out.stats;
    res.final_splits = std::move(splits);
    res.final_policies = std::move(policies);
    res.last_runs = std::move(out.runs);
    const bool stop = cfg.early_stop && entry.delta < cfg.eps;
    res.trace.push_back(std::move(entry));
    if (stop) break;
  }
  res.final_ttd = std::move(c);
  return res;
}

/// Optimal-policy origin expected time averaged over departure steps.
inline double average_expected_time(const EquilibriumResult& res) {
  const auto& p = res.final_policies.front();
  double acc = 0.0;
  for (int t = 1; t <= p.steps(); ++t) acc += expected_origin_time(p, t);
  return acc / p.steps();
}

/// Capacity series of every (realization, link) scaled by max(0.05, 1 + cov N(0,1)).
/// Draws share the normal variates across cov values (common random numbers per seed).
inline Scenario perturb_capacity(const Scenario& sc, double cov, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto out = sc;
  for (auto& r : out.realizations)
    for (auto& series : r.capacity) {
      const double f = std::max(0.05, 1.0 + cov * normal(rng));
      for (auto& q : series) q *= f;
    }
  return out;
}

/// Replaces the realization means of one link's capacity by `means` (one per
/// realization), keeping each series' relative variation.
inline Scenario with_capacity_means(const Network& net, const Scenario& sc, const std::string& link_id,
                                    const std::vector<double>& means) {
  const auto l = net.find_link(link_id);
  if (!l) throw Error(ErrorCode::UnknownReference, "unknown link '" + link_id + "'");
  if (means.size() != sc.realizations.size())
    throw Error(ErrorCode::InvalidConfig, "capacity vector needs one value per realization");
  auto out = sc;
  for (std::size_t r = 0; r < out.realizations.size(); ++r) {
    auto& series = out.realizations[r].capacity[*l];
    double mean = 0.0;
    for (double q : series) mean += q;
    mean /= static_cast<double>(series.size());
    for (auto& q : series) q *= means[r] / mean;
  }
  return out;
}

/// R equiprobable realizations cycling through the given ones, each link's
/// capacity scaled by a factor drawn uniformly from [0.9, 1.1].
inline Scenario replicate_realizations(const Scenario& sc, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidConfig, "realization count must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> factor(0.9, 1.1);
  auto out = sc;
  out.realizations.clear();
  for (std::size_t i = 0; i < count; ++i) {
    auto r = sc.realizations[i % sc.realizations.size()];
    r.probability = 1.0 / static_cast<double>(count);
    if (i >= sc.realizations.size())
      for (auto& series : r.capacity) {
        const double f = factor(rng);
        for (auto& q : series) q *= f;
      }
    out.realizations.push_back(std::move(r));
  }
  return out;
}

/// Sample standard deviation over Monte Carlo draws of the optimal policy's
/// origin expected time at each requested departure step.
inline std::vector<double> monte_carlo_std(const Network& net, const Scenario& sc, double cov, int draws,
                                           std::uint64_t seed, const SolverConfig& cfg,
                                           const std::vector<int>& departure_steps) {
  if (draws < 2) throw Error(ErrorCode::InvalidConfig, "Monte Carlo needs at least two draws");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> samples(departure_steps.size());
  for (int d = 0; d < draws; ++d) {
    const auto res = msa_solve(net, perturb_capacity(sc, cov, rng), cfg);
    for (std::size_t i = 0; i < departure_steps.size(); ++i)
      samples[i].push_back(expected_origin_time(res.final_policies.front(), departure_steps[i]));
  }
  std::vector<double> out;
  for (const auto& s : samples) {
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    out.push_back(std::sqrt(ss / static_cast<double>(s.size() - 1)));
  }
  return out;
}

/// Tab-separated (l, policy, t, eta, delta, ms); ms is the iteration's wall time.
inline void write_trace_tsv(std::ostream& os, const EquilibriumResult& res) {
  os << "l\tpolicy\tt\teta\tdelta\tms\n";
  for (const auto& e : res.trace)
    for (std::size_t w = 0; w < e.splits.policies(); ++w)
      for (int t = 1; t <= e.splits.steps(); ++t)
        os << e.iteration << '\t' << w << '\t' << t << '\t' << e.splits(w, t) << '\t'
           << (std::isinf(e.delta) ? std::string("nan") : std::to_string(e.delta)) << '\t' << e.ms.total() << '\n';
}

}  // namespace sdta
