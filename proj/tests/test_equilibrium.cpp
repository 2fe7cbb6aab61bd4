#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace sdta;

namespace {

SolverConfig config(LoaderKind loader, std::size_t W = 3) {
  SolverConfig cfg;
  cfg.loader = loader;
  cfg.policies = W;
  return cfg;
}

double max_split_gap(const SplitSchedule& a, const SplitSchedule& b) { return convergence_metric(a, b); }

}  // namespace

TEST(Msa, FirstIterateIsTheLoaderOutput) {
  const auto c = test::load_case("diamond");
  auto cfg = config(LoaderKind::Chronological);
  cfg.outer_iterations = 1;
  const auto res = msa_solve(c.net, c.sc, cfg);
  const auto policies = generate_policies(c.net, free_flow_ttd(c.net, c.sc), cfg);
  const auto out = load(c.net, policies, logit_splits(utilities(policies, cfg.choice)), c.sc, cfg);
  EXPECT_EQ(res.final_ttd, out.ttd);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_TRUE(std::isinf(res.trace[0].delta));
}

TEST(Msa, TwoLinksConvergesWithChronologicalLoading) {
  const auto c = test::load_case("twolinks");
  const auto res = msa_solve(c.net, c.sc, config(LoaderKind::Chronological));
  ASSERT_LE(res.trace.size(), 50u);
  EXPECT_LT(res.trace.back().delta, 1e-3);
}

TEST(Msa, LoadersAgreeOnDiamond) {
  const auto c = test::load_case("diamond");
  const auto a = msa_solve(c.net, c.sc, config(LoaderKind::Chronological));
  const auto b = msa_solve(c.net, c.sc, config(LoaderKind::Iterative));
  EXPECT_LT(a.trace.back().delta, 1e-3);
  EXPECT_LT(b.trace.back().delta, 1e-3);
  EXPECT_LE(max_split_gap(a.final_splits, b.final_splits), 0.02);
}

TEST(Msa, TraceInvariants) {
  const auto c = test::load_case("diamond");
  auto cfg = config(LoaderKind::Chronological);
  cfg.outer_iterations = 6;
  cfg.early_stop = false;
  const auto res = msa_solve(c.net, c.sc, cfg);
  ASSERT_EQ(res.trace.size(), 6u);
  for (const auto& e : res.trace)
    for (int t = 1; t <= e.splits.steps(); ++t) {
      double sum = 0.0;
      for (std::size_t w = 0; w < e.splits.policies(); ++w) sum += e.splits(w, t);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  for (std::size_t r = 0; r < res.final_ttd.realizations(); ++r)
    for (std::size_t l = 0; l < c.net.link_count(); ++l)
      for (int t = 1; t <= c.sc.steps; ++t)
        EXPECT_GE(res.final_ttd(r, l, t), c.net.link(l).free_flow_time() - c.sc.dt);
}

TEST(Msa, SinglePolicyOnlyAveragesTravelTimes) {
  const auto c = test::load_case("diamond");
  auto cfg = config(LoaderKind::Chronological, 1);
  cfg.outer_iterations = 4;
  const auto res = msa_solve(c.net, c.sc, cfg);
  for (const auto& e : res.trace) {
    ASSERT_EQ(e.splits.policies(), 1u);
    for (int t = 1; t <= e.splits.steps(); ++t) EXPECT_EQ(e.splits(0, t), 1.0);
  }
  EXPECT_EQ(res.final_policies.size(), 1u);
}

TEST(Msa, RealizationOrderDoesNotMatter) {
  const auto c = test::load_case("diamond");
  auto reversed = c.sc;
  std::reverse(reversed.realizations.begin(), reversed.realizations.end());
  auto cfg = config(LoaderKind::Chronological);
  cfg.outer_iterations = 5;
  cfg.early_stop = false;
  const auto a = msa_solve(c.net, c.sc, cfg);
  const auto b = msa_solve(c.net, reversed, cfg);
  EXPECT_LE(max_split_gap(a.final_splits, b.final_splits), 1e-9);
  const auto R = c.sc.realizations.size();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t l = 0; l < c.net.link_count(); ++l)
      for (int t = 1; t <= c.sc.steps; ++t) EXPECT_NEAR(a.final_ttd(r, l, t), b.final_ttd(R - 1 - r, l, t), 1e-9);
}

TEST(Msa, ThreadedRunIsIdentical) {
  const auto c = test::load_case("diamond");
  auto cfg = config(LoaderKind::Iterative);
  cfg.outer_iterations = 3;
  const auto a = msa_solve(c.net, c.sc, cfg);
  cfg.threads = 4;
  const auto b = msa_solve(c.net, c.sc, cfg);
  EXPECT_EQ(a.final_ttd, b.final_ttd);
  EXPECT_EQ(a.final_splits, b.final_splits);
}

TEST(Msa, RejectsInvalidConfig) {
  const auto c = test::load_case("twolinks");
  auto cfg = config(LoaderKind::Chronological);
  cfg.outer_iterations = 0;
  EXPECT_THROW(msa_solve(c.net, c.sc, cfg), Error);
  cfg = config(LoaderKind::Chronological);
  cfg.eps = 0.0;
  EXPECT_THROW(msa_solve(c.net, c.sc, cfg), Error);
  cfg = config(LoaderKind::Chronological);
  cfg.z = {1.5};  // W = 3 needs two factors
  EXPECT_THROW(msa_solve(c.net, c.sc, cfg), Error);
}

TEST(ConvergenceMetric, Examples) {
  SplitSchedule a(2, 3);
  for (int t = 1; t <= 3; ++t) {
    a.at(0, t) = 0.6;
    a.at(1, t) = 0.4;
  }
  EXPECT_EQ(convergence_metric(a, a), 0.0);
  auto b = a;
  b.at(0, 2) = 0.9;
  EXPECT_NEAR(convergence_metric(b, a), 0.3, 1e-15);
  EXPECT_NEAR(convergence_report(b, a).relative, 0.5, 1e-15);
  // Policies are matched by label: swapping labels is a change.
  SplitSchedule swapped(2, 3);
  for (int t = 1; t <= 3; ++t) {
    swapped.at(0, t) = 0.4;
    swapped.at(1, t) = 0.6;
  }
  EXPECT_NEAR(convergence_metric(swapped, a), 0.2, 1e-15);
  EXPECT_THROW(convergence_metric(SplitSchedule(3, 3), a), Error);
}

TEST(AverageExpectedTime, Examples) {
  Network net({1, 2}, {test::make_link("x", 1, 2)}, 1, 2);
  EquilibriumResult constant;
  TravelTimeDistribution flat(1.0, 4, 1, {1.0}, 7.0);
  constant.final_policies.push_back(dot_spi(net, flat, generate_events(flat)));
  EXPECT_DOUBLE_EQ(average_expected_time(constant), 7.0);

  EquilibriumResult two;
  TravelTimeDistribution ramp(1.0, 2, 1, {1.0});
  ramp.at(0, 0, 1) = 4.0;
  ramp.at(0, 0, 2) = 6.0;
  two.final_policies.push_back(dot_spi(net, ramp, generate_events(ramp)));
  EXPECT_DOUBLE_EQ(average_expected_time(two), 5.0);
}

TEST(MonteCarlo, ZeroCovHasNoSpreadAndSeedsReproduce) {
  const auto c = test::load_case("twolinks");
  auto cfg = config(LoaderKind::Chronological);
  cfg.outer_iterations = 3;
  const std::vector<int> at{100, 400};
  for (double s : monte_carlo_std(c.net, c.sc, 0.0, 3, 11, cfg, at)) EXPECT_EQ(s, 0.0);
  const auto a = monte_carlo_std(c.net, c.sc, 0.1, 3, 11, cfg, at);
  const auto b = monte_carlo_std(c.net, c.sc, 0.1, 3, 11, cfg, at);
  EXPECT_EQ(a, b);
  EXPECT_GT(a[1], 0.0);
  EXPECT_THROW(monte_carlo_std(c.net, c.sc, 0.1, 1, 11, cfg, at), Error);
}

TEST(ScenarioTools, PerturbAndRescale) {
  const auto c = test::load_case("diamond");
  std::mt19937_64 rng(1);
  const auto same = perturb_capacity(c.sc, 0.0, rng);
  for (std::size_t r = 0; r < c.sc.realizations.size(); ++r)
    EXPECT_EQ(same.realizations[r].capacity, c.sc.realizations[r].capacity);

  const auto l = *c.net.find_link("2-3");
  const auto scaled = with_capacity_means(c.net, c.sc, "2-3", {1.0, 0.5, 0.25});
  const std::vector<double> want{1.0, 0.5, 0.25};
  for (std::size_t r = 0; r < 3; ++r) {
    const auto& s = scaled.realizations[r].capacity[l];
    double mean = 0.0;
    for (double q : s) mean += q;
    EXPECT_NEAR(mean / static_cast<double>(s.size()), want[r], 1e-12);
  }
  EXPECT_THROW(with_capacity_means(c.net, c.sc, "9-9", want), Error);
  EXPECT_THROW(with_capacity_means(c.net, c.sc, "2-3", {1.0}), Error);

  const auto many = replicate_realizations(c.sc, 8, 3);
  ASSERT_EQ(many.realizations.size(), 8u);
  EXPECT_EQ(many.realizations[1].capacity, c.sc.realizations[1].capacity);
  EXPECT_NE(many.realizations[4].capacity, c.sc.realizations[1].capacity);
  double mass = 0.0;
  for (const auto& r : many.realizations) mass += r.probability;
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_TRUE(check_scenario(c.net, many).empty());
}

TEST(Trace, TsvLayout) {
  const auto c = test::load_case("twolinks");
  auto cfg = config(LoaderKind::Chronological, 2);
  cfg.outer_iterations = 2;
  cfg.early_stop = false;
  const auto res = msa_solve(c.net, c.sc, cfg);
  std::ostringstream os;
  write_trace_tsv(os, res);
  const auto s = os.str();
  EXPECT_EQ(s.rfind("l\tpolicy\tt\teta\tdelta\tms\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 2 * 2 * c.sc.steps);
}
