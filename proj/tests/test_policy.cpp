#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "support.hpp"

using namespace sdta;

namespace {

constexpr double kTol = 1e-9;

struct Table1 {
  TtdDocument doc = test::table1();
  EventTree tree = generate_events(doc.ttd);
  Policy opt = dot_spi(doc.network, doc.ttd, tree);

  std::size_t node(NodeId id) const { return doc.network.node_index(id); }
  std::size_t link(const std::string& id) const { return *doc.network.find_link(id); }
  std::size_t event(int t, std::vector<std::size_t> support) const { return *tree.find(Event{support, t}); }
};

/// Recomputes the Bellman right-hand side of one state from the stored values.
double bellman_rhs(const Network& net, const TravelTimeDistribution& ttd, const Policy& p, std::size_t j, int t,
                   std::size_t ev) {
  const auto& tree = p.tree();
  const auto& e = tree.level(t)[ev];
  double best = std::numeric_limits<double>::infinity();
  for (auto l : net.out_links(j)) {
    double acc = 0.0;
    for (auto r : e.support) {
      const double c = ttd(r, l, t);
      const int t2 = std::min(t + static_cast<int>(std::llround(c)), ttd.steps() + 1);
      acc += tree.probabilities()[r] / tree.mass(t, ev) * (c + p.expected_time(net.to(l), t2, tree.event_of(t2, r)));
    }
    best = std::min(best, acc);
  }
  return best;
}

TravelTimeDistribution monotone_ttd(std::mt19937& rng, const Network& net, int T, std::vector<double> rho) {
  TravelTimeDistribution ttd(1.0, T, net.link_count(), rho);
  std::uniform_int_distribution<int> start(1, 3), inc(1, 2);
  for (std::size_t r = 0; r < rho.size(); ++r)
    for (std::size_t l = 0; l < net.link_count(); ++l) {
      double v = start(rng);
      for (int t = 1; t <= T; ++t) {
        ttd.at(r, l, t) = v;
        v += inc(rng);
      }
    }
  return ttd;
}

}  // namespace

TEST(DotSpi, Table1NarrativeDecisions) {
  Table1 c;
  const auto b = static_cast<int>(c.link("b")), cl = static_cast<int>(c.link("c"));
  EXPECT_EQ(c.opt.next_link(c.node(2), 3, c.event(3, {1})), cl);
  EXPECT_EQ(c.opt.next_link(c.node(2), 2, c.event(2, {0})), b);
  EXPECT_EQ(c.opt.next_node(c.doc.network, c.node(2), 3, c.event(3, {1})), c.node(3));
}

TEST(DotSpi, Table1OriginExpectedTime) {
  Table1 c;
  EXPECT_DOUBLE_EQ(c.opt.expected_time(c.node(1), 1, 0), 5.5);
  EXPECT_DOUBLE_EQ(expected_origin_time(c.opt, 1), 5.5);
}

TEST(DotSpi, DestinationBoundary) {
  Table1 c;
  for (int t = 1; t <= 5; ++t)
    for (std::size_t ev = 0; ev < c.tree.level(t).size(); ++ev) {
      EXPECT_EQ(c.opt.expected_time(c.node(3), t, ev), 0.0);
      EXPECT_EQ(c.opt.next_node(c.doc.network, c.node(3), t, ev), c.node(3));
    }
}

TEST(HorizonShortest, Table1StepT) {
  Table1 c;
  const auto statics = horizon_shortest(c.doc.network, c.doc.ttd, c.tree);
  const auto ev = c.event(c.tree.terminal_level(), {0});
  EXPECT_EQ(statics[ev].time[c.node(2)], 2.0);
  EXPECT_EQ(statics[ev].next[c.node(2)], static_cast<int>(c.link("c")));
  EXPECT_EQ(statics[ev].time[c.node(3)], 0.0);
  EXPECT_EQ(c.opt.expected_time(c.node(2), 4, c.event(4, {0})), 2.0);
}

TEST(HorizonShortest, SingleLink) {
  Network net({1, 2}, {test::make_link("x", 1, 2)}, 1, 2);
  TravelTimeDistribution ttd(1.0, 3, 1, {1.0}, 7.0);
  const auto statics = horizon_shortest(net, ttd, generate_events(ttd));
  EXPECT_EQ(statics[0].time[0], 7.0);
}

TEST(HorizonShortest, UnreachableNodeFlaggedNotFatal) {
  // Node 3 has no route to the destination.
  Network net({1, 2, 3}, {test::make_link("x", 1, 2), test::make_link("y", 1, 3)}, 1, 2);
  TravelTimeDistribution ttd(1.0, 2, 2, {1.0}, 1.0);
  const auto tree = generate_events(ttd);
  const auto p = dot_spi(net, ttd, tree);
  EXPECT_FALSE(p.reachable(2, 1, 0));
  EXPECT_TRUE(p.reachable(0, 1, 0));
  EXPECT_EQ(p.next_link(2, 1, 0), -1);
}

TEST(LpPolicy, Table1InflationAtHorizon) {
  Table1 c;
  const auto sub = lp_policy(c.doc.network, c.doc.ttd, c.opt, {10.0});
  ASSERT_EQ(sub.size(), 1u);
  const auto ev = c.event(4, {0});
  EXPECT_EQ(sub[0].defining_ttd()(0, c.link("c"), 4), 20.0);
  EXPECT_EQ(sub[0].expected_time(c.node(2), 4, ev), 9.0);
  EXPECT_EQ(sub[0].next_link(c.node(2), 4, ev), static_cast<int>(c.link("b")));
  EXPECT_EQ(sub[0].kind(), PolicyKind::Suboptimal);
}

TEST(LpPolicy, NearUnitZReproducesOptimal) {
  Table1 c;
  const auto sub = lp_policy(c.doc.network, c.doc.ttd, c.opt, {1.0 + 1e-9});
  for (int t = 1; t <= 5; ++t)
    for (std::size_t ev = 0; ev < c.tree.level(t).size(); ++ev)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(sub[0].expected_time(j, t, ev), c.opt.expected_time(j, t, ev));
}

TEST(LpPolicy, RejectsZAtMostOne) {
  Table1 c;
  for (double z : {1.0, 0.5, -2.0}) {
    try {
      lp_policy(c.doc.network, c.doc.ttd, c.opt, {z});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidZFactor);
    }
  }
}

TEST(LpPolicyArbitrary, Table1IsNotMonotone) {
  Table1 c;
  EXPECT_FALSE(check_monotone(c.doc.ttd));
  try {
    lp_policy_arbitrary(c.doc.network, c.doc.ttd, c.opt, {2.0}, {1, 2, 3, 4});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MonotonicityRequired);
    EXPECT_EQ(e.error_class(), ErrorClass::Validation);
  }
}

TEST(CheckMonotone, Examples) {
  TravelTimeDistribution inc(1.0, 3, 1, {1.0});
  inc.at(0, 0, 1) = 1;
  inc.at(0, 0, 2) = 2;
  inc.at(0, 0, 3) = 4;
  EXPECT_TRUE(check_monotone(inc));
  EXPECT_FALSE(check_monotone(TravelTimeDistribution(1.0, 3, 1, {1.0}, 2.0)));
}

TEST(LpPolicyArbitrary, HorizonStepMatchesLpPolicy) {
  std::mt19937 rng(23);
  for (int iter = 0; iter < 30; ++iter) {
    auto inst = test::random_instance(rng);
    const auto ttd = monotone_ttd(rng, inst.net, inst.ttd.steps(), inst.ttd.probabilities());
    const auto tree = generate_events(ttd);
    const auto opt = dot_spi(inst.net, ttd, tree);
    const auto a = lp_policy(inst.net, ttd, opt, {1.5, 3.0});
    const auto b = lp_policy_arbitrary(inst.net, ttd, opt, {1.5, 3.0}, {ttd.steps()});
    for (std::size_t w = 0; w < 2; ++w) {
      EXPECT_EQ(a[w].defining_ttd(), b[w].defining_ttd());
      for (int t = 1; t <= ttd.steps() + 1; ++t)
        for (std::size_t ev = 0; ev < tree.level(t).size(); ++ev)
          for (std::size_t j = 0; j < inst.net.node_count(); ++j) {
            EXPECT_EQ(a[w].expected_time(j, t, ev), b[w].expected_time(j, t, ev));
            EXPECT_EQ(a[w].next_link(j, t, ev), b[w].next_link(j, t, ev));
          }
    }
  }
}

TEST(ExpectedOriginTime, Examples) {
  // Two singleton events at t=2 with origin times 4 and 6.
  Network net({1, 2}, {test::make_link("x", 1, 2)}, 1, 2);
  TravelTimeDistribution ttd(1.0, 2, 1, {0.5, 0.5});
  ttd.at(0, 0, 1) = 1;
  ttd.at(1, 0, 1) = 2;
  ttd.at(0, 0, 2) = 4;
  ttd.at(1, 0, 2) = 6;
  const auto p = dot_spi(net, ttd, generate_events(ttd));
  EXPECT_DOUBLE_EQ(expected_origin_time(p, 2), 5.0);
  EXPECT_DOUBLE_EQ(expected_origin_time(p, 1), p.expected_time(0, 1, 0));
}

TEST(DotSpi, ExhaustiveEnumerationOracle) {
  std::mt19937 rng(2024);
  for (int iter = 0; iter < 150; ++iter) {
    const auto inst = test::random_instance(rng);
    const auto p = dot_spi(inst.net, inst.ttd, generate_events(inst.ttd));
    EXPECT_NEAR(expected_origin_time(p, 1), test::enumerate_min_expected(inst.net, inst.ttd), kTol) << "instance " << iter;
  }
}

TEST(DotSpi, SingletonEventsMatchTimeDependentShortestPath) {
  std::mt19937 rng(99);
  int checked = 0;
  for (int iter = 0; iter < 200; ++iter) {
    auto inst = test::random_instance(rng, 4, 5, 3, 4);
    auto& ttd = inst.ttd;
    // Distinct step-1 values make every event past step 1 a singleton.
    for (std::size_t r = 0; r < ttd.realizations(); ++r) ttd.at(r, 0, 1) = 1.0 + static_cast<double>(r);
    const auto tree = generate_events(ttd);
    const auto p = dot_spi(inst.net, ttd, tree);
    for (std::size_t r = 0; r < ttd.realizations(); ++r) {
      const auto label = test::tdsp(inst.net, ttd, r);
      const int first = ttd.realizations() == 1 ? 1 : 2;
      for (int t = first; t <= ttd.steps(); ++t) {
        ASSERT_EQ(tree.level(t)[tree.event_of(t, r)].support.size(), 1u);
        for (std::size_t j = 0; j < inst.net.node_count(); ++j) {
          EXPECT_NEAR(p.expected_time(j, t, tree.event_of(t, r)), label[static_cast<std::size_t>(t)][j], kTol);
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 500);
}

TEST(DotSpi, BellmanResidualIsZero) {
  std::mt19937 rng(7);
  for (int iter = 0; iter < 100; ++iter) {
    const auto inst = test::random_instance(rng);
    const auto p = dot_spi(inst.net, inst.ttd, generate_events(inst.ttd));
    for (int t = 1; t <= inst.ttd.steps(); ++t)
      for (std::size_t ev = 0; ev < p.tree().level(t).size(); ++ev)
        for (std::size_t j = 0; j < inst.net.node_count(); ++j) {
          if (j == inst.net.destination()) continue;
          EXPECT_NEAR(p.expected_time(j, t, ev), bellman_rhs(inst.net, inst.ttd, p, j, t, ev), kTol);
          const int l = p.next_link(j, t, ev);
          ASSERT_GE(l, 0);
          EXPECT_EQ(inst.net.from(static_cast<std::size_t>(l)), j);
          EXPECT_GE(p.expected_time(j, t, ev), 0.0);
        }
  }
}

TEST(DotSpi, ScaleInvariance) {
  std::mt19937 rng(31);
  for (int iter = 0; iter < 60; ++iter) {
    const auto inst = test::random_instance(rng);
    const double k = 2.5;
    TravelTimeDistribution scaled(inst.ttd.dt() * k, inst.ttd.steps(), inst.ttd.links(), inst.ttd.probabilities());
    for (std::size_t i = 0; i < scaled.raw().size(); ++i) scaled.raw()[i] = k * inst.ttd.raw()[i];
    const auto a = dot_spi(inst.net, inst.ttd, generate_events(inst.ttd));
    const auto b = dot_spi(inst.net, scaled, generate_events(scaled));
    for (int t = 1; t <= inst.ttd.steps() + 1; ++t)
      for (std::size_t ev = 0; ev < a.tree().level(t).size(); ++ev)
        for (std::size_t j = 0; j < inst.net.node_count(); ++j) {
          EXPECT_NEAR(b.expected_time(j, t, ev), k * a.expected_time(j, t, ev), kTol);
          EXPECT_EQ(b.next_link(j, t, ev), a.next_link(j, t, ev));
        }
  }
}

TEST(LpPolicy, StatewiseDominance) {
  std::mt19937 rng(41);
  for (int iter = 0; iter < 120; ++iter) {
    const auto inst = test::random_instance(rng);
    const auto tree = generate_events(inst.ttd);
    const auto opt = dot_spi(inst.net, inst.ttd, tree);
    for (const auto& sub : lp_policy(inst.net, inst.ttd, opt, {1.5, 2.0, 4.0})) {
      const auto on_original = evaluate_policy(inst.net, inst.ttd, sub);
      for (int t = 1; t <= inst.ttd.steps() + 1; ++t)
        for (std::size_t ev = 0; ev < tree.level(t).size(); ++ev)
          for (std::size_t j = 0; j < inst.net.node_count(); ++j) {
            EXPECT_LE(opt.expected_time(j, t, ev), sub.expected_time(j, t, ev) + kTol);
            EXPECT_LE(opt.expected_time(j, t, ev), on_original.expected_time(j, t, ev) + kTol);
          }
    }
  }
}

TEST(LpPolicyArbitrary, DominanceUnderMonotoneDistributions) {
  std::mt19937 rng(43);
  for (int iter = 0; iter < 100; ++iter) {
    const auto inst = test::random_instance(rng);
    const auto ttd = monotone_ttd(rng, inst.net, inst.ttd.steps(), inst.ttd.probabilities());
    ASSERT_TRUE(check_monotone(ttd));
    const auto tree = generate_events(ttd);
    const auto opt = dot_spi(inst.net, ttd, tree);
    std::set<int> all;
    for (int t = 1; t <= ttd.steps(); ++t) all.insert(t);
    for (const auto& sub : lp_policy_arbitrary(inst.net, ttd, opt, {1.5, 3.0}, all))
      for (int t = 1; t <= ttd.steps() + 1; ++t)
        for (std::size_t ev = 0; ev < tree.level(t).size(); ++ev)
          for (std::size_t j = 0; j < inst.net.node_count(); ++j)
            EXPECT_LE(opt.expected_time(j, t, ev), sub.expected_time(j, t, ev) + kTol);
  }
}

TEST(LpPolicy, ParallelGenerationMatchesSequential) {
  Table1 c;
  const auto a = lp_policy(c.doc.network, c.doc.ttd, c.opt, {1.5, 2.0, 10.0}, 1);
  const auto b = lp_policy(c.doc.network, c.doc.ttd, c.opt, {1.5, 2.0, 10.0}, 3);
  for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(a[w].defining_ttd(), b[w].defining_ttd());
}

TEST(Policy, DefaultZ) {
  EXPECT_EQ(default_z(3), (std::vector<double>{1.5, 2.0}));
  EXPECT_TRUE(default_z(1).empty());
}

TEST(Policy, TsvDumpHasNarrativeRows) {
  Table1 c;
  std::ostringstream os;
  write_policy_tsv(os, c.doc.network, c.opt);
  const auto s = os.str();
  EXPECT_NE(s.find("2\t3\t2\t3\tc\t4\n"), std::string::npos);
  EXPECT_NE(s.find("2\t2\t1\t3\tb\t4\n"), std::string::npos);
  EXPECT_NE(s.find("1\t1\t1,2\t2\ta\t5.5\n"), std::string::npos);
}
