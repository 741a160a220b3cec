#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "resil/decision.hpp"

using namespace resil;

namespace {

std::vector<CleanSample> one(double v) { return {{0, v, false}}; }

AnomalyDetector trained(DetectorKind kind, double level, double noise, std::uint64_t seed) {
  AnomalyDetector d({"d", kind, {}, 0.9, 0.1}, {0});
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(level, noise);
  for (int i = 0; i < 500; ++i) d.observe(one(nd(gen)));
  d.finish_warmup();
  return d;
}

// Square of four nodes with a diagonal-free ring: two disjoint a-c routes.
Topology square() {
  Topology t;
  for (auto id : {"a", "b", "c", "d"}) t.add_node({id});
  t.add_link({"ab", "a", "b", 1e6, 0.0});
  t.add_link({"bc", "b", "c", 1e6, 0.0});
  t.add_link({"cd", "c", "d", 1e6, 0.0});
  t.add_link({"da", "d", "a", 1e6, 0.0});
  return t;
}

}  // namespace

TEST(Squash, Shape) {
  EXPECT_NEAR(squash(4.5), 0.5, 1e-15);
  EXPECT_GT(squash(6.0), 0.9);
  EXPECT_LT(squash(0.0), 0.01);
  EXPECT_EQ(squash(NAN), 0.0);
  for (double z = -5; z < 10; z += 0.5) EXPECT_LE(squash(z), squash(z + 0.5));
}

TEST(Detector, WarmupRequired) {
  AnomalyDetector d({"d", DetectorKind::ewma_zscore, {}, 0.9, 0.1}, {0});
  EXPECT_THROW(d.score(one(0.5)), WarmupError);
}

TEST(Detector, QuietOnBaselineAlertsOnShift) {
  for (auto kind : {DetectorKind::ewma_zscore, DetectorKind::rate_change}) {
    auto d = trained(kind, 0.3, 0.02, 1);
    std::mt19937_64 gen(2);
    std::normal_distribution<double> nd(0.3, 0.02);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) worst = std::max(worst, d.score(one(nd(gen))));
    EXPECT_LT(worst, 0.9);
    double peak = 0.0;
    for (int i = 0; i < 50; ++i) peak = std::max(peak, d.score(one(0.9)));
    EXPECT_GT(peak, 0.9);
  }
}

TEST(Detector, EwmaIgnoresDrops) {
  auto d = trained(DetectorKind::ewma_zscore, 0.5, 0.02, 3);
  double peak = 0.0;
  for (int i = 0; i < 100; ++i) peak = std::max(peak, d.score(one(0.0)));
  EXPECT_LT(peak, 0.01);
}

TEST(Detector, PoisoningBlindsUntilRetrain) {
  auto d = trained(DetectorKind::ewma_zscore, 0.3, 0.02, 4);
  d.poison(40.0);
  double peak = 0.0;
  for (int i = 0; i < 50; ++i) peak = std::max(peak, d.score(one(0.9)));
  EXPECT_LT(peak, 0.9);
  // clean buffer near the true baseline contradicts the drifted mean
  TimeSeriesBuffer buf(100);
  buf.add_stream("s", 0.0, 1.0);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.3, 0.02);
  for (int i = 0; i < 100; ++i) buf.push(0, {nd(gen), false});
  d.retrain(buf, false);
  EXPECT_EQ(d.poison_drift(), 0.0);
}

TEST(Detector, FlaggedSamplesSkippedInWarmup) {
  AnomalyDetector d({"d", DetectorKind::ewma_zscore, {}, 0.9, 0.1}, {0});
  for (int i = 0; i < 100; ++i) d.observe(one(0.2));
  d.observe(std::vector<CleanSample>{{0, 50.0, true}});
  d.finish_warmup();
  EXPECT_EQ(d.stream_state(0).mean, 0.2);
}

TEST(Detect, FusesWithMaxAndNamesStreams) {
  std::vector<AnomalyDetector> ds;
  ds.emplace_back(DetectorSpec{"e", DetectorKind::ewma_zscore, {}, 0.9, 0.5}, std::vector<std::size_t>{0, 1});
  std::vector<CleanSample> base{{0, 0.2, false}, {1, 0.2, false}};
  for (int i = 0; i < 50; ++i) ds[0].observe(base);
  ds[0].finish_warmup();
  auto quiet = detect(base, ds);
  EXPECT_EQ(quiet.status, Status::Normal);
  std::vector<CleanSample> hit{{0, 0.2, false}, {1, 0.9, false}};
  Detection d;
  for (int i = 0; i < 5; ++i) d = detect(hit, ds);
  EXPECT_EQ(d.status, Status::Alert);
  EXPECT_EQ(d.alerted_streams, (std::set<std::size_t>{1}));
  EXPECT_EQ(d.score, d.detector_scores[0]);
}

TEST(Mitigate, ThresholdRule) {
  ReliabilityState s;
  s.model = {0.0, 1e-5, 2e-5};
  ThresholdParams p{0.9999, 0.85, -0.1, 0.0005};
  EXPECT_TRUE(should_mitigate(Status::Alert, s, p));
  EXPECT_FALSE(should_mitigate(Status::Normal, s, p));
  // R(t) drifts under the threshold as time since the checkpoint grows
  // threshold 0.9999 - 0.1 * 0.15 - 0.0005 = 0.9844; exp(-3e-5 * 1000) = 0.9704
  s.advance(100.0);
  EXPECT_FALSE(should_mitigate(Status::Normal, s, p));
  s.advance(900.0);
  EXPECT_TRUE(should_mitigate(Status::Normal, s, p));
  s.checkpoint();
  EXPECT_FALSE(should_mitigate(Status::Normal, s, p));
  EXPECT_THROW(s.advance(-1), DomainError);
}

TEST(Mitigate, WindowedResilience) {
  ReliabilityState s;
  s.window_ticks = 4;
  EXPECT_EQ(s.windowed_resilience(), 1.0);
  for (double q : {1.0, 1.0, 0.0, 0.0, 1.0}) s.record_q(q);
  EXPECT_EQ(s.q_window.size(), 4u);
  // samples 1, 0, 0, 1 -> area 1 over 0.3 s of width... trapezoid: 0.05+0+0.05
  EXPECT_NEAR(s.windowed_resilience(), 0.1 / 0.3, 1e-12);
}

TEST(Vote, WorkedExample) {
  ControllerEnsemble ens;
  ens.members = {{"a", ControllerKind::shortest_path, 0.5, 0},
                 {"b", ControllerKind::shortest_path, 0.3, 0},
                 {"c", ControllerKind::shortest_path, 0.4, 0}};
  NetworkPolicy p1, p2;
  p1.slice_allocation[TrafficClass::urllc] = 0.1;
  p2.slice_allocation[TrafficClass::urllc] = 0.2;
  std::vector<Proposal> props{{"a", p1, {}}, {"b", p2, {}}, {"c", p2, {}}};
  auto v = vote(props, ens);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->winner, 1u);
  EXPECT_NEAR(v->mass, 0.7, 1e-15);
  EXPECT_EQ(v->members, (std::vector<std::string>{"b", "c"}));
  EXPECT_FALSE(vote(std::vector<Proposal>{}, ens));
}

TEST(Vote, TieGoesToLowestId) {
  ControllerEnsemble ens;
  ens.members = {{"c1", ControllerKind::shortest_path, 0.5, 0}, {"c2", ControllerKind::shortest_path, 0.5, 0}};
  NetworkPolicy p1, p2;
  p2.slice_allocation[TrafficClass::video] = 0.3;
  std::vector<Proposal> props{{"c2", p2, {}}, {"c1", p1, {}}};
  EXPECT_EQ(vote(props, ens)->winner, 1u);
}

TEST(Vote, MatchesExhaustiveOracle) {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 7)(gen);
    const int k = std::uniform_int_distribution<int>(1, 4)(gen);
    ControllerEnsemble ens;
    std::vector<Proposal> props;
    std::vector<oracles::Ballot> ballots;
    for (int i = 0; i < n; ++i) {
      const std::string id = "c" + std::to_string(i);
      const double trust = std::uniform_int_distribution<int>(1, 8)(gen) / 8.0;
      const int choice = std::uniform_int_distribution<int>(0, k - 1)(gen);
      ens.members.push_back({id, ControllerKind::shortest_path, trust, 0});
      NetworkPolicy p;
      p.routes["f"] = {{"x", std::to_string(choice), "y"}};
      props.push_back({id, p, {}});
      ballots.push_back({id, std::to_string(choice), trust});
    }
    auto v = vote(props, ens);
    auto o = oracles::vote_exhaustive(ballots);
    EXPECT_EQ(props[v->winner].policy.routes.at("f")[0][1], o.key);
    EXPECT_EQ(v->mass, o.mass);
  }
}

TEST(Trust, UpdateRule) {
  ControllerEnsemble ens;
  ens.beta = 0.5;
  ens.gamma = 0.05;
  ens.trust_floor = 0.1;
  ens.members = {{"a", ControllerKind::shortest_path, 0.98, 0}, {"b", ControllerKind::shortest_path, 0.15, 0}};
  NetworkPolicy p1, p2;
  p2.slice_allocation[TrafficClass::urllc] = 0.5;
  std::vector<Proposal> props{{"a", p1, {}}, {"b", p2, {}}};
  auto v = vote(props, ens);
  update_trust(ens, props, *v);
  EXPECT_EQ(ens.members[0].trust, 1.0);
  EXPECT_EQ(ens.members[1].trust, 0.1);
  EXPECT_EQ(ens.members[1].deviations, 1u);
}

TEST(Propose, RepairsBrokenUrllcWithDisjointPaths) {
  auto t = square();
  std::vector<Flow> flows{{"u", "a", "c", TrafficClass::urllc, 1e3, 100.0}};
  NetworkPolicy active;
  active.routes["u"] = {{"a", "b", "c"}};
  t.set_link_up(*t.link_index("bc"), false);
  ProposalContext ctx;
  ctx.topology = &t;
  ctx.flows = flows;
  ctx.active = &active;
  ctx.good = &active;
  ctx.min_disjoint_paths = 1;
  auto p = propose_one({"c1", ControllerKind::shortest_path, 1.0, 0}, ctx);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->routes.at("u"), (std::vector<Path>{{"a", "d", "c"}}));
  // fallback returns the good policy untouched
  auto fb = propose_one({"c4", ControllerKind::fallback, 1.0, 0}, ctx);
  EXPECT_TRUE(equivalent(*fb, active));
  // nothing reachable: abstain
  t.set_link_up(*t.link_index("cd"), false);
  EXPECT_FALSE(propose_one({"c1", ControllerKind::shortest_path, 1.0, 0}, ctx));
}

TEST(Propose, ProtectionSlicesOnCongestion) {
  auto t = square();
  std::vector<Flow> flows{{"u", "a", "c", TrafficClass::urllc, 1e3, 100.0}};
  NetworkPolicy active;
  active.routes["u"] = {{"a", "b", "c"}, {"a", "d", "c"}};
  ProposalContext ctx;
  ctx.topology = &t;
  ctx.flows = flows;
  ctx.active = &active;
  ctx.good = &active;
  ctx.protect = true;
  ctx.protect_slices = {{TrafficClass::urllc, 0.2}};
  auto p = propose_one({"c3", ControllerKind::slice_protect, 1.0, 0}, ctx);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->slice(TrafficClass::urllc), 0.2);
  EXPECT_EQ(p->routes, active.routes);
  ctx.active = nullptr;
  EXPECT_THROW(propose_one({"c3", ControllerKind::slice_protect, 1.0, 0}, ctx), StateError);
}
