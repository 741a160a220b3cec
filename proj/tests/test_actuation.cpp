#include <gtest/gtest.h>

#include <random>

#include "resil/actuation.hpp"

using namespace resil;

namespace {

// Ring a-b-c-d with one urllc flow a->c on both halves.
struct Fixture {
  NetworkState net;
  Actuator act;
  ControllerEnsemble ens;

  Fixture() {
    for (auto id : {"a", "b", "c", "d"}) net.topology.add_node({id});
    net.topology.add_link({"ab", "a", "b", 1e6, 0.0});
    net.topology.add_link({"bc", "b", "c", 1e6, 0.0});
    net.topology.add_link({"cd", "c", "d", 1e6, 0.0});
    net.topology.add_link({"da", "d", "a", 1e6, 0.0});
    net.flows = {{"u", "a", "c", TrafficClass::urllc, 1e5, 100.0}};
    NetworkPolicy p0;
    p0.id = 1;
    p0.routes["u"] = {{"a", "b", "c"}, {"a", "d", "c"}};
    auto sp = std::make_shared<const NetworkPolicy>(p0);
    apply_policy(net, sp, 0.0);
    LogEntry e;
    e.policy = sp;
    e.tag = HealthTag::good;
    act.log.append(e);
    act.limits = {0.9, 2, 0.5};
    act.limiter = {3, 10.0, {}};
    act.slo = {5, 100.0, 0.05, 3};
    ens.members = {{"c1", ControllerKind::shortest_path, 1.0, 0}, {"c2", ControllerKind::disjoint_path, 0.5, 0}};
  }

  NetworkPolicy variant(double urllc_slice) const {
    NetworkPolicy p = net.active;
    p.slice_allocation[TrafficClass::urllc] = urllc_slice;
    return p;
  }

  MitigationResult offer(const NetworkPolicy& p, double now, std::vector<Action>& rec) {
    ProposalRound r;
    r.proposals.push_back({"c1", p, {}});
    return mitigate_round(net, ens, act, r, now, rec);
  }
};

}  // namespace

TEST(Shield, AcceptsGoodPolicy) {
  Fixture f;
  EXPECT_TRUE(shield_check(f.variant(0.1), f.net.active, f.net.topology, f.net.flows, f.act.limits).accepted());
}

TEST(Shield, Utilization) {
  Fixture f;
  f.net.flows[0].offered_rate = 1.9e6;  // 0.95 per path
  auto v = shield_check(f.net.active, f.net.active, f.net.topology, f.net.flows, f.act.limits);
  EXPECT_EQ(v.rule, ShieldRule::utilization);
  // a path over a down link fails too
  Fixture g;
  g.net.topology.set_link_up(0, false);
  EXPECT_EQ(shield_check(g.net.active, g.net.active, g.net.topology, g.net.flows, g.act.limits).rule,
            ShieldRule::utilization);
}

TEST(Shield, PathDiversityCappedByTopology) {
  Fixture f;
  NetworkPolicy single = f.net.active;
  single.routes["u"] = {{"a", "b", "c"}};
  EXPECT_EQ(shield_check(single, f.net.active, f.net.topology, f.net.flows, f.act.limits).rule,
            ShieldRule::path_diversity);
  // with cd down only one disjoint path exists, so one suffices
  f.net.topology.set_link_up(2, false);
  EXPECT_TRUE(shield_check(single, f.net.active, f.net.topology, f.net.flows, f.act.limits).accepted());
}

TEST(Shield, Delta) {
  Fixture f;
  // path order is not a change; moving the whole slice budget is half the delta
  auto p = f.variant(1.0);
  p.routes["u"] = {{"a", "d", "c"}, {"a", "b", "c"}};
  EXPECT_DOUBLE_EQ(policy_delta(p, f.net.active), 0.5);
  EXPECT_TRUE(shield_check(p, f.net.active, f.net.topology, f.net.flows, f.act.limits).accepted());
  f.act.limits.delta_max = 0.4;
  EXPECT_EQ(shield_check(p, f.net.active, f.net.topology, f.net.flows, f.act.limits).rule, ShieldRule::delta);
}

TEST(Rate, SlidingWindow) {
  RateLimiter l{2, 10.0, {}};
  EXPECT_EQ(rate_limit_check(l, 0.0), RateDecision::Allow);
  l.record(0.0);
  l.record(5.0);
  EXPECT_EQ(rate_limit_check(l, 9.9), RateDecision::Throttle);
  EXPECT_EQ(rate_limit_check(l, 10.0), RateDecision::Allow);  // 0.0 has left (now-10, now]
  // property: record only on Allow and no window ever holds more than lambda
  std::mt19937_64 gen(1);
  RateLimiter r{3, 5.0, {}};
  std::vector<double> kept;
  double t = 0.0;
  for (int i = 0; i < 5000; ++i) {
    t += std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    if (rate_limit_check(r, t) == RateDecision::Allow) {
      r.record(t);
      kept.push_back(t);
    }
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    int n = 0;
    for (std::size_t j = i; j < kept.size() && kept[j] < kept[i] + 5.0; ++j) ++n;
    EXPECT_LE(n, 3);
  }
}

TEST(Log, GoodTracking) {
  PolicyLog log;
  EXPECT_FALSE(log.has_good());
  EXPECT_THROW(log.s_good(), StateError);
  log.append({std::make_shared<const NetworkPolicy>(), 0.0, HealthTag::suspect});
  log.append({std::make_shared<const NetworkPolicy>(), 1.0, HealthTag::suspect});
  log.tag_good(1);
  EXPECT_EQ(log.good_index(), 1u);
  log.tag_good(0);  // an older entry never displaces a newer good one
  EXPECT_EQ(log.good_index(), 1u);
  EXPECT_THROW(log.tag_good(9), RangeError);
}

TEST(Mitigate, EnactThenProbationTagsGood) {
  Fixture f;
  std::vector<Action> rec;
  auto r = f.offer(f.variant(0.1), 1.0, rec);
  EXPECT_EQ(r.outcome, Outcome::Enacted);
  EXPECT_EQ(f.net.active.id, 2u);
  EXPECT_EQ(f.net.active.slice(TrafficClass::urllc), 0.1);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(monitor_probation(f.act, f.net, true, 1.1 + i, rec));
  monitor_probation(f.act, f.net, true, 6.0, rec);
  EXPECT_EQ(f.act.log.s_good().policy->id, 2u);
  EXPECT_EQ(rec.back().kind, ActionKind::tag_good);
}

TEST(Mitigate, ReaffirmIdenticalPolicy) {
  Fixture f;
  std::vector<Action> rec;
  auto r = f.offer(f.net.active, 1.0, rec);
  EXPECT_EQ(r.outcome, Outcome::Reaffirmed);
  EXPECT_EQ(f.net.revision, 1u);
}

TEST(Mitigate, RejectRollsBackExactly) {
  Fixture f;
  std::vector<Action> rec;
  f.offer(f.variant(0.1), 1.0, rec);
  const std::string good = serialize_policy(*f.act.log.s_good().policy);
  NetworkPolicy bad = f.net.active;
  bad.routes["u"] = {{"a", "b", "c"}};
  auto r = f.offer(bad, 2.0, rec);
  EXPECT_EQ(r.outcome, Outcome::RolledBack);
  EXPECT_EQ(r.rejected, ShieldRule::path_diversity);
  EXPECT_EQ(serialize_policy(f.net.active), good);
  EXPECT_EQ(f.net.enacted.back().policy, f.act.log.s_good().policy);
  EXPECT_FALSE(f.act.probation);
}

TEST(Mitigate, ThrottleAfterLambda) {
  Fixture f;
  std::vector<Action> rec;
  for (int i = 0; i < 3; ++i) EXPECT_EQ(f.offer(f.variant(0.01 * (i + 1)), 1.0 + i, rec).outcome, Outcome::Enacted);
  auto r = f.offer(f.variant(0.2), 4.0, rec);
  EXPECT_TRUE(r.throttled);
  EXPECT_EQ(r.outcome, Outcome::RolledBack);
  // the rollback itself does not count against the limiter
  EXPECT_EQ(f.act.limiter.accepted.size(), 3u);
  EXPECT_EQ(f.offer(f.variant(0.2), 12.0, rec).outcome, Outcome::Enacted);
}

TEST(Mitigate, SloViolationRollsBack) {
  Fixture f;
  std::vector<Action> rec;
  f.offer(f.variant(0.1), 1.0, rec);
  EXPECT_FALSE(monitor_probation(f.act, f.net, false, 1.1, rec));
  EXPECT_FALSE(monitor_probation(f.act, f.net, false, 1.2, rec));
  auto r = monitor_probation(f.act, f.net, false, 1.3, rec);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->outcome, Outcome::RolledBack);
  EXPECT_EQ(f.net.active.id, 1u);
}

TEST(Mitigate, AllAbstainRollsBack) {
  Fixture f;
  std::vector<Action> rec;
  ProposalRound r;
  r.abstained = {"c1", "c2"};
  auto m = mitigate_round(f.net, f.ens, f.act, r, 1.0, rec);
  EXPECT_TRUE(m.abstained);
  EXPECT_EQ(m.outcome, Outcome::RolledBack);
}

TEST(Mitigate, RollbackOfInfeasibleTargetIsFlagged) {
  Fixture f;
  f.net.topology.set_link_up(0, false);
  auto& e = rollback(f.act.log, f.net, 1.0, f.act.limits);
  EXPECT_TRUE(e.infeasible);
  EXPECT_EQ(f.net.enacted.back().kind, EnactKind::rollback);
}
