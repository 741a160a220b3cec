#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resil/decision.hpp"
#include "resil/error.hpp"
#include "resil/network.hpp"
#include "resil/scenario.hpp"

namespace resil {

enum class ShieldRule { none, utilization, path_diversity, delta };

inline std::string_view to_string(ShieldRule r) {
  switch (r) {
    case ShieldRule::none: return "none";
    case ShieldRule::utilization: return "utilization";
    case ShieldRule::path_diversity: return "path_diversity";
    case ShieldRule::delta: return "delta";
  }
  return "?";
}

struct ShieldVerdict {
  ShieldRule rule = ShieldRule::none;
  std::string detail;
  bool accepted() const { return rule == ShieldRule::none; }
};

// Edge-disjoint paths a flow's path set provides over usable links.
inline std::size_t provided_disjoint_paths(const Topology& t, const Flow& f, const std::vector<Path>& paths,
                                           std::size_t limit) {
  auto s = t.node_index(f.source);
  auto d = t.node_index(f.destination);
  if (!s || !d) return 0;
  PathFilter filter;
  filter.allowed_links.assign(t.link_count(), 0);
  for (const auto& p : paths) {
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      auto li = t.hop_link(p[i], p[i + 1]);
      if (li && t.link_usable(*li)) filter.allowed_links[*li] = 1;
    }
  }
  return edge_disjoint_paths_idx(t, *s, *d, limit, filter).size();
}

// Rules in fixed order: utilization, path diversity, delta. The required
// path count of a urllc flow is capped by what the current topology can
// offer between its endpoints at all.
inline ShieldVerdict shield_check(const NetworkPolicy& proposed, const NetworkPolicy& active, const Topology& t,
                                  std::span<const Flow> flows, const ShieldLimits& limits) {
  std::map<std::string, double> util;
  try {
    util = link_utilization(t, proposed, flows);
  } catch (const RouteError& e) {
    return {ShieldRule::utilization, e.what()};
  } catch (const DomainError& e) {
    return {ShieldRule::utilization, e.what()};
  }
  for (const auto& [link, u] : util)
    if (u > limits.u_max) return {ShieldRule::utilization, "link " + link + " at " + std::to_string(u)};

  const auto need = static_cast<std::size_t>(limits.min_disjoint_paths);
  for (const auto& f : flows) {
    if (f.traffic_class != TrafficClass::urllc) continue;
    auto s = t.node_index(f.source);
    auto d = t.node_index(f.destination);
    if (!s || !d) continue;
    const std::size_t available = edge_disjoint_paths_idx(t, *s, *d, need).size();
    const std::size_t required = std::min(need, available);
    auto it = proposed.routes.find(f.id);
    const std::size_t have = it == proposed.routes.end() ? 0 : provided_disjoint_paths(t, f, it->second, need);
    if (have < required)
      return {ShieldRule::path_diversity,
              "flow " + f.id + " has " + std::to_string(have) + " of " + std::to_string(required) + " disjoint paths"};
  }

  double delta = 0.0;
  try {
    delta = policy_delta(proposed, active);
  } catch (const DomainError& e) {
    return {ShieldRule::delta, e.what()};
  }
  if (delta > limits.delta_max) return {ShieldRule::delta, "delta " + std::to_string(delta)};
  return {};
}

enum class HealthTag { good, suspect };

struct LogEntry {
  std::shared_ptr<const NetworkPolicy> policy;
  double enacted_at = 0.0;
  HealthTag tag = HealthTag::suspect;
  EnactKind kind = EnactKind::fresh;
  bool infeasible = false;  // rollback target no longer passes the shields
  // Snapshot for post-run revalidation of fresh enactments.
  std::shared_ptr<const NetworkPolicy> previous;
  std::vector<char> link_up;
  std::vector<char> node_up;
};

class PolicyLog {
 public:
  std::size_t append(LogEntry e) {
    entries_.push_back(std::move(e));
    if (entries_.back().tag == HealthTag::good) good_ = entries_.size() - 1;
    return entries_.size() - 1;
  }

  void tag_good(std::size_t i) {
    if (i >= entries_.size()) throw RangeError("log index out of range");
    entries_[i].tag = HealthTag::good;
    if (!good_ || i > *good_) good_ = i;
  }

  bool has_good() const { return good_.has_value(); }
  std::size_t good_index() const {
    if (!good_) throw StateError("policy log holds no good entry");
    return *good_;
  }
  const LogEntry& s_good() const { return entries_[good_index()]; }
  const std::vector<LogEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<LogEntry> entries_;
  std::optional<std::size_t> good_;
};

inline void snapshot_topology(const Topology& t, LogEntry& e) {
  e.link_up.resize(t.link_count());
  e.node_up.resize(t.node_count());
  for (std::size_t i = 0; i < t.link_count(); ++i) e.link_up[i] = t.link(i).up;
  for (std::size_t i = 0; i < t.node_count(); ++i) e.node_up[i] = t.node(i).up;
}

// Re-enacts S_good verbatim, bypassing shields and the rate limiter, and
// appends a rollback record that becomes the new S_good entry.
inline const LogEntry& rollback(PolicyLog& log, NetworkState& state, double now, const ShieldLimits& limits) {
  const auto target = log.s_good().policy;
  LogEntry e;
  e.policy = target;
  e.enacted_at = now;
  e.tag = HealthTag::good;
  e.kind = EnactKind::rollback;
  e.infeasible = !shield_check(*target, *target, state.topology, state.flows, limits).accepted();
  apply_policy(state, target, now, EnactKind::rollback);
  return log.entries()[log.append(std::move(e))];
}

enum class RateDecision { Allow, Throttle };

struct RateLimiter {
  int lambda_max = 5;
  double window = 60.0;
  std::deque<double> accepted;

  void record(double now) {
    accepted.push_back(now);
    // Entries this old can no longer fall inside any window ending at or after now.
    while (!accepted.empty() && accepted.front() <= now - 2.0 * window) accepted.pop_front();
  }
};

// Allow iff fewer than lambda_max acceptances fall in (now - window, now].
inline RateDecision rate_limit_check(const RateLimiter& l, double now) {
  int n = 0;
  for (double t : l.accepted)
    if (t > now - l.window && t <= now) ++n;
  return n < l.lambda_max ? RateDecision::Allow : RateDecision::Throttle;
}

enum class ActionKind {
  alert,
  proposal,
  abstain,
  vote,
  reaffirm,
  throttle,
  reject,
  enact,
  rollback,
  tag_good,
  slo_violation,
  reroute,
};

inline std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::alert: return "alert";
    case ActionKind::proposal: return "proposal";
    case ActionKind::abstain: return "abstain";
    case ActionKind::vote: return "vote";
    case ActionKind::reaffirm: return "reaffirm";
    case ActionKind::throttle: return "throttle";
    case ActionKind::reject: return "reject";
    case ActionKind::enact: return "enact";
    case ActionKind::rollback: return "rollback";
    case ActionKind::tag_good: return "tag_good";
    case ActionKind::slo_violation: return "slo_violation";
    case ActionKind::reroute: return "reroute";
  }
  return "?";
}

struct Action {
  double t = 0.0;
  ActionKind kind = ActionKind::alert;
  std::uint64_t policy_id = 0;
  std::string detail;
};

enum class Outcome { Enacted, Reaffirmed, RolledBack };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Enacted: return "enacted";
    case Outcome::Reaffirmed: return "reaffirmed";
    case Outcome::RolledBack: return "rolled_back";
  }
  return "?";
}

// Actuation state of one run.
struct Actuator {
  PolicyLog log;
  RateLimiter limiter;
  ShieldLimits limits;
  ActuationSpec slo;
  std::optional<std::size_t> probation;  // log entry under probation
  int probation_elapsed = 0;
  int slo_bad_run = 0;
  std::string active_canonical;
  std::uint64_t active_revision = UINT64_MAX;

  const std::string& canonical_active(const NetworkState& s) {
    if (active_revision != s.revision) {
      active_canonical = canonical_form(s.active);
      active_revision = s.revision;
    }
    return active_canonical;
  }
};

struct MitigationResult {
  Outcome outcome = Outcome::Reaffirmed;
  ShieldRule rejected = ShieldRule::none;
  bool throttled = false;
  bool abstained = false;
  std::uint64_t policy_id = 0;
};

inline MitigationResult do_rollback(Actuator& act, NetworkState& net, double now, std::vector<Action>& record,
                                    const std::string& why) {
  const LogEntry& e = rollback(act.log, net, now, act.limits);
  act.probation.reset();
  act.slo_bad_run = 0;
  record.push_back({now, ActionKind::rollback, e.policy->id, why + (e.infeasible ? " (target infeasible)" : "")});
  MitigationResult r;
  r.outcome = Outcome::RolledBack;
  r.policy_id = e.policy->id;
  return r;
}

// vote -> (reaffirm | rate limit -> shields -> enact) for a round already
// proposed; every failure path ends in a rollback to S_good.
inline MitigationResult mitigate_round(NetworkState& net, ControllerEnsemble& ens, Actuator& act,
                                       const ProposalRound& round, double now, std::vector<Action>& record) {
  for (const auto& a : round.abstained) record.push_back({now, ActionKind::abstain, 0, a});
  if (round.proposals.empty()) {
    auto r = do_rollback(act, net, now, record, "all controllers abstained");
    r.abstained = true;
    return r;
  }
  auto v = vote(round.proposals, ens);
  update_trust(ens, round.proposals, *v);
  const Proposal& win = round.proposals[v->winner];
  {
    std::string members;
    for (const auto& m : v->members) members += (members.empty() ? "" : ",") + m;
    record.push_back({now, ActionKind::vote, 0, win.controller + " [" + members + "]"});
  }
  if (v->canonical == act.canonical_active(net)) {
    record.push_back({now, ActionKind::reaffirm, net.active.id, ""});
    return {Outcome::Reaffirmed, ShieldRule::none, false, false, net.active.id};
  }
  if (rate_limit_check(act.limiter, now) == RateDecision::Throttle) {
    record.push_back({now, ActionKind::throttle, 0, ""});
    auto r = do_rollback(act, net, now, record, "throttled");
    r.throttled = true;
    return r;
  }
  ShieldVerdict verdict = shield_check(win.policy, net.active, net.topology, net.flows, act.limits);
  if (!verdict.accepted()) {
    record.push_back({now, ActionKind::reject, 0, std::string(to_string(verdict.rule)) + ": " + verdict.detail});
    auto r = do_rollback(act, net, now, record, "rejected");
    r.rejected = verdict.rule;
    return r;
  }
  auto policy = std::make_shared<NetworkPolicy>(win.policy);
  policy->id = net.highest_id + 1;
  policy->issued_at = now;
  LogEntry e;
  e.previous = std::make_shared<const NetworkPolicy>(net.active);
  snapshot_topology(net.topology, e);
  apply_policy(net, std::shared_ptr<const NetworkPolicy>(policy), now, EnactKind::fresh);
  act.limiter.record(now);
  e.policy = policy;
  e.enacted_at = now;
  e.tag = HealthTag::suspect;
  e.kind = EnactKind::fresh;
  act.probation = act.log.append(std::move(e));
  act.probation_elapsed = 0;
  act.slo_bad_run = 0;
  record.push_back({now, ActionKind::enact, policy->id, win.controller});
  return {Outcome::Enacted, ShieldRule::none, false, false, policy->id};
}

inline MitigationResult mitigate(NetworkState& net, ControllerEnsemble& ens, Actuator& act, const ProposalContext& ctx,
                                 std::vector<Action>& record) {
  return mitigate_round(net, ens, act, propose_policies(ens, ctx), ctx.now, record);
}

// Per-tick probation bookkeeping. A policy under probation that violates the
// SLO for K consecutive ticks is rolled back; one that survives H ticks is
// tagged good.
inline std::optional<MitigationResult> monitor_probation(Actuator& act, NetworkState& net, bool slo_ok, double now,
                                                         std::vector<Action>& record) {
  if (!act.probation) return std::nullopt;
  act.slo_bad_run = slo_ok ? 0 : act.slo_bad_run + 1;
  if (act.slo_bad_run >= act.slo.slo_consecutive) {
    record.push_back({now, ActionKind::slo_violation, net.active.id, ""});
    return do_rollback(act, net, now, record, "slo violation");
  }
  if (++act.probation_elapsed >= act.slo.probation_ticks) {
    act.log.tag_good(*act.probation);
    record.push_back({now, ActionKind::tag_good, act.log.entries()[*act.probation].policy->id, ""});
    act.probation.reset();
  }
  return std::nullopt;
}

}  // namespace resil
