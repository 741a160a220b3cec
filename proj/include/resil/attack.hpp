#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "resil/error.hpp"
#include "resil/network.hpp"
#include "resil/reliability.hpp"
#include "resil/rng.hpp"
#include "resil/scenario.hpp"

namespace resil {

// One scheduled attack. `incident` groups the two halves of a coordinated
// attack; for a single attack it equals the attack id.
struct AttackEvent {
  std::string incident;
  AttackSpec spec;

  double start() const { return spec.start; }
  double end() const { return spec.start + spec.duration; }
  bool active_at(double t) const { return t >= start() && t < end(); }
};

// One Bernoulli draw per entry (a coordinated pair shares its draw), in
// scenario order; the result is ordered by start time, then attack id.
inline std::vector<AttackEvent> schedule(const std::vector<AttackEntry>& specs, Rng& rng) {
  std::vector<AttackEvent> out;
  for (const auto& e : specs) {
    if (!rng.bernoulli(attack_probability(e))) continue;
    if (const auto* a = std::get_if<AttackSpec>(&e)) {
      out.push_back({a->id, *a});
    } else {
      const auto& c = std::get<CoordinatedAttack>(e);
      AttackSpec cy = c.cyber;
      AttackSpec ph = c.physical;
      ph.start = cy.start + c.alignment;
      out.push_back({c.id, cy});
      out.push_back({c.id, ph});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const AttackEvent& a, const AttackEvent& b) {
    if (a.start() != b.start()) return a.start() < b.start();
    return a.spec.id < b.spec.id;
  });
  return out;
}

// Effects of the attacks active at one tick.
struct AttackEffects {
  std::set<std::size_t> links_down;
  std::set<std::size_t> nodes_down;
  std::map<std::size_t, double> flood_bps;                 // target node -> synthetic load
  std::map<std::string, double> injection_fraction;        // stream -> corrupted fraction
  std::map<std::string, double> poisoning;                 // detector -> drift in sigmas

  bool operator==(const AttackEffects&) const = default;
};

// The part of the run state attacks may touch. Up/down flags of targeted
// elements are recomputed from their pre-attack values every tick, so every
// effect except poisoning reverses when its event ends.
struct AttackSurface {
  Topology* topology = nullptr;
  std::vector<char> base_link_up;
  std::vector<char> base_node_up;
  std::map<std::size_t, double> nominal_ingress;  // bits/s per node
  AttackEffects current;

  AttackSurface() = default;
  AttackSurface(Topology& t, std::map<std::size_t, double> ingress)
      : topology(&t), nominal_ingress(std::move(ingress)) {
    for (std::size_t i = 0; i < t.link_count(); ++i) base_link_up.push_back(t.link(i).up);
    for (std::size_t i = 0; i < t.node_count(); ++i) base_node_up.push_back(t.node(i).up);
  }
};

inline double flood_ramp_factor(const AttackSpec& a, double now) {
  if (a.ramp <= 0.0) return 1.0;
  return std::clamp((now - a.start) / a.ramp, 0.0, 1.0);
}

inline void apply_effects(AttackSurface& s, const std::vector<const AttackEvent*>& active, double now) {
  if (!s.topology) throw StateError("attack surface has no topology");
  Topology& t = *s.topology;
  for (std::size_t li : s.current.links_down) t.set_link_up(li, s.base_link_up[li]);
  for (std::size_t ni : s.current.nodes_down) t.set_node_up(ni, s.base_node_up[ni]);
  AttackEffects next;
  for (const AttackEvent* ev : active) {
    const AttackSpec& a = ev->spec;
    for (const auto& target : a.targets) {
      switch (a.kind) {
        case AttackKind::fiber_cut:
          next.links_down.insert(*t.link_index(target));
          break;
        case AttackKind::station_outage:
          next.nodes_down.insert(*t.node_index(target));
          break;
        case AttackKind::ddos_flood: {
          std::size_t ni = *t.node_index(target);
          auto it = s.nominal_ingress.find(ni);
          double nominal = it == s.nominal_ingress.end() ? 0.0 : it->second;
          next.flood_bps[ni] += a.intensity * nominal * flood_ramp_factor(a, now);
          break;
        }
        case AttackKind::data_injection: {
          double& f = next.injection_fraction[target];
          f = std::max(f, a.intensity);
          break;
        }
        case AttackKind::ai_poisoning: {
          double& d = next.poisoning[target];
          d = std::max(d, a.intensity);
          break;
        }
      }
    }
  }
  for (std::size_t li : next.links_down) t.set_link_up(li, false);
  for (std::size_t ni : next.nodes_down) t.set_node_up(ni, false);
  s.current = std::move(next);
}

// Worst-case normalized degradation of Q over the event window.
inline double measured_impact(const PerformanceTrace& trace, const AttackEvent& ev) {
  if (trace.q.empty()) throw RangeError("empty trace");
  const double t_end = trace.t_end();
  if (ev.start() < trace.t_start || ev.start() > t_end)
    throw RangeError("event window outside trace");
  if (!(trace.q_nominal > 0.0)) throw DomainError("q_nominal must be > 0");
  const double dt = trace.tick_seconds;
  auto first = static_cast<std::size_t>(std::ceil((ev.start() - trace.t_start) / dt - 1e-9));
  double lo = trace.q_nominal;
  for (std::size_t i = first; i < trace.q.size(); ++i) {
    double ti = trace.t_start + static_cast<double>(i) * dt;
    if (ti >= ev.end()) break;
    lo = std::min(lo, trace.q[i]);
  }
  return std::max(0.0, (trace.q_nominal - lo) / trace.q_nominal);
}

}  // namespace resil
