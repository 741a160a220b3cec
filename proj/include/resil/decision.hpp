#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "resil/error.hpp"
#include "resil/network.hpp"
#include "resil/perception.hpp"
#include "resil/reliability.hpp"
#include "resil/rng.hpp"
#include "resil/scenario.hpp"

namespace resil {

enum class Status { Normal, Alert };

inline std::string_view to_string(Status s) { return s == Status::Normal ? "Normal" : "Alert"; }

// Logistic squash of a z-score into [0, 1]; 0.5 at z = 4.5, 0.9 near z = 6.
inline double squash(double z) {
  constexpr double kMid = 4.5;
  constexpr double kSlope = 1.5;
  if (std::isnan(z)) return 0.0;
  const double s = 1.0 / (1.0 + std::exp(-kSlope * (z - kMid)));
  return std::clamp(s, 0.0, 1.0);
}

inline constexpr double kSigmaFloor = 0.01;  // normalized units

namespace detail {

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

inline double mad_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  double med = median_inplace(v);
  for (auto& x : v) x = std::abs(x - med);
  return median_inplace(v);
}

}  // namespace detail

// Streaming detector over the cleaned (normalized) telemetry vector. Scores
// are computed per stream and reduced with max.
//   ewma_zscore: upward deviation of an EWMA from the learned mean, in units
//                of the EWMA's stationary standard deviation
//   rate_change: absolute first difference against its learned distribution
class AnomalyDetector {
 public:
  struct StreamState {
    double mean = 0.0;
    double var = 0.0;
    double ewma = 0.0;
    double prev = 0.0;
    bool has_prev = false;
    detail::Welford learn;
  };

  AnomalyDetector(DetectorSpec spec, std::vector<std::size_t> streams)
      : spec_(std::move(spec)), streams_(std::move(streams)), state_(streams_.size()) {}

  const std::string& id() const { return spec_.id; }
  DetectorKind kind() const { return spec_.kind; }
  double alert_threshold() const { return spec_.alert_threshold; }
  double smoothing() const { return spec_.smoothing; }
  bool initialized() const { return initialized_; }
  double poison_drift() const { return drift_; }
  std::span<const std::size_t> streams() const { return streams_; }
  const StreamState& stream_state(std::size_t k) const { return state_[k]; }

  // Warm-up observation; flagged samples are skipped for statistics.
  void observe(std::span<const CleanSample> x) {
    for (std::size_t k = 0; k < streams_.size(); ++k) {
      const CleanSample* s = find(x, streams_[k]);
      if (!s) continue;
      auto& st = state_[k];
      if (spec_.kind == DetectorKind::ewma_zscore) {
        if (!s->flagged) st.learn.add(s->value);
      } else {
        if (st.has_prev && !s->flagged) st.learn.add(s->value - st.prev);
        if (!s->flagged) {
          st.prev = s->value;
          st.has_prev = true;
        }
      }
    }
  }

  void finish_warmup() {
    for (auto& st : state_) {
      st.mean = st.learn.mean;
      st.var = st.learn.variance();
      st.ewma = st.mean;
      st.learn = {};
    }
    initialized_ = true;
  }

  // Scores one tick and advances the detector state. Returns the fused
  // score and fills per-stream scores (indexed like streams()).
  double score(std::span<const CleanSample> x, std::vector<double>* per_stream = nullptr,
               std::vector<double>* per_stream_z = nullptr) {
    if (!initialized_) throw WarmupError("detector '" + spec_.id + "' used before warm-up completed");
    double best = 0.0;
    if (per_stream) per_stream->assign(streams_.size(), 0.0);
    if (per_stream_z) per_stream_z->assign(streams_.size(), 0.0);
    for (std::size_t k = 0; k < streams_.size(); ++k) {
      const CleanSample* s = find(x, streams_[k]);
      if (!s) continue;
      auto& st = state_[k];
      const double sigma = std::max(std::sqrt(std::max(st.var, 0.0)), kSigmaFloor);
      const double shifted = st.mean + drift_ * sigma;
      double z = 0.0;
      if (spec_.kind == DetectorKind::ewma_zscore) {
        const double a = spec_.smoothing;
        st.ewma = a * s->value + (1.0 - a) * st.ewma;
        const double sigma_e = sigma * std::sqrt(a / (2.0 - a));
        z = (st.ewma - shifted) / sigma_e;
      } else {
        if (st.has_prev) z = std::abs((s->value - st.prev) - shifted) / sigma;
        st.prev = s->value;
        st.has_prev = true;
      }
      const double sc = squash(z);
      if (per_stream) (*per_stream)[k] = sc;
      if (per_stream_z) (*per_stream_z)[k] = z;
      best = std::max(best, sc);
    }
    return best;
  }

  void poison(double drift_sigmas) { drift_ = drift_sigmas; }

  // Re-estimates the baseline from non-flagged buffer values and clears the
  // poisoning drift when recent clean data contradicts the drifted baseline
  // by more than 3 MADs. Baselines are only replaced when `update_baseline`
  // is set and the window has usable data.
  void retrain(const TimeSeriesBuffer& buf, bool update_baseline = true) {
    if (!initialized_) return;
    bool contradicted = false;
    for (std::size_t k = 0; k < streams_.size(); ++k) {
      std::vector<double> clean = buf.clean_values(streams_[k]);
      std::vector<double> sample;
      if (spec_.kind == DetectorKind::ewma_zscore) {
        sample = clean;
      } else {
        for (std::size_t i = 1; i < clean.size(); ++i) sample.push_back(clean[i] - clean[i - 1]);
      }
      if (sample.size() < kMinOutlierWindow) continue;
      auto& st = state_[k];
      if (drift_ != 0.0) {
        const double sigma = std::max(std::sqrt(std::max(st.var, 0.0)), kSigmaFloor);
        std::vector<double> tmp = sample;
        const double med = detail::median_inplace(tmp);
        const double mad = std::max(kMadScale * detail::mad_of(sample), kSigmaFloor);
        if (std::abs(med - (st.mean + drift_ * sigma)) > kMadCutoff * mad) contradicted = true;
      }
      if (update_baseline) {
        detail::Welford w;
        for (double v : sample) w.add(v);
        st.mean = w.mean;
        st.var = w.variance();
      }
    }
    if (contradicted) drift_ = 0.0;
  }

 private:
  static const CleanSample* find(std::span<const CleanSample> x, std::size_t stream) {
    // Samples arrive in stream order; fall back to a scan otherwise.
    if (stream < x.size() && x[stream].stream == stream) return &x[stream];
    for (const auto& s : x)
      if (s.stream == stream) return &s;
    return nullptr;
  }

  DetectorSpec spec_;
  std::vector<std::size_t> streams_;
  std::vector<StreamState> state_;
  bool initialized_ = false;
  double drift_ = 0.0;
};

struct Detection {
  Status status = Status::Normal;
  double score = 0.0;
  std::vector<double> detector_scores;
  std::set<std::size_t> alerted_streams;
  std::map<std::size_t, double> stream_z;  // largest raw deviation per alerted stream
};

inline Detection detect(std::span<const CleanSample> x, std::vector<AnomalyDetector>& detectors) {
  Detection d;
  std::vector<double> per_stream, per_z;
  for (auto& det : detectors) {
    const double s = det.score(x, &per_stream, &per_z);
    d.detector_scores.push_back(s);
    d.score = std::max(d.score, s);
    if (s > det.alert_threshold()) {
      d.status = Status::Alert;
      for (std::size_t k = 0; k < per_stream.size(); ++k) {
        if (per_stream[k] <= det.alert_threshold()) continue;
        const auto id = det.streams()[k];
        d.alerted_streams.insert(id);
        auto [it, fresh] = d.stream_z.emplace(id, per_z[k]);
        if (!fresh) it->second = std::max(it->second, per_z[k]);
      }
    }
  }
  return d;
}

inline void retrain(std::vector<AnomalyDetector>& detectors, const TimeSeriesBuffer& buf,
                    bool update_baseline = true) {
  for (auto& d : detectors) d.retrain(buf, update_baseline);
}

// Time since the last full-health checkpoint plus a trailing window of Q
// used as the instantaneous resilience input of the dynamic threshold.
struct ReliabilityState {
  FailureModel model;
  double t_since_checkpoint = 0.0;
  std::size_t window_ticks = 200;
  double tick_seconds = 0.1;
  std::deque<double> q_window;

  void advance(double dt) {
    if (!(dt >= 0.0)) throw DomainError("time step must be >= 0");
    t_since_checkpoint += dt;
  }
  void checkpoint() { t_since_checkpoint = 0.0; }
  void record_q(double q) {
    q_window.push_back(q);
    if (q_window.size() > window_ticks) q_window.pop_front();
  }

  // Normalized area of the trailing Q window; 1 until two samples exist.
  double windowed_resilience() const {
    if (q_window.size() < 2) return 1.0;
    PerformanceTrace tr;
    tr.tick_seconds = tick_seconds;
    tr.q.assign(q_window.begin(), q_window.end());
    tr.q_nominal = 1.0;
    return resilience_index(tr, 0.0, tr.t_end());
  }
};

inline double reliability_score(const ReliabilityState& s) {
  return composite_reliability(s.model, s.t_since_checkpoint);
}

inline bool should_mitigate(Status status, const ReliabilityState& s, const ThresholdParams& p) {
  if (status == Status::Alert) return true;
  return reliability_score(s) < dynamic_threshold(p, s.windowed_resilience());
}

// ---------------------------------------------------------------------------
// Controller ensemble

struct ControllerMember {
  std::string id;
  ControllerKind kind = ControllerKind::shortest_path;
  double trust = 1.0;
  std::size_t deviations = 0;
};

struct ControllerEnsemble {
  std::vector<ControllerMember> members;
  double beta = 0.5;
  double gamma = 0.05;
  double trust_floor = 0.05;

  static ControllerEnsemble from_spec(const EnsembleSpec& s) {
    ControllerEnsemble e;
    for (const auto& c : s.controllers) e.members.push_back({c.id, c.kind, c.trust, 0});
    e.beta = s.beta;
    e.gamma = s.gamma;
    e.trust_floor = s.trust_floor;
    return e;
  }

  const ControllerMember* find(std::string_view id) const {
    for (const auto& m : members)
      if (m.id == id) return &m;
    return nullptr;
  }
};

// Snapshot handed to the controllers. Proposals are a pure function of it
// (the adversarial kind additionally draws from `adversary`).
struct ProposalContext {
  const Topology* topology = nullptr;
  std::span<const Flow> flows;
  const NetworkPolicy* active = nullptr;
  const NetworkPolicy* good = nullptr;
  std::set<std::size_t> avoid;   // nodes reported as attack targets
  bool protect = false;          // congestion alert: apply protection slices
  std::map<TrafficClass, double> protect_slices;
  int min_disjoint_paths = 2;
  double u_max = 1.0;  // repairs keep links at or below this utilization when they can
  double now = 0.0;
  Rng* adversary = nullptr;
};

struct Proposal {
  std::string controller;
  NetworkPolicy policy;
  std::string canonical;  // canonical_form(policy) when precomputed, else empty
};

struct ProposalRound {
  std::vector<Proposal> proposals;
  std::vector<std::string> abstained;
};

namespace detail {

inline bool path_intact(const Topology& t, const Path& p) {
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    auto li = t.hop_link(p[i], p[i + 1]);
    if (!li || !t.link_usable(*li)) return false;
  }
  return !p.empty();
}

inline bool path_avoids(const Topology& t, const Path& p, const std::set<std::size_t>& avoid) {
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    auto n = t.node_index(p[i]);
    if (n && avoid.count(*n)) return false;
  }
  return true;
}

// Paths for one flow, preferring to avoid `avoid` and, when `allowed` is
// given, to stay on links with spare capacity. Empty when unreachable.
inline std::vector<Path> route_flow(const Topology& t, const Flow& f, std::size_t want,
                                    const std::set<std::size_t>& avoid,
                                    const std::vector<char>* allowed = nullptr) {
  auto s = t.node_index(f.source);
  auto d = t.node_index(f.destination);
  std::vector<Path> out;
  if (!s || !d) return out;
  std::vector<PathFilter> tries;
  if (allowed) {
    tries.push_back({avoid, *allowed});
    if (!avoid.empty()) tries.push_back({{}, *allowed});
  }
  tries.push_back({avoid, {}});
  if (!avoid.empty()) tries.push_back({});
  if (want <= 1) {
    for (const auto& filter : tries) {
      if (auto p = shortest_path_idx(t, *s, *d, filter)) {
        out.push_back(to_path(t, *p));
        break;
      }
    }
    return out;
  }
  std::vector<std::vector<std::size_t>> best;
  for (const auto& filter : tries) {
    auto ps = edge_disjoint_paths_idx(t, *s, *d, want, filter);
    if (ps.size() > best.size()) best = std::move(ps);
    if (best.size() >= want) break;
  }
  for (const auto& p : best) out.push_back(to_path(t, p));
  return out;
}

// Offered load per link of a policy; hops over unknown links are skipped.
inline std::vector<double> offered_load(const Topology& t, const NetworkPolicy& p, std::span<const Flow> flows) {
  std::vector<double> load(t.link_count(), 0.0);
  for (const auto& f : flows) {
    auto it = p.routes.find(f.id);
    if (it == p.routes.end() || it->second.empty()) continue;
    const double share = f.offered_rate / static_cast<double>(it->second.size());
    for (const auto& path : it->second)
      for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (auto li = t.hop_link(path[i], path[i + 1])) load[*li] += share;
  }
  return load;
}

inline void add_load(const Topology& t, std::vector<double>& load, const std::vector<Path>& paths, double rate,
                     double sign) {
  if (paths.empty()) return;
  const double share = sign * rate / static_cast<double>(paths.size());
  for (const auto& path : paths)
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      if (auto li = t.hop_link(path[i], path[i + 1])) load[*li] += share;
}

}  // namespace detail

// Proposal of one controller, or nothing when it abstains: every flow it
// needed to repair turned out unreachable.
inline std::optional<NetworkPolicy> propose_one(const ControllerMember& m, const ProposalContext& ctx) {
  if (!ctx.topology || !ctx.active || !ctx.good) throw StateError("incomplete proposal context");
  const Topology& t = *ctx.topology;
  if (m.kind == ControllerKind::fallback) {
    NetworkPolicy p = *ctx.good;
    p.issued_by = m.id;
    p.issued_at = ctx.now;
    return p;
  }
  NetworkPolicy p = *ctx.active;
  p.issued_by = m.id;
  p.issued_at = ctx.now;
  if (m.kind == ControllerKind::adversarial) {
    Rng& r = *ctx.adversary;
    p.slice_allocation[TrafficClass::urllc] = 0.0;
    p.slice_allocation[TrafficClass::telemetry] = 0.05 + 0.25 * r.uniform();
    p.slice_allocation[TrafficClass::video] = 0.1 + 0.4 * r.uniform();
    return p;
  }
  bool any_down = false;
  for (std::size_t li = 0; li < t.link_count() && !any_down; ++li) any_down = !t.link_usable(li);
  const bool avoids = m.kind != ControllerKind::slice_protect;
  static const std::set<std::size_t> kNone;
  const std::set<std::size_t>& avoid = avoids ? ctx.avoid : kNone;
  std::size_t needed = 0, unreachable = 0;
  std::vector<double> load = detail::offered_load(t, p, ctx.flows);
  std::vector<char> allowed(t.link_count(), 0);
  for (const auto& f : ctx.flows) {
    auto it = p.routes.find(f.id);
    const std::vector<Path> empty;
    const std::vector<Path>& cur = it == p.routes.end() ? empty : it->second;
    bool broken = cur.empty();
    bool attacked = false;
    for (const auto& path : cur) {
      if (!detail::path_intact(t, path)) broken = true;
      if (!avoid.empty() && !detail::path_avoids(t, path, avoid)) attacked = true;
    }
    const bool urllc = f.traffic_class == TrafficClass::urllc;
    std::size_t want = urllc ? static_cast<std::size_t>(ctx.min_disjoint_paths) : 1;
    bool rebalance = false;
    if (m.kind == ControllerKind::disjoint_path && urllc && any_down) {
      want += 1;
      rebalance = true;
    }
    // urllc flows left with fewer paths than the topology offers again
    bool thin = false;
    if (urllc && !broken && !attacked && cur.size() < want) {
      auto si = t.node_index(f.source), di = t.node_index(f.destination);
      if (si && di) thin = edge_disjoint_paths_idx(t, *si, *di, want).size() > cur.size();
    }
    if (!broken && !attacked && !rebalance && !thin) continue;
    ++needed;
    detail::add_load(t, load, cur, f.offered_rate, -1.0);
    const double share = f.offered_rate / static_cast<double>(want);
    for (std::size_t li = 0; li < t.link_count(); ++li)
      allowed[li] = t.link_usable(li) && load[li] + share <= ctx.u_max * t.link(li).capacity;
    auto paths = detail::route_flow(t, f, want, avoid, &allowed);
    if (paths.empty()) ++unreachable;
    detail::add_load(t, load, paths, f.offered_rate, 1.0);
    p.routes[f.id] = std::move(paths);
  }
  if (needed > 0 && unreachable == needed) return std::nullopt;
  if (ctx.protect) p.slice_allocation = ctx.protect_slices;
  return p;
}

inline ProposalRound propose_policies(const ControllerEnsemble& ens, const ProposalContext& ctx) {
  ProposalRound round;
  for (const auto& m : ens.members) {
    if (auto p = propose_one(m, ctx)) round.proposals.push_back({m.id, std::move(*p), {}});
    else round.abstained.push_back(m.id);
  }
  return round;
}

struct VoteResult {
  std::size_t winner = 0;             // index into proposals
  std::string canonical;
  std::vector<std::string> members;   // controllers in the winning group
  double mass = 0.0;
};

// Trust-weighted plurality over canonical-form groups; ties go to the group
// holding the lowest controller id.
inline std::optional<VoteResult> vote(std::span<const Proposal> proposals, const ControllerEnsemble& ens) {
  if (proposals.empty()) return std::nullopt;
  struct Group {
    std::string canonical;
    std::size_t first;
    std::string min_id;
    double mass = 0.0;
    std::vector<std::string> members;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    std::string c = proposals[i].canonical.empty() ? canonical_form(proposals[i].policy) : proposals[i].canonical;
    const ControllerMember* m = ens.find(proposals[i].controller);
    const double trust = m ? m->trust : 0.0;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.canonical == c; });
    if (it == groups.end()) {
      groups.push_back({std::move(c), i, proposals[i].controller, 0.0, {}});
      it = groups.end() - 1;
    }
    it->mass += trust;
    it->members.push_back(proposals[i].controller);
    if (proposals[i].controller < it->min_id) {
      it->min_id = proposals[i].controller;
      it->first = i;
    }
  }
  const Group* best = &groups.front();
  for (const auto& g : groups)
    if (g.mass > best->mass || (g.mass == best->mass && g.min_id < best->min_id)) best = &g;
  VoteResult r;
  r.winner = best->first;
  r.canonical = best->canonical;
  r.members = best->members;
  r.mass = best->mass;
  return r;
}

// Deviators: T <- max(floor, beta*T); winning group: T <- min(1, T + gamma).
inline void update_trust(ControllerEnsemble& ens, std::span<const Proposal> proposals, const VoteResult& winner) {
  for (const auto& p : proposals) {
    auto it = std::find_if(ens.members.begin(), ens.members.end(),
                           [&](const ControllerMember& m) { return m.id == p.controller; });
    if (it == ens.members.end()) continue;
    const bool in_group =
        std::find(winner.members.begin(), winner.members.end(), p.controller) != winner.members.end();
    if (in_group) {
      it->trust = std::min(1.0, it->trust + ens.gamma);
    } else {
      it->trust = std::max(ens.trust_floor, ens.beta * it->trust);
      ++it->deviations;
    }
  }
}

}  // namespace resil
