#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "resil/actuation.hpp"
#include "resil/attack.hpp"
#include "resil/decision.hpp"
#include "resil/error.hpp"
#include "resil/network.hpp"
#include "resil/perception.hpp"
#include "resil/reliability.hpp"
#include "resil/rng.hpp"
#include "resil/scenario.hpp"
#include "resil/transport.hpp"

namespace resil {

enum class Strategy { proposed, baseline_switching, baseline_static };

inline constexpr std::array<Strategy, 3> kStrategies = {Strategy::proposed, Strategy::baseline_switching,
                                                        Strategy::baseline_static};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::proposed: return "proposed";
    case Strategy::baseline_switching: return "baseline_switching";
    case Strategy::baseline_static: return "baseline_static";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto k : kStrategies)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

enum class Phase : std::uint8_t { warmup, normal, onset, sustained, recovery };
inline constexpr std::size_t kPhases = 5;

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::warmup: return "warmup";
    case Phase::normal: return "normal";
    case Phase::onset: return "onset";
    case Phase::sustained: return "sustained";
    case Phase::recovery: return "recovery";
  }
  return "?";
}

struct RunConfig {
  std::shared_ptr<const ScenarioConfig> scenario;
  Strategy strategy = Strategy::proposed;
  std::uint64_t seed = 1;
  double duration = 5000.0;
  double tick = 0.1;
  double warm_up = 100.0;
  double onset_window = 60.0;     // seconds after an incident starts
  double recovery_window = 120.0;  // seconds after an incident ends

  static RunConfig make(std::shared_ptr<const ScenarioConfig> s, Strategy strategy, std::uint64_t seed) {
    RunConfig c;
    c.strategy = strategy;
    c.seed = seed;
    c.duration = s->run.duration;
    c.tick = s->run.tick;
    c.warm_up = s->run.warm_up;
    c.scenario = std::move(s);
    return c;
  }

  void validate() const {
    if (!scenario) throw ConfigError("run", "no scenario");
    if (!(tick > 0.0)) throw ConfigError("run.tick", "must be > 0");
    if (!(warm_up >= 0.0)) throw ConfigError("run.warm_up", "must be >= 0");
    if (!(duration > warm_up)) throw ConfigError("run.duration", "must exceed warm_up");
    const double warm_ticks = std::floor(warm_up / tick + 1e-9);
    if (strategy == Strategy::proposed && warm_ticks < scenario->perception_window)
      throw ConfigError("run.warm_up", "detectors need at least one perception window of warm-up ticks");
  }
};

// Sparse latency histogram with 0.1 ms bins.
struct LatencyHistogram {
  std::map<std::int64_t, std::int64_t> bins;
  std::int64_t total = 0;

  void add(double ms, std::int64_t n) {
    if (n <= 0) return;
    bins[static_cast<std::int64_t>(std::floor(std::max(0.0, ms) * 10.0))] += n;
    total += n;
  }
  // Nearest-rank percentile, reported at the bin midpoint; NaN when empty.
  double percentile(double p) const {
    if (total == 0) return std::numeric_limits<double>::quiet_NaN();
    auto rank = static_cast<std::int64_t>(std::ceil(p * static_cast<double>(total)));
    rank = std::clamp<std::int64_t>(rank, 1, total);
    std::int64_t cum = 0;
    for (const auto& [b, n] : bins) {
      cum += n;
      if (cum >= rank) return (static_cast<double>(b) + 0.5) / 10.0;
    }
    return (static_cast<double>(bins.rbegin()->first) + 0.5) / 10.0;
  }
};

// Nearest-rank percentile of weighted samples; NaN when empty.
inline double weighted_percentile(std::vector<std::pair<double, std::int64_t>> v, double p) {
  std::int64_t total = 0;
  for (const auto& [x, n] : v) total += n;
  if (total == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::int64_t>(std::ceil(p * static_cast<double>(total)));
  rank = std::clamp<std::int64_t>(rank, 1, total);
  std::int64_t cum = 0;
  for (const auto& [x, n] : v) {
    cum += n;
    if (cum >= rank) return x;
  }
  return v.back().first;
}

struct PhaseStats {
  std::int64_t generated_legit = 0;
  std::int64_t delivered_legit = 0;
  std::int64_t dropped_legit = 0;
  std::int64_t ticks = 0;
  LatencyHistogram urllc_latency;
};

struct TickRecord {
  double t = 0.0;
  double q = 1.0;
  double c = 1.0;
  double p50 = 0.0, p95 = 0.0, p99 = 0.0;  // urllc, ms; NaN when nothing delivered
  double plr_pct = 0.0;
  double penalty_pct = 0.0;
  double reliability = 1.0;
  double ri = 1.0;
  Phase phase = Phase::warmup;
  bool detected = false;
  bool mitigated = false;
  std::int64_t generated = 0;  // cumulative, all packets
  std::int64_t delivered = 0;
  std::int64_t dropped = 0;
  std::int64_t in_queue = 0;
};

struct IncidentRecord {
  std::string id;
  double start = 0.0;
  double end = 0.0;
  std::optional<double> t_detect;
  std::optional<double> t_dip;
  std::optional<double> t_recovery;
  std::optional<double> t_steady;
};

struct RollbackCheck {
  double t = 0.0;
  std::uint64_t policy_id = 0;
  bool exact = false;  // restored policy serializes identically to S_good
};

struct RunResult {
  std::string scenario;
  Strategy strategy = Strategy::proposed;
  std::uint64_t seed = 0;
  double tick = 0.1;
  double warm_up = 0.0;
  double duration = 0.0;
  double t_baseline_bps = 0.0;
  std::vector<TickRecord> ticks;
  std::array<PhaseStats, kPhases> phases;
  std::vector<Action> actions;
  std::vector<LogEntry> policy_log;
  std::vector<AttackEvent> schedule;
  std::vector<IncidentRecord> incidents;
  std::vector<AttackImpactEntry> impacts;
  std::optional<double> service_failure_at;
  bool conservation_ok = true;
  std::optional<std::int64_t> conservation_violation_tick;
  std::vector<std::pair<std::string, double>> final_trust;
  std::vector<RollbackCheck> rollbacks;
  std::int64_t mitigation_ticks = 0;
  int lambda_max = 0;
  double rate_window = 0.0;
};

// Incremental resilience index over a trailing window of C.
class RiTracker {
 public:
  RiTracker(const MetricsSpec& m) : m_(m) {}

  double push(double c) {
    const double q = std::clamp(c, 0.0, 1.0);
    window_.push_back(q);
    while (!mins_.empty() && mins_.back() > q) mins_.pop_back();
    mins_.push_back(q);
    if (window_.size() > static_cast<std::size_t>(m_.ri_window_ticks)) {
      const double old = window_.front();
      window_.pop_front();
      if (!mins_.empty() && mins_.front() == old) mins_.pop_front();
    }
    degraded_run_ = c < m_.recovery_threshold ? degraded_run_ + 1 : 0;
    const double n = static_cast<double>(window_.size());
    double avail = 0.0;
    for (double v : window_) avail += v;
    avail /= n;
    const double rec = std::min(1.0, static_cast<double>(degraded_run_) / m_.ri_window_ticks);
    const double impact = 1.0 - mins_.front();
    const double ri = m_.w_availability * avail + m_.w_recovery * (1.0 - rec) + m_.w_impact * (1.0 - impact);
    return std::clamp(ri, 0.0, 1.0);
  }

 private:
  MetricsSpec m_;
  std::deque<double> window_;
  std::deque<double> mins_;
  std::int64_t degraded_run_ = 0;
};

namespace detail {

struct StreamRuntime {
  StreamSpec spec;
  std::size_t node = 0;
  std::deque<double> ingress;  // recent per-tick ingress bits
  Welford raw;                 // warm-up statistics of raw replica values
  Welford static_norm;         // warm-up statistics of normalized replica 0
  double static_mean = 0.0;
  double static_sigma = 0.0;
};

}  // namespace detail

class Simulation {
 public:
  explicit Simulation(RunConfig rc) : rc_(std::move(rc)), cfg_(*rc_.scenario) {
    rc_.validate();
    setup();
  }
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  RunResult run() {
    const auto n_ticks = static_cast<std::int64_t>(std::llround(rc_.duration / rc_.tick));
    res_.ticks.reserve(static_cast<std::size_t>(n_ticks));
    for (std::int64_t k = 0; k < n_ticks; ++k) step(k);
    finish();
    return std::move(res_);
  }

 private:
  static constexpr std::uint32_t kNoRoute = UINT32_MAX;
  static constexpr double kTargetShare = 0.5;
  static constexpr double kTargetExcess = 0.15;  // normalized ingress above baseline
  static constexpr double kAvoidRefresh = 30.0;  // seconds

  void setup() {
    res_.scenario = cfg_.name;
    res_.strategy = rc_.strategy;
    res_.seed = rc_.seed;
    res_.tick = rc_.tick;
    res_.warm_up = rc_.warm_up;
    res_.duration = rc_.duration;

    net_.topology = build_topology(cfg_);
    net_.flows = cfg_.flows;
    const Topology& t = net_.topology;

    NetworkPolicy init;
    init.id = 1;
    init.issued_by = "initial";
    init.slice_allocation = cfg_.slices;
    for (const auto& f : net_.flows) {
      auto paths = detail::route_flow(t, f,
                                      f.traffic_class == TrafficClass::urllc
                                          ? static_cast<std::size_t>(cfg_.shields.min_disjoint_paths)
                                          : 1,
                                      {});
      if (paths.empty()) throw ConfigError("flows." + f.id, "destination unreachable");
      init.routes[f.id] = std::move(paths);
    }
    auto init_ptr = std::make_shared<const NetworkPolicy>(init);
    apply_policy(net_, init_ptr, 0.0, EnactKind::fresh);
    act_.limits = cfg_.shields;
    act_.slo = cfg_.actuation;
    act_.limiter.lambda_max = cfg_.rate_limiter.lambda_max;
    act_.limiter.window = cfg_.rate_limiter.window;
    LogEntry first;
    first.policy = init_ptr;
    first.tag = HealthTag::good;
    snapshot_topology(t, first);
    act_.log.append(std::move(first));
    res_.lambda_max = act_.limiter.lambda_max;
    res_.rate_window = act_.limiter.window;

    transport_ = std::make_unique<Transport>(net_.topology, rc_.tick);
    transport_->set_slices(init.slice_allocation);
    for (const auto& f : net_.flows) {
      flow_source_.push_back(transport_->add_source(f.packet_size, class_index(f.traffic_class), true));
      t_baseline_ += f.offered_rate;
    }
    res_.t_baseline_bps = t_baseline_;
    flow_acc_.assign(net_.flows.size(), 0.0);

    Rng traffic(stream_seed(rc_.seed, Stream::traffic));
    const int period = cfg_.traffic.video_period_ticks;
    on_ticks_ = std::clamp(static_cast<int>(std::lround(cfg_.traffic.video_duty * period)), 1, period);
    for (std::size_t i = 0; i < net_.flows.size(); ++i)
      video_phase_.push_back(static_cast<int>(traffic.below(static_cast<std::uint64_t>(period))));

    // Nominal ingress: offered load crossing or terminating at each node.
    std::map<std::size_t, double> ingress;
    for (const auto& f : net_.flows) {
      const auto& paths = init.routes.at(f.id);
      for (const auto& p : paths)
        for (std::size_t i = 1; i < p.size(); ++i)
          ingress[*t.node_index(p[i])] += f.offered_rate / static_cast<double>(paths.size());
    }
    surface_ = AttackSurface(net_.topology, ingress);

    Rng sched(stream_seed(rc_.seed, Stream::attack_schedule));
    res_.schedule = schedule(cfg_.attacks, sched);

    for (std::size_t i = 0; i < cfg_.streams.size(); ++i) {
      detail::StreamRuntime s;
      s.spec = cfg_.streams[i];
      s.node = *t.node_index(s.spec.node);
      streams_.push_back(std::move(s));
    }
    buffer_ = TimeSeriesBuffer(static_cast<std::size_t>(cfg_.perception_window));
    for (const auto& s : streams_) buffer_.add_stream(s.spec.id, s.spec.lo, s.spec.hi);
    for (const auto& d : cfg_.detectors) {
      std::vector<std::size_t> idx;
      if (d.streams.empty()) {
        for (std::size_t i = 0; i < streams_.size(); ++i) idx.push_back(i);
      } else {
        for (const auto& s : d.streams) idx.push_back(buffer_.index(s));
      }
      detectors_.emplace_back(d, std::move(idx));
    }
    ensemble_ = ControllerEnsemble::from_spec(cfg_.ensemble);
    for (auto& m : ensemble_.members) m.trust = std::clamp(m.trust, ensemble_.trust_floor, 1.0);
    rel_.model = cfg_.failure_model;
    rel_.window_ticks = static_cast<std::size_t>(cfg_.resilience_window_ticks);
    rel_.tick_seconds = rc_.tick;
    ri_ = std::make_unique<RiTracker>(cfg_.metrics);

    sensor_rng_ = std::make_unique<Rng>(stream_seed(rc_.seed, Stream::sensor_noise));
    injection_rng_ = std::make_unique<Rng>(stream_seed(rc_.seed, Stream::injection));
    adversary_rng_ = std::make_unique<Rng>(stream_seed(rc_.seed, Stream::adversary));

    warm_ticks_ = static_cast<std::int64_t>(std::floor(rc_.warm_up / rc_.tick + 1e-9));
    retrain_ticks_ = std::max<std::int64_t>(1, std::llround(cfg_.retrain_interval / rc_.tick));

    // Incident windows (strategy independent) for phase labelling.
    std::map<std::string, std::pair<double, double>> windows;
    for (const auto& ev : res_.schedule) {
      auto it = windows.find(ev.incident);
      if (it == windows.end()) windows[ev.incident] = {ev.start(), ev.end()};
      else {
        it->second.first = std::min(it->second.first, ev.start());
        it->second.second = std::max(it->second.second, ev.end());
      }
    }
    for (const auto& [id, w] : windows) res_.incidents.push_back({id, w.first, w.second, {}, {}, {}, {}});
    std::sort(res_.incidents.begin(), res_.incidents.end(),
              [](const IncidentRecord& a, const IncidentRecord& b) { return a.start != b.start ? a.start < b.start : a.id < b.id; });
    c_window_.clear();
  }

  Phase phase_at(std::int64_t k) const {
    const double t = static_cast<double>(k) * rc_.tick;
    if (k < warm_ticks_) return Phase::warmup;
    Phase best = Phase::normal;
    auto rank = [](Phase p) {
      switch (p) {
        case Phase::sustained: return 3;
        case Phase::onset: return 2;
        case Phase::recovery: return 1;
        default: return 0;
      }
    };
    for (const auto& inc : res_.incidents) {
      Phase p = Phase::normal;
      if (t >= inc.start && t < inc.end) p = t < inc.start + rc_.onset_window ? Phase::onset : Phase::sustained;
      else if (t >= inc.end && t < inc.end + rc_.recovery_window) p = Phase::recovery;
      if (rank(p) > rank(best)) best = p;
    }
    return best;
  }

  void refresh_routes() {
    if (routes_revision_ == net_.revision) return;
    routes_revision_ = net_.revision;
    const Topology& t = net_.topology;
    flow_routes_.assign(net_.flows.size(), {});
    for (std::size_t i = 0; i < net_.flows.size(); ++i) {
      auto it = net_.active.routes.find(net_.flows[i].id);
      if (it == net_.active.routes.end()) continue;
      for (const auto& p : it->second) {
        std::vector<std::size_t> nodes;
        for (const auto& n : p) nodes.push_back(*t.node_index(n));
        flow_routes_[i].push_back(transport_->intern_route(nodes));
      }
    }
    transport_->set_slices(net_.active.slice_allocation);
  }

  // Attack traffic sources: IoT devices closest to the target.
  const std::vector<std::size_t>& bots_for(std::size_t target) {
    auto it = bots_.find(target);
    if (it != bots_.end()) return it->second;
    const Topology& t = net_.topology;
    std::vector<int> dist(t.node_count(), -1);
    std::deque<std::size_t> q{target};
    dist[target] = 0;
    while (!q.empty()) {
      auto u = q.front();
      q.pop_front();
      for (auto [v, li] : t.neighbors(u)) {
        (void)li;
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push_back(v);
        }
      }
    }
    auto pick = [&](bool iot_only) {
      int best = -1;
      std::vector<std::size_t> out;
      for (std::size_t v = 0; v < t.node_count(); ++v) {
        if (v == target || dist[v] <= 0) continue;
        if (iot_only && t.node(v).role != NodeRole::iot_device) continue;
        if (best < 0 || dist[v] < best) {
          best = dist[v];
          out.clear();
        }
        if (dist[v] == best) out.push_back(v);
      }
      return out;
    };
    auto bots = pick(true);
    if (bots.empty()) bots = pick(false);
    return bots_[target] = std::move(bots);
  }

  std::uint32_t flood_route(std::size_t bot, std::size_t target) {
    const auto key = std::make_pair(bot, target);
    auto it = flood_routes_.find(key);
    if (it != flood_routes_.end() && it->second.first == topo_epoch_) return it->second.second;
    auto p = shortest_path_idx(net_.topology, bot, target);
    const std::uint32_t r = p ? transport_->intern_route(*p) : kNoRoute;
    flood_routes_[key] = {topo_epoch_, r};
    return r;
  }

  std::uint32_t flood_source(std::size_t bot, std::size_t target) {
    const auto key = std::make_pair(bot, target);
    auto it = flood_sources_.find(key);
    if (it != flood_sources_.end()) return it->second;
    const auto s = transport_->add_source(cfg_.traffic.flood_packet_size, kBestEffort, false);
    flood_sources_[key] = s;
    return s;
  }

  // cached until the topology or the active policy changes
  bool active_routes_touch_down() {
    const std::pair key{topo_epoch_, net_.revision};
    if (down_key_ == key) return routes_down_;
    down_key_ = key;
    routes_down_ = false;
    for (const auto& [fid, paths] : net_.active.routes)
      for (const auto& p : paths)
        if (!detail::path_intact(net_.topology, p)) routes_down_ = true;
    return routes_down_;
  }

  void step(std::int64_t k) {
    const double now = static_cast<double>(k) * rc_.tick;
    const Topology& t = net_.topology;

    // (1) attack effects
    std::vector<const AttackEvent*> active;
    for (const auto& ev : res_.schedule)
      if (ev.active_at(now)) active.push_back(&ev);
    const auto prev_links = surface_.current.links_down;
    const auto prev_nodes = surface_.current.nodes_down;
    apply_effects(surface_, active, now);
    if (surface_.current.links_down != prev_links || surface_.current.nodes_down != prev_nodes) ++topo_epoch_;
    // A poisoned model stays poisoned until retraining clears it, so the
    // drift is applied once when the attack begins.
    for (const auto& [det, drift] : surface_.current.poisoning) {
      auto prev = poisoned_.find(det);
      if (prev != poisoned_.end() && prev->second == drift) continue;
      for (auto& d : detectors_)
        if (d.id() == det) d.poison(drift);
      if (det == cfg_.static_detector.id) static_drift_ = drift;
    }
    poisoned_ = surface_.current.poisoning;

    // (1) traffic generation
    refresh_routes();
    std::vector<Injection> gen;
    for (std::size_t i = 0; i < net_.flows.size(); ++i) {
      const Flow& f = net_.flows[i];
      double rate = f.offered_rate;
      if (f.traffic_class == TrafficClass::video) {
        const int period = cfg_.traffic.video_period_ticks;
        const bool on = ((k + video_phase_[i]) % period) < on_ticks_;
        rate = on ? f.offered_rate * period / on_ticks_ : 0.0;
      }
      flow_acc_[i] += rate * rc_.tick / f.packet_size;
      const auto n = static_cast<std::int64_t>(std::floor(flow_acc_[i] + 1e-9));
      flow_acc_[i] -= static_cast<double>(n);
      if (n <= 0) continue;
      const auto& routes = flow_routes_[i];
      if (routes.empty()) {
        gen.push_back({flow_source_[i], kNoRoute, n});
        continue;
      }
      const auto R = static_cast<std::int64_t>(routes.size());
      for (std::int64_t r = 0; r < R; ++r) {
        const std::int64_t share = n / R + (r < n % R ? 1 : 0);
        if (share > 0) gen.push_back({flow_source_[i], routes[static_cast<std::size_t>(r)], share});
      }
    }
    for (const auto& [target, bps] : surface_.current.flood_bps) {
      if (bps <= 0.0) continue;
      const auto& bots = bots_for(target);
      if (bots.empty()) continue;
      const double per_bot = bps / static_cast<double>(bots.size());
      for (auto b : bots) {
        const auto src = flood_source(b, target);
        double& acc = flood_acc_[{b, target}];
        acc += per_bot * rc_.tick / cfg_.traffic.flood_packet_size;
        const auto n = static_cast<std::int64_t>(std::floor(acc + 1e-9));
        acc -= static_cast<double>(n);
        if (n > 0) gen.push_back({src, flood_route(b, target), n});
      }
    }

    // (2) transport
    TickStats st = step_transport(k, gen);
    cum_generated_ += st.generated_legit + st.generated_attack;
    cum_delivered_ += st.delivered_legit + st.delivered_attack;
    cum_dropped_ += st.dropped_legit + st.dropped_attack;
    const std::int64_t in_q = transport_->in_queue();
    if (cum_generated_ != cum_delivered_ + cum_dropped_ + in_q && res_.conservation_ok) {
      res_.conservation_ok = false;
      res_.conservation_violation_tick = k;
    }

    // (3) telemetry
    std::vector<TelemetrySample> samples;
    std::vector<double> replica0(streams_.size(), 0.0);
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      auto& s = streams_[i];
      double truth = 0.0;
      if (s.spec.kind == StreamKind::ingress_rate) {
        s.ingress.push_back(st.ingress_bits[s.node]);
        if (s.ingress.size() > static_cast<std::size_t>(s.spec.averaging_ticks)) s.ingress.pop_front();
        double sum = 0.0;
        for (double b : s.ingress) sum += b;
        truth = sum / (static_cast<double>(s.ingress.size()) * rc_.tick);
      } else {
        truth = static_cast<double>(st.queue_depth[s.node]);
      }
      if (!t.node_up(s.node)) truth = 0.0;
      std::vector<double> reps(static_cast<std::size_t>(s.spec.replicas));
      for (auto& v : reps) {
        const double n1 = sensor_rng_->normal();
        const double n2 = sensor_rng_->normal();
        v = std::max(0.0, truth * (1.0 + s.spec.noise_rel * n1) + s.spec.noise_abs * n2);
      }
      auto inj = surface_.current.injection_fraction.find(s.spec.id);
      if (inj != surface_.current.injection_fraction.end()) {
        const double u = injection_rng_->uniform();
        const auto r = injection_rng_->below(reps.size());
        const double z = injection_rng_->normal();
        if (u < inj->second) {
          const double sigma = std::max(std::sqrt(s.raw.variance()), 1e-9 * (s.spec.hi - s.spec.lo));
          reps[r] = s.raw.mean + (8.0 + 0.5 * z) * sigma;
        }
      }
      if (k < warm_ticks_) {
        for (double v : reps) s.raw.add(v);
      }
      replica0[i] = reps[0];
      for (std::size_t r = 0; r < reps.size(); ++r)
        samples.push_back({s.spec.id, now, reps[r], static_cast<int>(r)});
    }

    // C(t) and Q(t)
    c_window_.push_back(st.delivered_legit_bits);
    c_sum_ += st.delivered_legit_bits;
    if (c_window_.size() > static_cast<std::size_t>(cfg_.metrics.throughput_window_ticks)) {
      c_sum_ -= c_window_.front();
      c_window_.pop_front();
    }
    const double t_current = c_sum_ / (static_cast<double>(c_window_.size()) * rc_.tick);
    const double C = t_baseline_ > 0.0 ? t_current / t_baseline_ : 1.0;
    const double Q = std::clamp(C, 0.0, 1.0);

    const double p50 = weighted_percentile(st.urllc_latency_ms, 0.50);
    const double p95 = weighted_percentile(st.urllc_latency_ms, 0.95);
    const double p99 = weighted_percentile(st.urllc_latency_ms, 0.99);
    const std::int64_t finished = st.delivered_legit + st.dropped_legit;
    const double plr = finished > 0 ? 100.0 * static_cast<double>(st.dropped_legit) / static_cast<double>(finished) : 0.0;
    const std::int64_t urllc_finished = st.urllc_delivered + st.urllc_dropped;
    const double urllc_plr =
        urllc_finished > 0 ? static_cast<double>(st.urllc_dropped) / static_cast<double>(urllc_finished) : 0.0;
    const bool slo_ok = !(p99 > cfg_.actuation.slo_latency_ms) && !(urllc_plr > cfg_.actuation.slo_plr);

    // (3)-(5) perception, decision, actuation
    bool detected = false;
    bool mitigated = false;
    switch (rc_.strategy) {
      case Strategy::proposed:
        detected = step_proposed(k, now, samples, Q, slo_ok, mitigated);
        break;
      case Strategy::baseline_switching:
        detected = step_switching(now);
        mitigated = detected;
        break;
      case Strategy::baseline_static:
        detected = step_static(k, now, replica0);
        mitigated = detected;
        break;
    }
    healthy_run_ = C >= cfg_.metrics.recovery_threshold ? healthy_run_ + 1 : 0;
    if (net_.revision != seen_revision_) {
      seen_revision_ = net_.revision;
      last_change_tick_ = k;
    }
    if (rc_.strategy != Strategy::proposed) rel_.record_q(Q);
    rel_.advance(rc_.tick);
    if (C >= cfg_.metrics.recovery_threshold && !detected) rel_.checkpoint();

    // (6)-(7) monitoring and metrics
    TickRecord rec;
    rec.t = now;
    rec.c = C;
    rec.q = Q;
    rec.p50 = p50;
    rec.p95 = p95;
    rec.p99 = p99;
    rec.plr_pct = plr;
    rec.penalty_pct = t_baseline_ > 0.0 ? throughput_penalty(t_baseline_, t_current) : 0.0;
    rec.reliability = reliability_score(rel_);
    rec.ri = ri_->push(C);
    rec.phase = phase_at(k);
    rec.detected = detected;
    rec.mitigated = mitigated;
    rec.generated = cum_generated_;
    rec.delivered = cum_delivered_;
    rec.dropped = cum_dropped_;
    rec.in_queue = in_q;
    res_.ticks.push_back(rec);
    if (mitigated) ++res_.mitigation_ticks;

    auto& ph = res_.phases[static_cast<std::size_t>(rec.phase)];
    ph.generated_legit += st.generated_legit;
    ph.delivered_legit += st.delivered_legit;
    ph.dropped_legit += st.dropped_legit;
    ++ph.ticks;
    for (const auto& [ms, n] : st.urllc_latency_ms) ph.urllc_latency.add(ms, n);
  }

  TickStats step_transport(std::int64_t k, std::vector<Injection>& gen) {
    // Unroutable traffic is generated and lost at its source.
    std::int64_t lost_legit = 0, lost_attack = 0, lost_urllc = 0;
    std::vector<Injection> routed;
    routed.reserve(gen.size());
    for (const auto& g : gen) {
      if (g.route != kNoRoute) {
        routed.push_back(g);
        continue;
      }
      const auto& s = transport_->source(g.source);
      (s.legit ? lost_legit : lost_attack) += g.count;
      if (s.legit && s.cls == class_index(TrafficClass::urllc)) lost_urllc += g.count;
    }
    TickStats st = transport_->step(k, routed);
    st.generated_legit += lost_legit;
    st.dropped_legit += lost_legit;
    st.generated_attack += lost_attack;
    st.dropped_attack += lost_attack;
    st.urllc_generated += lost_urllc;
    st.urllc_dropped += lost_urllc;
    return st;
  }

  bool step_proposed(std::int64_t k, double now, const std::vector<TelemetrySample>& samples, double Q, bool slo_ok,
                     bool& mitigated) {
    auto cleaned = preprocess(samples, buffer_);
    rel_.record_q(Q);
    if (k < warm_ticks_) {
      for (auto& d : detectors_) d.observe(cleaned);
      return false;
    }
    if (k == warm_ticks_)
      for (auto& d : detectors_) d.finish_warmup();

    Detection det = detectors_.empty() ? Detection{} : detect(cleaned, detectors_);
    const bool fault = active_routes_touch_down();
    const Status status = (det.status == Status::Alert || fault) ? Status::Alert : Status::Normal;
    if (status == Status::Alert && !prev_alert_) {
      std::string why = fault ? "fault" : "";
      if (det.status == Status::Alert) why += std::string(why.empty() ? "" : "+") + "detector";
      res_.actions.push_back({now, ActionKind::alert, 0, why});
    }
    prev_alert_ = status == Status::Alert;
    if (status == Status::Alert) last_alert_tick_ = k;
    else avoid_.clear();

    if (should_mitigate(status, rel_, cfg_.thresholds)) {
      ProposalContext ctx;
      ctx.topology = &net_.topology;
      ctx.flows = net_.flows;
      ctx.active = &net_.active;
      ctx.good = act_.log.s_good().policy.get();
      // A node counts as an attack target when its ingress sits far above
      // the learned level and dominates the other alerted streams. Load that
      // rerouting or outages shift onto neighbours deviates too, but less.
      std::map<std::size_t, double> excess;
      for (const auto& c : cleaned) {
        if (!det.alerted_streams.count(c.stream) || streams_[c.stream].spec.kind != StreamKind::ingress_rate) continue;
        for (const auto& d : detectors_) {
          if (d.kind() != DetectorKind::ewma_zscore) continue;
          const auto ss = d.streams();
          auto it = std::find(ss.begin(), ss.end(), c.stream);
          if (it == ss.end()) continue;
          excess[c.stream] = c.value - d.stream_state(static_cast<std::size_t>(it - ss.begin())).mean;
          break;
        }
      }
      double top = 0.0;
      for (const auto& [si, e] : excess) top = std::max(top, e);
      // Target sets are latched so a ramping attack does not turn into a
      // new policy every tick; they grow at most once per refresh period.
      if (avoid_.empty() || now - avoid_updated_ >= kAvoidRefresh) {
        const auto before = avoid_.size();
        for (const auto& [si, e] : excess)
          if (e >= kTargetExcess && e >= kTargetShare * top) avoid_.insert(streams_[si].node);
        if (avoid_.size() != before) avoid_updated_ = now;
      }
      ctx.avoid = avoid_;
      ctx.protect = det.status == Status::Alert;
      ctx.protect_slices = cfg_.ensemble.protect_slices;
      ctx.min_disjoint_paths = cfg_.shields.min_disjoint_paths;
      ctx.u_max = cfg_.shields.u_max;
      ctx.now = now;
      ctx.adversary = adversary_rng_.get();
      if (status != Status::Alert) res_.actions.push_back({now, ActionKind::alert, 0, "reliability below threshold"});
      const auto before = act_.log.size();
      const auto good = act_.log.s_good().policy;
      mitigate_round(net_, ensemble_, act_, propose_cached(ctx), now, res_.actions);
      note_rollback(before, good, now);
      mitigated = true;
    }
    {
      const auto before = act_.log.size();
      const auto good = act_.log.s_good().policy;
      monitor_probation(act_, net_, slo_ok, now, res_.actions);
      note_rollback(before, good, now);
    }

    if ((k - warm_ticks_) > 0 && (k - warm_ticks_) % retrain_ticks_ == 0) {
      // Baselines are re-learned after a quiet window, or after a window of
      // healthy service with no policy change (the traffic mix moved on).
      const std::int64_t W = cfg_.perception_window;
      const bool quiet = last_alert_tick_ < 0 || k - last_alert_tick_ > W;
      const bool settled = last_change_tick_ < k - W && healthy_run_ > W;
      retrain(detectors_, buffer_, quiet || settled);
    }
    return status == Status::Alert;
  }

  // Apart from the adversarial kind, controllers are pure functions of the
  // context, so a round is reused while its inputs stay the same. Only the
  // adversarial proposals are drawn again. Issue times in a reused round are
  // stale; enactment stamps its own.
  const ProposalRound& propose_cached(const ProposalContext& ctx) {
    MemoKey key{topo_epoch_, net_.revision, ctx.good, ctx.avoid, ctx.protect};
    if (memo_key_ != key) {
      memo_key_ = std::move(key);
      memo_ = propose_policies(ensemble_, ctx);
      for (auto& p : memo_.proposals)
        if (ensemble_.find(p.controller)->kind != ControllerKind::adversarial) p.canonical = canonical_form(p.policy);
      return memo_;
    }
    for (auto& p : memo_.proposals) {
      const ControllerMember* m = ensemble_.find(p.controller);
      if (m->kind == ControllerKind::adversarial) p.policy = *propose_one(*m, ctx);
    }
    return memo_;
  }

  void note_rollback(std::size_t before, const std::shared_ptr<const NetworkPolicy>& good, double now) {
    const auto& e = act_.log.entries();
    for (std::size_t i = before; i < e.size(); ++i) {
      if (e[i].kind != EnactKind::rollback) continue;
      res_.rollbacks.push_back({now, e[i].policy->id, serialize_policy(net_.active) == serialize_policy(*good)});
    }
  }

  bool step_switching(double now) {
    if (!active_routes_touch_down()) return false;
    const Topology& t = net_.topology;
    NetworkPolicy next = net_.active;
    bool changed = false;
    for (const auto& f : net_.flows) {
      auto& paths = next.routes[f.id];
      bool broken = false;
      for (const auto& p : paths)
        if (!detail::path_intact(t, p)) broken = true;
      if (!broken) continue;
      std::vector<Path> keep;
      for (const auto& p : paths)
        if (detail::path_intact(t, p)) keep.push_back(p);
      if (keep.empty()) {
        auto alt = shortest_path(t, f.source, f.destination);
        if (!alt) continue;
        keep.push_back(*alt);
      }
      paths = std::move(keep);
      changed = true;
    }
    if (!changed) return false;
    enact_direct(std::move(next), now, "switching");
    return true;
  }

  bool step_static(std::int64_t k, double now, const std::vector<double>& replica0) {
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      auto& s = streams_[i];
      const double x = buffer_.normalize(i, replica0[i]);
      if (k < warm_ticks_) s.static_norm.add(x);
      if (k == warm_ticks_ - 1 || (warm_ticks_ == 0 && k == 0)) {
        s.static_mean = s.static_norm.mean;
        s.static_sigma = std::sqrt(s.static_norm.variance());
      }
    }
    if (k < warm_ticks_) return false;
    const Topology& t = net_.topology;
    std::set<std::size_t> alerted;
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      const auto& s = streams_[i];
      const double x = buffer_.normalize(i, replica0[i]);
      const double sigma = std::max(s.static_sigma, kSigmaFloor);
      if (x > s.static_mean + static_drift_ * sigma + cfg_.static_detector.margin) alerted.insert(s.node);
    }
    if (alerted.empty()) {
      prev_alert_ = false;
      return false;
    }
    if (!prev_alert_) res_.actions.push_back({now, ActionKind::alert, 0, "static threshold"});
    prev_alert_ = true;
    NetworkPolicy next = net_.active;
    bool changed = false;
    PathFilter avoid;
    avoid.avoid_nodes = alerted;
    for (const auto& f : net_.flows) {
      auto& paths = next.routes[f.id];
      bool touches = false;
      for (const auto& p : paths)
        if (!detail::path_avoids(t, p, alerted)) touches = true;
      if (!touches) continue;
      auto alt = shortest_path(t, f.source, f.destination, avoid);
      if (!alt) continue;
      if (paths.size() == 1 && paths.front() == *alt) continue;
      paths = {*alt};
      changed = true;
    }
    if (changed) enact_direct(std::move(next), now, "static");
    return true;
  }

  // Baselines enact without shields, rate limiting or probation.
  void enact_direct(NetworkPolicy next, double now, const std::string& who) {
    next.id = net_.highest_id + 1;
    next.issued_by = who;
    next.issued_at = now;
    auto ptr = std::make_shared<const NetworkPolicy>(std::move(next));
    LogEntry e;
    e.previous = std::make_shared<const NetworkPolicy>(net_.active);
    snapshot_topology(net_.topology, e);
    apply_policy(net_, ptr, now, EnactKind::fresh);
    e.policy = ptr;
    e.enacted_at = now;
    e.tag = HealthTag::good;
    act_.log.append(std::move(e));
    res_.actions.push_back({now, ActionKind::reroute, ptr->id, who});
  }

  void finish() {
    const double dt = rc_.tick;
    const auto& ticks = res_.ticks;
    const std::size_t n = ticks.size();
    const double thr = cfg_.metrics.recovery_threshold;
    const auto hold = static_cast<std::size_t>(cfg_.metrics.recovery_ticks);
    // ok_run[i]: consecutive ticks from i on with C >= threshold.
    std::vector<std::size_t> ok_run(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) ok_run[i] = ticks[i].c >= thr ? ok_run[i + 1] + 1 : 0;
    auto index_of = [&](double t) {
      return static_cast<std::size_t>(std::clamp(std::ceil(t / dt - 1e-9), 0.0, static_cast<double>(n)));
    };
    for (auto& inc : res_.incidents) {
      const std::size_t a = index_of(inc.start);
      const std::size_t b = std::min(n, index_of(inc.end));
      for (std::size_t i = a; i < b; ++i)
        if (ticks[i].detected) {
          inc.t_detect = ticks[i].t;
          break;
        }
      std::optional<std::size_t> dip;
      for (std::size_t i = a; i < b; ++i)
        if (ticks[i].c < thr) {
          dip = i;
          break;
        }
      std::optional<std::size_t> rec;
      if (!dip) {
        rec = a;
      } else {
        inc.t_dip = ticks[*dip].t;
        for (std::size_t i = *dip; i < n; ++i)
          if (ok_run[i] >= hold) {
            rec = i;
            break;
          }
      }
      if (rec && *rec < n) {
        inc.t_recovery = static_cast<double>(*rec) * dt;
        inc.t_steady = static_cast<double>(*rec + hold) * dt;
      }
    }
    const double fthr = cfg_.metrics.failure_threshold;
    const auto fticks = static_cast<std::size_t>(cfg_.metrics.failure_ticks);
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
      run = ticks[i].c < fthr ? run + 1 : 0;
      if (run >= fticks) {
        res_.service_failure_at = ticks[i + 1 - fticks].t;
        break;
      }
    }
    PerformanceTrace tr;
    tr.tick_seconds = dt;
    tr.q.reserve(n);
    for (const auto& r : ticks) tr.q.push_back(r.q);
    for (const auto& ev : res_.schedule) {
      double dq = 0.0;
      if (ev.start() <= tr.t_end()) dq = measured_impact(tr, ev);
      res_.impacts.push_back({ev.spec.id, ev.spec.probability, dq});
    }
    res_.policy_log = act_.log.entries();
    for (const auto& m : ensemble_.members) res_.final_trust.push_back({m.id, m.trust});
  }

  RunConfig rc_;
  const ScenarioConfig& cfg_;
  RunResult res_;
  NetworkState net_;
  Actuator act_;
  std::unique_ptr<Transport> transport_;
  std::vector<std::uint32_t> flow_source_;
  std::vector<std::vector<std::uint32_t>> flow_routes_;
  std::uint64_t routes_revision_ = UINT64_MAX;
  std::vector<double> flow_acc_;
  std::vector<int> video_phase_;
  int on_ticks_ = 1;
  double t_baseline_ = 0.0;
  AttackSurface surface_;
  std::uint64_t topo_epoch_ = 0;
  struct MemoKey {
    std::uint64_t epoch = 0, revision = 0;
    const NetworkPolicy* good = nullptr;
    std::set<std::size_t> avoid;
    bool protect = false;
    bool operator==(const MemoKey&) const = default;
  };
  std::optional<MemoKey> memo_key_;
  ProposalRound memo_;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> down_key_;
  bool routes_down_ = false;
  std::map<std::size_t, std::vector<std::size_t>> bots_;
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::uint64_t, std::uint32_t>> flood_routes_;
  std::map<std::pair<std::size_t, std::size_t>, std::uint32_t> flood_sources_;
  std::map<std::pair<std::size_t, std::size_t>, double> flood_acc_;
  std::vector<detail::StreamRuntime> streams_;
  TimeSeriesBuffer buffer_{100};
  std::vector<AnomalyDetector> detectors_;
  double static_drift_ = 0.0;
  std::map<std::string, double> poisoned_;
  ControllerEnsemble ensemble_;
  ReliabilityState rel_;
  std::unique_ptr<RiTracker> ri_;
  std::unique_ptr<Rng> sensor_rng_, injection_rng_, adversary_rng_;
  std::int64_t warm_ticks_ = 0;
  std::int64_t retrain_ticks_ = 1;
  std::int64_t last_alert_tick_ = -1;
  bool prev_alert_ = false;
  std::set<std::size_t> avoid_;  // attack targets seen during the current alert
  double avoid_updated_ = 0.0;
  std::int64_t healthy_run_ = 0;
  std::int64_t last_change_tick_ = 0;
  std::uint64_t seen_revision_ = 0;
  std::deque<double> c_window_;
  double c_sum_ = 0.0;
  std::int64_t cum_generated_ = 0, cum_delivered_ = 0, cum_dropped_ = 0;
};

inline RunResult run(const RunConfig& rc) {
  Simulation sim(rc);
  return sim.run();
}

struct ShieldViolation {
  std::uint64_t policy_id = 0;
  double t = 0.0;
  ShieldRule rule = ShieldRule::none;
  std::string detail;
};

// Re-checks every fresh enactment against the topology it was enacted on.
// The initial policy and baseline reroutes are not shield-gated and skipped.
inline std::vector<ShieldViolation> revalidate_enactments(const ScenarioConfig& cfg, const RunResult& r) {
  std::vector<ShieldViolation> out;
  if (r.strategy != Strategy::proposed) return out;
  Topology base = build_topology(cfg);
  for (const auto& e : r.policy_log) {
    if (e.kind != EnactKind::fresh || !e.previous || !e.policy) continue;
    Topology t = base;
    for (std::size_t i = 0; i < e.link_up.size() && i < t.link_count(); ++i) t.set_link_up(i, e.link_up[i] != 0);
    for (std::size_t i = 0; i < e.node_up.size() && i < t.node_count(); ++i) t.set_node_up(i, e.node_up[i] != 0);
    auto v = shield_check(*e.policy, *e.previous, t, cfg.flows, cfg.shields);
    if (!v.accepted()) out.push_back({e.policy->id, e.enacted_at, v.rule, v.detail});
  }
  return out;
}

// Largest number of fresh, shield-gated enactments inside any window of
// `window` seconds, taken as the half-open interval (t - window, t].
inline int max_enactments_in_window(const RunResult& r, double window) {
  std::vector<double> ts;
  for (const auto& e : r.policy_log)
    if (e.kind == EnactKind::fresh && e.previous) ts.push_back(e.enacted_at);
  std::sort(ts.begin(), ts.end());
  int best = 0;
  std::size_t lo = 0;
  for (std::size_t hi = 0; hi < ts.size(); ++hi) {
    while (ts[lo] <= ts[hi] - window) ++lo;
    best = std::max(best, static_cast<int>(hi - lo + 1));
  }
  return best;
}

// Byte image of a result; doubles in hex so equal strings mean equal bits.
inline std::string serialize(const RunResult& r) {
  std::string out;
  out.reserve(r.ticks.size() * 160);
  char buf[512];
  auto put = [&](const char* fmt, auto... xs) {
    std::snprintf(buf, sizeof buf, fmt, xs...);
    out += buf;
  };
  put("%s|%s|%llu|%a|%a|%a|%a\n", r.scenario.c_str(), std::string(to_string(r.strategy)).c_str(),
      static_cast<unsigned long long>(r.seed), r.tick, r.warm_up, r.duration, r.t_baseline_bps);
  for (const auto& t : r.ticks)
    put("%a %a %a %a %a %a %a %a %a %a %d %d %d %lld %lld %lld %lld\n", t.t, t.q, t.c, t.p50, t.p95, t.p99, t.plr_pct,
        t.penalty_pct, t.reliability, t.ri, static_cast<int>(t.phase), t.detected, t.mitigated,
        static_cast<long long>(t.generated), static_cast<long long>(t.delivered), static_cast<long long>(t.dropped),
        static_cast<long long>(t.in_queue));
  for (const auto& p : r.phases) {
    put("phase %lld %lld %lld %lld:", static_cast<long long>(p.generated_legit), static_cast<long long>(p.delivered_legit),
        static_cast<long long>(p.dropped_legit), static_cast<long long>(p.ticks));
    for (const auto& [b, n] : p.urllc_latency.bins) put(" %lld=%lld", static_cast<long long>(b), static_cast<long long>(n));
    out += '\n';
  }
  for (const auto& a : r.actions)
    put("action %a %s %llu ", a.t, std::string(to_string(a.kind)).c_str(), static_cast<unsigned long long>(a.policy_id)),
        out += a.detail + '\n';
  for (const auto& e : r.policy_log) {
    put("log %a %d %d %d ", e.enacted_at, static_cast<int>(e.tag), static_cast<int>(e.kind), e.infeasible);
    out += serialize_policy(*e.policy) + '\n';
  }
  for (const auto& ev : r.schedule) put("event %s %s %a %a\n", ev.incident.c_str(), ev.spec.id.c_str(), ev.start(), ev.end());
  auto opt = [&](const std::optional<double>& x) {
    if (x) put("%a ", *x);
    else out += "- ";
  };
  for (const auto& inc : r.incidents) {
    put("incident %s %a %a ", inc.id.c_str(), inc.start, inc.end);
    opt(inc.t_detect);
    opt(inc.t_dip);
    opt(inc.t_recovery);
    opt(inc.t_steady);
    out += '\n';
  }
  for (const auto& i : r.impacts) put("impact %s %a %a\n", i.attack_id.c_str(), i.probability, i.delta_q);
  out += "failure ";
  opt(r.service_failure_at);
  put("\nconservation %d\n", r.conservation_ok);
  for (const auto& [id, tr] : r.final_trust) put("trust %s %a\n", id.c_str(), tr);
  for (const auto& rb : r.rollbacks) put("rollback %a %llu %d\n", rb.t, static_cast<unsigned long long>(rb.policy_id), rb.exact);
  put("mitigation %lld\n", static_cast<long long>(r.mitigation_ticks));
  return out;
}

}  // namespace resil
