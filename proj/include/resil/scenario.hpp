#pragma once

// Scenario files: schema, validation and topology construction.
//
// A scenario is a JSON or TOML document. Both are converted to the same JSON
// value and validated by one reader, so every error names the offending
// element the same way regardless of format. The `topology.preset` key
// expands the edge/MEC reference topology (IoT devices dual-homed to gNBs,
// gNBs to MEC servers, MEC servers to a core backbone) together with its
// default flows, telemetry streams, detectors and controller ensemble;
// explicit `nodes`, `links`, `flows` and `streams` entries are appended to
// whatever the preset generated.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "resil/error.hpp"
#include "resil/network.hpp"
#include "resil/reliability.hpp"

namespace resil {

using json = nlohmann::json;

enum class StreamKind { ingress_rate, queue_depth };

struct StreamSpec {
  std::string id;
  StreamKind kind = StreamKind::ingress_rate;
  std::string node;
  int replicas = 3;
  double lo = 0.0;  // normalization range
  double hi = 1.0;
  double noise_rel = 0.02;   // relative sensor noise (std)
  double noise_abs = 0.0;    // absolute sensor noise (std, stream units)
  int averaging_ticks = 10;  // ingress rate is reported as a trailing mean
};

enum class DetectorKind { ewma_zscore, rate_change };

struct DetectorSpec {
  std::string id;
  DetectorKind kind = DetectorKind::ewma_zscore;
  std::vector<std::string> streams;  // empty: every stream
  double alert_threshold = 0.9;
  double smoothing = 0.1;
};

struct StaticDetectorSpec {
  std::string id = "static";
  double margin = 0.3;  // normalized units above the frozen mean
};

enum class ControllerKind { shortest_path, disjoint_path, slice_protect, fallback, adversarial };

struct ControllerSpec {
  std::string id;
  ControllerKind kind = ControllerKind::shortest_path;
  double trust = 1.0;
};

struct EnsembleSpec {
  std::vector<ControllerSpec> controllers;
  std::map<TrafficClass, double> protect_slices;
  double beta = 0.5;
  double gamma = 0.05;
  double trust_floor = 0.05;
};

struct ShieldLimits {
  double u_max = 0.9;
  int min_disjoint_paths = 2;
  double delta_max = 0.5;

  void validate() const {
    if (!(u_max > 0.0 && u_max <= 1.0)) throw ConfigError("shields.u_max", "must lie in (0, 1]");
    if (min_disjoint_paths < 1) throw ConfigError("shields.min_disjoint_paths", "must be >= 1");
    if (!(delta_max > 0.0 && delta_max <= 1.0))
      throw ConfigError("shields.delta_max", "must lie in (0, 1]");
  }
};

struct RateLimiterSpec {
  int lambda_max = 5;
  double window = 60.0;
};

struct ActuationSpec {
  int probation_ticks = 50;
  double slo_latency_ms = 100.0;
  double slo_plr = 0.05;
  int slo_consecutive = 10;
};

enum class AttackKind { ddos_flood, data_injection, ai_poisoning, fiber_cut, station_outage };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::ddos_flood: return "ddos_flood";
    case AttackKind::data_injection: return "data_injection";
    case AttackKind::ai_poisoning: return "ai_poisoning";
    case AttackKind::fiber_cut: return "fiber_cut";
    case AttackKind::station_outage: return "station_outage";
  }
  return "?";
}

inline bool is_cyber(AttackKind k) {
  return k == AttackKind::ddos_flood || k == AttackKind::data_injection ||
         k == AttackKind::ai_poisoning;
}

struct AttackSpec {
  std::string id;
  AttackKind kind = AttackKind::ddos_flood;
  std::vector<std::string> targets;
  double start = 0.0;
  double duration = 1.0;
  double intensity = 0.0;
  double probability = 1.0;
  double ramp = 0.0;  // ddos_flood: seconds to reach full intensity
};

struct CoordinatedAttack {
  std::string id;
  AttackSpec cyber;
  AttackSpec physical;
  double alignment = 0.0;  // physical.start = cyber.start + alignment
  double probability = 1.0;
};

using AttackEntry = std::variant<AttackSpec, CoordinatedAttack>;

inline const std::string& attack_id(const AttackEntry& e) {
  return std::visit([](const auto& a) -> const std::string& { return a.id; }, e);
}
inline double attack_probability(const AttackEntry& e) {
  return std::visit([](const auto& a) { return a.probability; }, e);
}

struct RunSpec {
  double duration = 5000.0;
  double tick = 0.1;
  double warm_up = 100.0;
  int runs = 20;
  std::uint64_t seed = 1;
};

struct MetricsSpec {
  double w_availability = 1.0 / 3.0;
  double w_recovery = 1.0 / 3.0;
  double w_impact = 1.0 / 3.0;
  int ri_window_ticks = 600;
  double recovery_threshold = 0.98;
  int recovery_ticks = 100;
  double failure_threshold = 0.2;
  int failure_ticks = 50;
  int throughput_window_ticks = 10;
};

struct TrafficSpec {
  int video_period_ticks = 10;
  double video_duty = 0.8;
  double flood_packet_size = 8000.0;
};

struct ScenarioConfig {
  std::string name;
  std::vector<NodeSpec> nodes;
  std::vector<Link> links;
  std::vector<Flow> flows;
  std::map<TrafficClass, double> slices;
  TrafficSpec traffic;
  std::vector<StreamSpec> streams;
  int perception_window = 100;
  std::vector<DetectorSpec> detectors;
  StaticDetectorSpec static_detector;
  EnsembleSpec ensemble;
  FailureModel failure_model{0.0, 1e-5, 2e-5};
  ThresholdParams thresholds{0.9999, 0.85, -0.1, 0.0005};
  int resilience_window_ticks = 200;
  ShieldLimits shields;
  RateLimiterSpec rate_limiter;
  ActuationSpec actuation;
  double retrain_interval = 300.0;
  std::vector<AttackEntry> attacks;
  RunSpec run;
  MetricsSpec metrics;
};

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  bool has(const char* key) const { return j_.is_object() && j_.contains(key); }
  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  Reader child(const char* key) const {
    if (!has(key)) return Reader(empty_object(), at(key));
    const json& c = j_.at(key);
    if (!c.is_object()) throw ConfigError(at(key), "expected a table/object");
    return Reader(c, at(key));
  }

  double num(const char* key, double def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(key), "must be finite");
    return d;
  }
  double req_num(const char* key) const {
    if (!has(key)) throw ConfigError(at(key), "required field missing");
    return num(key, 0.0);
  }
  int integer(const char* key, int def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<int>();
  }
  std::uint64_t u64(const char* key, std::uint64_t def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
    return v.get<bool>();
  }
  std::string str(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string req_str(const char* key) const {
    if (!has(key)) throw ConfigError(at(key), "required field missing");
    return str(key, "");
  }
  std::vector<std::string> strings(const char* key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    const json& v = j_.at(key);
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of strings");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string())
        throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }
  // Array of objects; yields (reader, element path).
  std::vector<Reader> array(const char* key) const {
    std::vector<Reader> out;
    if (!has(key)) return out;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::string p = at(key) + "[" + std::to_string(i) + "]";
      if (!v[i].is_object()) throw ConfigError(p, "expected a table/object");
      out.emplace_back(v[i], p);
    }
    return out;
  }
  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

 private:
  static const json& empty_object() {
    static const json e = json::object();
    return e;
  }
  const json& j_;
  std::string path_;
};

inline std::map<TrafficClass, double> read_slices(const Reader& r, std::map<TrafficClass, double> def) {
  if (!r.raw().is_object() || r.raw().empty()) return def;
  std::map<TrafficClass, double> out;
  double sum = 0.0;
  for (auto it = r.raw().begin(); it != r.raw().end(); ++it) {
    auto c = parse_traffic_class(it.key());
    std::string where = r.path() + "." + it.key();
    if (!c) throw ConfigError(where, "unknown traffic class");
    if (!it.value().is_number()) throw ConfigError(where, "expected a number");
    double f = it.value().get<double>();
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(where, "fraction must lie in [0, 1]");
    out[*c] = f;
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw ConfigError(r.path(), "slice fractions sum above 1");
  return out;
}

inline AttackSpec read_attack_spec(const Reader& r, const std::string& fallback_id) {
  AttackSpec a;
  a.id = r.str("id", fallback_id);
  std::string kind = r.req_str("kind");
  if (kind == "ddos_flood") a.kind = AttackKind::ddos_flood;
  else if (kind == "data_injection") a.kind = AttackKind::data_injection;
  else if (kind == "ai_poisoning") a.kind = AttackKind::ai_poisoning;
  else if (kind == "fiber_cut") a.kind = AttackKind::fiber_cut;
  else if (kind == "station_outage") a.kind = AttackKind::station_outage;
  else throw ConfigError(r.at("kind"), "unknown attack kind '" + kind + "'");
  a.targets = r.strings("targets");
  if (a.targets.empty()) throw ConfigError(r.at("targets"), "at least one target required");
  a.start = r.num("start", 0.0);
  a.duration = r.num("duration", 1.0);
  a.intensity = r.num("intensity", 0.0);
  a.probability = r.num("probability", 1.0);
  a.ramp = r.num("ramp", 0.0);
  if (a.start < 0.0) throw ConfigError(r.at("start"), "must be >= 0");
  if (!(a.duration > 0.0)) throw ConfigError(r.at("duration"), "must be > 0");
  if (!(a.probability >= 0.0 && a.probability <= 1.0))
    throw ConfigError(r.at("probability"), "must lie in [0, 1]");
  if (a.intensity < 0.0) throw ConfigError(r.at("intensity"), "must be >= 0");
  if (a.ramp < 0.0) throw ConfigError(r.at("ramp"), "must be >= 0");
  return a;
}

struct PresetParams {
  int iot = 50, gnbs = 5, mecs = 5, edge = 3, core = 2;
  int urllc_devices = 10, video_devices = 15;
  double radio_capacity = 20e6, access_capacity = 30e6, backhaul_capacity = 100e6;
  double core_capacity = 1e9, control_capacity = 100e6;
  double radio_delay = 0.001, access_delay = 0.0005, backhaul_delay = 0.002, core_delay = 0.001;
  int buf_iot = 100, buf_gnb = 1000, buf_mec = 500, buf_edge = 500, buf_core = 2000;
  double telemetry_rate = 200e3, telemetry_packet = 2000;
  double urllc_rate = 1e6, urllc_packet = 800;
  double video_rate = 4e6, video_packet = 12000;
};

inline std::string idx_name(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

inline void expand_preset(const Reader& t, ScenarioConfig& cfg) {
  PresetParams p;
  p.iot = t.integer("iot_devices", p.iot);
  p.gnbs = t.integer("gnbs", p.gnbs);
  p.mecs = t.integer("mec_servers", p.mecs);
  p.edge = t.integer("edge_controllers", p.edge);
  p.core = t.integer("core_routers", p.core);
  p.urllc_devices = t.integer("urllc_devices", p.urllc_devices);
  p.video_devices = t.integer("video_devices", p.video_devices);
  p.radio_capacity = t.num("radio_capacity", p.radio_capacity);
  p.access_capacity = t.num("access_capacity", p.access_capacity);
  p.backhaul_capacity = t.num("backhaul_capacity", p.backhaul_capacity);
  p.core_capacity = t.num("core_capacity", p.core_capacity);
  p.buf_iot = t.integer("iot_buffer", p.buf_iot);
  p.buf_gnb = t.integer("gnb_buffer", p.buf_gnb);
  p.buf_mec = t.integer("mec_buffer", p.buf_mec);
  p.telemetry_rate = t.num("telemetry_rate", p.telemetry_rate);
  p.urllc_rate = t.num("urllc_rate", p.urllc_rate);
  p.video_rate = t.num("video_rate", p.video_rate);
  if (p.iot < 1 || p.gnbs < 2 || p.mecs < 1 || p.core < 1 || p.edge < 0)
    throw ConfigError(t.path(), "preset needs >= 1 IoT device, >= 2 gNBs, >= 1 MEC and >= 1 core router");
  if (p.urllc_devices + p.video_devices > p.iot)
    throw ConfigError(t.path(), "urllc_devices + video_devices exceeds iot_devices");

  auto iot = [&](int i) { return idx_name("iot", i, 2); };
  auto gnb = [&](int j) { return idx_name("gnb", j, 1); };
  auto mec = [&](int j) { return idx_name("mec", j, 1); };
  auto ec = [&](int k) { return idx_name("ec", k, 1); };
  auto core = [&](int k) { return idx_name("core", k, 1); };

  for (int i = 0; i < p.iot; ++i) cfg.nodes.push_back({iot(i), NodeRole::iot_device, {}, p.buf_iot, true});
  for (int j = 0; j < p.gnbs; ++j) cfg.nodes.push_back({gnb(j), NodeRole::gnb, {"ran-" + gnb(j)}, p.buf_gnb, true});
  for (int j = 0; j < p.mecs; ++j)
    cfg.nodes.push_back({mec(j), NodeRole::mec_server, {"mec-app-" + mec(j), "detector-" + mec(j)}, p.buf_mec, true});
  for (int k = 0; k < p.edge; ++k)
    cfg.nodes.push_back({ec(k), NodeRole::edge_controller, {"controller-" + ec(k)}, p.buf_edge, true});
  for (int k = 0; k < p.core; ++k) cfg.nodes.push_back({core(k), NodeRole::core_router, {}, p.buf_core, true});

  auto link = [&](const std::string& a, const std::string& b, double cap, double d) {
    cfg.links.push_back({a + "-" + b, a, b, cap, d, true});
  };
  for (int i = 0; i < p.iot; ++i) {
    link(iot(i), gnb(i % p.gnbs), p.radio_capacity, p.radio_delay);
    link(iot(i), gnb((i + 1) % p.gnbs), p.radio_capacity, p.radio_delay);
  }
  // gNB j serves MEC j and MEC j-1.
  for (int j = 0; j < p.gnbs; ++j) {
    std::set<int> served{j % p.mecs, (j - 1 + p.mecs) % p.mecs};
    for (int m : served) link(gnb(j), mec(m), p.access_capacity, p.access_delay);
  }
  for (int m = 0; m < p.mecs; ++m)
    for (int k = 0; k < p.core; ++k) link(mec(m), core(k), p.backhaul_capacity, p.backhaul_delay);
  for (int k = 0; k < p.edge; ++k) {
    for (int c = 0; c < p.core; ++c) link(ec(k), core(c), p.control_capacity, p.backhaul_delay);
    link(ec(k), mec(k % p.mecs), p.control_capacity, p.access_delay);
  }
  for (int a = 0; a + 1 < p.core; ++a) link(core(a), core(a + 1), p.core_capacity, p.core_delay);

  for (int i = 0; i < p.iot; ++i)
    cfg.flows.push_back({"tel-" + iot(i), iot(i), mec(i % p.mecs), TrafficClass::telemetry,
                         p.telemetry_rate, p.telemetry_packet});
  for (int i = 0; i < p.urllc_devices; ++i)
    cfg.flows.push_back({"urllc-" + iot(i), iot(i), mec(i % p.mecs), TrafficClass::urllc, p.urllc_rate,
                         p.urllc_packet});
  for (int i = p.urllc_devices; i < p.urllc_devices + p.video_devices; ++i)
    cfg.flows.push_back({"video-" + iot(i), iot(i), core(0), TrafficClass::video, p.video_rate,
                         p.video_packet});

  const double ingress_hi = 2.0 * p.access_capacity;
  for (int m = 0; m < p.mecs; ++m)
    cfg.streams.push_back({mec(m) + ".ingress", StreamKind::ingress_rate, mec(m), 3, 0.0, ingress_hi,
                           0.02, 0.0, 10});
  for (int j = 0; j < p.gnbs; ++j)
    cfg.streams.push_back({gnb(j) + ".queue", StreamKind::queue_depth, gnb(j), 3, 0.0,
                           static_cast<double>(p.buf_gnb), 0.02, 0.005 * p.buf_gnb, 1});
}

}  // namespace detail

// Validates a parsed scenario document and builds the typed configuration.
inline ScenarioConfig parse_scenario(const json& doc) {
  using detail::Reader;
  if (!doc.is_object()) throw ConfigError("", "scenario must be a table/object");
  Reader root(doc, "");
  ScenarioConfig cfg;
  cfg.name = root.str("name", "scenario");

  Reader topo = root.child("topology");
  std::string preset = topo.str("preset", "");
  if (!preset.empty()) {
    if (preset != "mec_edge") throw ConfigError(topo.at("preset"), "unknown preset '" + preset + "'");
    detail::expand_preset(topo, cfg);
  }
  for (const auto& n : topo.array("nodes")) {
    NodeSpec s;
    s.id = n.req_str("id");
    std::string role = n.req_str("role");
    auto r = parse_node_role(role);
    if (!r) throw ConfigError(n.at("role"), "unknown role '" + role + "'");
    s.role = *r;
    s.hosted_subsystems = n.strings("hosted_subsystems");
    s.buffer_capacity = n.integer("buffer_capacity", 1000);
    s.up = n.boolean("up", true);
    cfg.nodes.push_back(std::move(s));
  }
  for (const auto& l : topo.array("links")) {
    Link k;
    k.a = l.req_str("a");
    k.b = l.req_str("b");
    k.id = l.str("id", k.a + "-" + k.b);
    k.capacity = l.req_num("capacity");
    k.propagation_delay = l.num("propagation_delay", 0.0);
    k.up = l.boolean("up", true);
    cfg.links.push_back(std::move(k));
  }
  for (const auto& f : root.array("flows")) {
    Flow fl;
    fl.id = f.req_str("id");
    fl.source = f.req_str("source");
    fl.destination = f.req_str("destination");
    std::string cls = f.req_str("class");
    auto c = parse_traffic_class(cls);
    if (!c) throw ConfigError(f.at("class"), "unknown traffic class '" + cls + "'");
    fl.traffic_class = *c;
    fl.offered_rate = f.req_num("offered_rate");
    fl.packet_size = f.num("packet_size", 8000.0);
    if (!(fl.offered_rate > 0.0)) throw ConfigError(f.at("offered_rate"), "must be > 0");
    if (!(fl.packet_size > 0.0)) throw ConfigError(f.at("packet_size"), "must be > 0");
    cfg.flows.push_back(std::move(fl));
  }
  // no reservations unless configured; everything shares best effort
  cfg.slices = detail::read_slices(root.child("slices"), {});
  {
    Reader tr = root.child("traffic");
    cfg.traffic.video_period_ticks = tr.integer("video_period_ticks", cfg.traffic.video_period_ticks);
    cfg.traffic.video_duty = tr.num("video_duty", cfg.traffic.video_duty);
    cfg.traffic.flood_packet_size = tr.num("flood_packet_size", cfg.traffic.flood_packet_size);
    if (cfg.traffic.video_period_ticks < 1) throw ConfigError(tr.at("video_period_ticks"), "must be >= 1");
    if (!(cfg.traffic.video_duty > 0.0 && cfg.traffic.video_duty <= 1.0))
      throw ConfigError(tr.at("video_duty"), "must lie in (0, 1]");
    if (!(cfg.traffic.flood_packet_size > 0.0)) throw ConfigError(tr.at("flood_packet_size"), "must be > 0");
  }
  for (const auto& s : root.array("streams")) {
    StreamSpec st;
    st.id = s.req_str("id");
    std::string kind = s.str("kind", "ingress_rate");
    if (kind == "ingress_rate") st.kind = StreamKind::ingress_rate;
    else if (kind == "queue_depth") st.kind = StreamKind::queue_depth;
    else throw ConfigError(s.at("kind"), "unknown stream kind '" + kind + "'");
    st.node = s.req_str("node");
    st.replicas = s.integer("replicas", 3);
    if (s.has("range")) {
      const json& r = s.raw().at("range");
      if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
        throw ConfigError(s.at("range"), "expected [lo, hi]");
      st.lo = r[0].get<double>();
      st.hi = r[1].get<double>();
    } else {
      throw ConfigError(s.at("range"), "required field missing");
    }
    if (!(st.hi > st.lo)) throw ConfigError(s.at("range"), "hi must exceed lo");
    if (st.replicas < 1) throw ConfigError(s.at("replicas"), "must be >= 1");
    st.noise_rel = s.num("noise_rel", 0.02);
    st.noise_abs = s.num("noise_abs", 0.0);
    st.averaging_ticks = s.integer("averaging_ticks", st.kind == StreamKind::ingress_rate ? 10 : 1);
    if (st.averaging_ticks < 1) throw ConfigError(s.at("averaging_ticks"), "must be >= 1");
    cfg.streams.push_back(std::move(st));
  }
  cfg.perception_window = root.child("perception").integer("window", 100);
  if (cfg.perception_window < 5) throw ConfigError("perception.window", "must be >= 5");

  auto detectors = root.array("detectors");
  if (detectors.empty() && !preset.empty()) {
    cfg.detectors.push_back({"d_ewma", DetectorKind::ewma_zscore, {}, 0.9, 0.1});
    cfg.detectors.push_back({"d_rate", DetectorKind::rate_change, {}, 0.9, 0.1});
  }
  for (const auto& d : detectors) {
    DetectorSpec ds;
    ds.id = d.req_str("id");
    std::string kind = d.req_str("kind");
    if (kind == "ewma_zscore") ds.kind = DetectorKind::ewma_zscore;
    else if (kind == "rate_change") ds.kind = DetectorKind::rate_change;
    else throw ConfigError(d.at("kind"), "unknown detector kind '" + kind + "'");
    ds.streams = d.strings("streams");
    ds.alert_threshold = d.num("alert_threshold", 0.9);
    ds.smoothing = d.num("smoothing", 0.1);
    if (!(ds.alert_threshold >= 0.0 && ds.alert_threshold <= 1.0))
      throw ConfigError(d.at("alert_threshold"), "must lie in [0, 1]");
    if (!(ds.smoothing > 0.0 && ds.smoothing <= 1.0))
      throw ConfigError(d.at("smoothing"), "must lie in (0, 1]");
    cfg.detectors.push_back(std::move(ds));
  }
  {
    Reader sd = root.child("static_detector");
    cfg.static_detector.id = sd.str("id", "static");
    cfg.static_detector.margin = sd.num("margin", 0.3);
    if (!(cfg.static_detector.margin > 0.0)) throw ConfigError(sd.at("margin"), "must be > 0");
  }
  {
    Reader en = root.child("ensemble");
    auto ctrls = en.array("controllers");
    if (ctrls.empty() && !preset.empty()) {
      cfg.ensemble.controllers = {{"c1", ControllerKind::shortest_path, 1.0},
                                  {"c2", ControllerKind::disjoint_path, 1.0},
                                  {"c3", ControllerKind::slice_protect, 1.0},
                                  {"c4", ControllerKind::fallback, 1.0}};
    }
    for (const auto& c : ctrls) {
      ControllerSpec cs;
      cs.id = c.req_str("id");
      std::string kind = c.req_str("kind");
      if (kind == "shortest_path") cs.kind = ControllerKind::shortest_path;
      else if (kind == "disjoint_path") cs.kind = ControllerKind::disjoint_path;
      else if (kind == "slice_protect") cs.kind = ControllerKind::slice_protect;
      else if (kind == "fallback") cs.kind = ControllerKind::fallback;
      else if (kind == "adversarial") cs.kind = ControllerKind::adversarial;
      else throw ConfigError(c.at("kind"), "unknown controller kind '" + kind + "'");
      cs.trust = c.num("trust", 1.0);
      if (!(cs.trust >= 0.0 && cs.trust <= 1.0)) throw ConfigError(c.at("trust"), "must lie in [0, 1]");
      cfg.ensemble.controllers.push_back(std::move(cs));
    }
    cfg.ensemble.protect_slices = detail::read_slices(
        en.child("protect_slices"),
        {{TrafficClass::urllc, 0.15}, {TrafficClass::telemetry, 0.15}, {TrafficClass::video, 0.6}});
    cfg.ensemble.beta = en.num("beta", 0.5);
    cfg.ensemble.gamma = en.num("gamma", 0.05);
    cfg.ensemble.trust_floor = en.num("trust_floor", 0.05);
    if (!(cfg.ensemble.beta > 0.0 && cfg.ensemble.beta < 1.0)) throw ConfigError(en.at("beta"), "must lie in (0, 1)");
    if (!(cfg.ensemble.gamma >= 0.0)) throw ConfigError(en.at("gamma"), "must be >= 0");
    if (!(cfg.ensemble.trust_floor > 0.0 && cfg.ensemble.trust_floor <= 1.0))
      throw ConfigError(en.at("trust_floor"), "must lie in (0, 1]");
  }
  {
    Reader fm = root.child("failure_model");
    double mtbf = fm.num("mtbf", 0.0);
    cfg.failure_model.lambda_ai = fm.num("lambda_ai", 1e-5);
    cfg.failure_model.lambda_phy = fm.num("lambda_phy", 2e-5);
    cfg.failure_model.lambda_hw = mtbf > 0.0 ? 1.0 / mtbf : fm.num("lambda_hw", 0.0);
    try {
      cfg.failure_model.validate();
    } catch (const DomainError& e) {
      throw ConfigError("failure_model", e.what());
    }
  }
  {
    Reader th = root.child("thresholds");
    cfg.thresholds.r_min = th.num("r_min", 0.9999);
    cfg.thresholds.r_req = th.num("r_req", 0.85);
    cfg.thresholds.alpha = th.num("alpha", -0.1);
    cfg.thresholds.delta = th.num("delta", 0.0005);
    cfg.resilience_window_ticks = th.integer("resilience_window_ticks", 200);
    try {
      cfg.thresholds.validate();
    } catch (const DomainError& e) {
      throw ConfigError("thresholds", e.what());
    }
    if (cfg.resilience_window_ticks < 2) throw ConfigError(th.at("resilience_window_ticks"), "must be >= 2");
  }
  {
    Reader sh = root.child("shields");
    cfg.shields.u_max = sh.num("u_max", 0.9);
    cfg.shields.min_disjoint_paths = sh.integer("min_disjoint_paths", 2);
    cfg.shields.delta_max = sh.num("delta_max", 0.5);
    cfg.shields.validate();
  }
  {
    Reader rl = root.child("rate_limiter");
    cfg.rate_limiter.lambda_max = rl.integer("lambda_max", 5);
    cfg.rate_limiter.window = rl.num("window", 60.0);
    if (cfg.rate_limiter.lambda_max < 1) throw ConfigError(rl.at("lambda_max"), "must be >= 1");
    if (!(cfg.rate_limiter.window > 0.0)) throw ConfigError(rl.at("window"), "must be > 0");
  }
  {
    Reader ac = root.child("actuation");
    cfg.actuation.probation_ticks = ac.integer("probation_ticks", 50);
    cfg.actuation.slo_latency_ms = ac.num("slo_latency_ms", 100.0);
    cfg.actuation.slo_plr = ac.num("slo_plr", 0.05);
    cfg.actuation.slo_consecutive = ac.integer("slo_consecutive", 10);
    if (cfg.actuation.probation_ticks < 0) throw ConfigError(ac.at("probation_ticks"), "must be >= 0");
    if (cfg.actuation.slo_consecutive < 1) throw ConfigError(ac.at("slo_consecutive"), "must be >= 1");
  }
  cfg.retrain_interval = root.child("retrain").num("interval", 300.0);
  if (!(cfg.retrain_interval > 0.0)) throw ConfigError("retrain.interval", "must be > 0");

  for (const auto& a : root.array("attacks")) {
    std::string fallback = "attack" + std::to_string(cfg.attacks.size() + 1);
    if (a.str("kind", "") == "coordinated") {
      CoordinatedAttack ca;
      ca.id = a.str("id", fallback);
      ca.cyber = detail::read_attack_spec(a.child("cyber"), ca.id + ".cyber");
      ca.physical = detail::read_attack_spec(a.child("physical"), ca.id + ".physical");
      ca.alignment = a.num("alignment", 0.0);
      ca.probability = a.num("probability", ca.cyber.probability);
      if (!is_cyber(ca.cyber.kind)) throw ConfigError(a.at("cyber.kind"), "cyber component must be a cyber attack");
      if (is_cyber(ca.physical.kind))
        throw ConfigError(a.at("physical.kind"), "physical component must be fiber_cut or station_outage");
      if (!(ca.probability >= 0.0 && ca.probability <= 1.0))
        throw ConfigError(a.at("probability"), "must lie in [0, 1]");
      ca.physical.start = ca.cyber.start + ca.alignment;
      if (ca.physical.start < 0.0) throw ConfigError(a.at("alignment"), "physical start before 0");
      ca.cyber.probability = ca.physical.probability = ca.probability;
      cfg.attacks.emplace_back(std::move(ca));
    } else {
      cfg.attacks.emplace_back(detail::read_attack_spec(a, fallback));
    }
  }

  {
    Reader r = root.child("run");
    cfg.run.duration = r.num("duration", 5000.0);
    cfg.run.tick = r.num("tick", 0.1);
    cfg.run.warm_up = r.num("warm_up", 100.0);
    cfg.run.runs = r.integer("runs", 20);
    cfg.run.seed = r.u64("seed", 1);
    if (!(cfg.run.tick > 0.0)) throw ConfigError(r.at("tick"), "must be > 0");
    if (!(cfg.run.warm_up >= 0.0)) throw ConfigError(r.at("warm_up"), "must be >= 0");
    if (!(cfg.run.duration > cfg.run.warm_up)) throw ConfigError(r.at("duration"), "must exceed warm_up");
    if (cfg.run.runs < 1) throw ConfigError(r.at("runs"), "must be >= 1");
  }
  {
    Reader m = root.child("metrics");
    if (m.has("ri_weights")) {
      const json& w = m.raw().at("ri_weights");
      if (!w.is_array() || w.size() != 3) throw ConfigError(m.at("ri_weights"), "expected [w_a, w_r, w_m]");
      for (std::size_t i = 0; i < 3; ++i)
        if (!w[i].is_number()) throw ConfigError(m.at("ri_weights"), "weights must be numbers");
      cfg.metrics.w_availability = w[0].get<double>();
      cfg.metrics.w_recovery = w[1].get<double>();
      cfg.metrics.w_impact = w[2].get<double>();
      double s = cfg.metrics.w_availability + cfg.metrics.w_recovery + cfg.metrics.w_impact;
      if (cfg.metrics.w_availability < 0 || cfg.metrics.w_recovery < 0 || cfg.metrics.w_impact < 0 ||
          std::abs(s - 1.0) > 1e-9)
        throw ConfigError(m.at("ri_weights"), "weights must be non-negative and sum to 1");
    }
    cfg.metrics.ri_window_ticks = m.integer("ri_window_ticks", 600);
    cfg.metrics.recovery_threshold = m.num("recovery_threshold", 0.98);
    cfg.metrics.recovery_ticks = m.integer("recovery_ticks", 100);
    cfg.metrics.failure_threshold = m.num("failure_threshold", 0.2);
    cfg.metrics.failure_ticks = m.integer("failure_ticks", 50);
    cfg.metrics.throughput_window_ticks = m.integer("throughput_window_ticks", 10);
    if (cfg.metrics.ri_window_ticks < 1 || cfg.metrics.recovery_ticks < 1 || cfg.metrics.failure_ticks < 1 ||
        cfg.metrics.throughput_window_ticks < 1)
      throw ConfigError(m.path().empty() ? "metrics" : m.path(), "tick windows must be >= 1");
  }
  return cfg;
}

// Builds the topology and checks every cross reference of the scenario:
// link endpoints, flow endpoints, stream nodes, detector streams and attack
// targets. The graph must be connected.
inline Topology build_topology(const ScenarioConfig& cfg) {
  Topology t;
  for (const auto& n : cfg.nodes) t.add_node(n);
  for (const auto& l : cfg.links) t.add_link(l);
  if (t.node_count() < 2) throw ConfigError("topology", "at least two nodes required");
  {
    // Connectivity is a property of the configured graph, independent of
    // elements the scenario starts in the down state.
    Topology all = t;
    for (std::size_t i = 0; i < all.node_count(); ++i) all.set_node_up(i, true);
    for (std::size_t i = 0; i < all.link_count(); ++i) all.set_link_up(i, true);
    if (!all.connected()) throw ConfigError("topology", "graph is not connected");
  }
  std::set<std::string> flow_ids;
  for (const auto& f : cfg.flows) {
    std::string where = "flows." + f.id;
    if (!flow_ids.insert(f.id).second) throw ConfigError(where, "duplicate flow id");
    if (!t.node_index(f.source)) throw ConfigError(where + ".source", "unknown node '" + f.source + "'");
    if (!t.node_index(f.destination))
      throw ConfigError(where + ".destination", "unknown node '" + f.destination + "'");
    if (f.source == f.destination) throw ConfigError(where, "source equals destination");
  }
  std::set<std::string> stream_ids;
  for (const auto& s : cfg.streams) {
    if (!stream_ids.insert(s.id).second) throw ConfigError("streams." + s.id, "duplicate stream id");
    if (!t.node_index(s.node)) throw ConfigError("streams." + s.id + ".node", "unknown node '" + s.node + "'");
  }
  std::set<std::string> detector_ids{cfg.static_detector.id};
  for (const auto& d : cfg.detectors) {
    if (!detector_ids.insert(d.id).second) throw ConfigError("detectors." + d.id, "duplicate detector id");
    for (const auto& s : d.streams)
      if (!stream_ids.count(s)) throw ConfigError("detectors." + d.id + ".streams", "unknown stream '" + s + "'");
  }
  std::set<std::string> ctrl_ids;
  for (const auto& c : cfg.ensemble.controllers)
    if (!ctrl_ids.insert(c.id).second) throw ConfigError("ensemble.controllers." + c.id, "duplicate controller id");

  std::set<std::string> attack_ids;
  auto check_spec = [&](const AttackSpec& a) {
    std::string where = "attacks." + a.id + ".targets";
    for (const auto& target : a.targets) {
      bool ok = false;
      switch (a.kind) {
        case AttackKind::fiber_cut: ok = t.link_index(target).has_value(); break;
        case AttackKind::station_outage:
        case AttackKind::ddos_flood: ok = t.node_index(target).has_value(); break;
        case AttackKind::data_injection: ok = stream_ids.count(target) > 0; break;
        case AttackKind::ai_poisoning: ok = detector_ids.count(target) > 0; break;
      }
      if (!ok) throw ConfigError(where, "target '" + target + "' is not a valid " + std::string(to_string(a.kind)) + " target");
    }
    if (a.kind == AttackKind::data_injection && !(a.intensity >= 0.0 && a.intensity <= 1.0))
      throw ConfigError("attacks." + a.id + ".intensity", "corruption fraction must lie in [0, 1]");
  };
  for (const auto& e : cfg.attacks) {
    if (!attack_ids.insert(attack_id(e)).second) throw ConfigError("attacks." + attack_id(e), "duplicate attack id");
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, AttackSpec>) {
            check_spec(a);
          } else {
            check_spec(a.cyber);
            check_spec(a.physical);
          }
        },
        e);
  }
  return t;
}

// TOML document -> JSON value (tables, arrays, strings, numbers, booleans).
inline json toml_to_json(const toml::node& n) {
  if (auto t = n.as_table()) {
    json o = json::object();
    for (auto&& [k, v] : *t) o[std::string(k.str())] = toml_to_json(v);
    return o;
  }
  if (auto a = n.as_array()) {
    json arr = json::array();
    for (auto&& v : *a) arr.push_back(toml_to_json(v));
    return arr;
  }
  if (auto s = n.as_string()) return s->get();
  if (auto i = n.as_integer()) return i->get();
  if (auto f = n.as_floating_point()) return f->get();
  if (auto b = n.as_boolean()) return b->get();
  throw ConfigError("", "unsupported TOML value (dates and times are not part of the schema)");
}

inline json parse_scenario_text(const std::string& text, bool is_toml) {
  if (is_toml) {
    try {
      return toml_to_json(toml::parse(text));
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << "TOML syntax error at line " << e.source().begin.line << ": " << e.description();
      throw ConfigError("", os.str());
    }
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("JSON syntax error: ") + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const bool is_toml = path.extension() == ".toml";
  ScenarioConfig cfg = parse_scenario(parse_scenario_text(ss.str(), is_toml));
  build_topology(cfg);
  return cfg;
}

}  // namespace resil
