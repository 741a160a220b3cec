#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "resil/engine.hpp"
#include "resil/error.hpp"
#include "resil/reliability.hpp"

namespace resil {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fraction of runs with no service failure in [0, t].
inline double empirical_reliability(std::span<const std::optional<double>> failure_times, double t) {
  if (failure_times.empty()) throw DomainError("empirical reliability needs at least one run");
  std::size_t alive = 0;
  for (const auto& f : failure_times)
    if (!f || *f > t) ++alive;
  return static_cast<double>(alive) / static_cast<double>(failure_times.size());
}

inline void validate_weights(const MetricsSpec& m) {
  const double w[3] = {m.w_availability, m.w_recovery, m.w_impact};
  for (double x : w)
    if (!(x >= 0.0)) throw ConfigError("metrics.weights", "weights must be non-negative");
  if (std::abs(w[0] + w[1] + w[2] - 1.0) > 1e-9) throw ConfigError("metrics.weights", "weights must sum to 1");
  if (m.ri_window_ticks < 1) throw ConfigError("metrics.ri_window_ticks", "must be >= 1");
}

// RI(t) recomputed from the C(t) series of a run.
inline std::vector<double> resilience_index_series(const RunResult& r, const MetricsSpec& m) {
  validate_weights(m);
  RiTracker tr(m);
  std::vector<double> out;
  out.reserve(r.ticks.size());
  for (const auto& t : r.ticks) out.push_back(tr.push(t.c));
  return out;
}

struct ResponseTimes {
  double mttd = kNaN;  // seconds, NaN if nothing was detected
  double mttr = kNaN;
  double t_resp = kNaN;
  std::size_t incidents = 0;
  std::size_t undetected = 0;
  std::size_t unrecovered = 0;  // detected but never back to steady service
};

// Detected incidents only; a detected incident that never recovers is
// counted separately and left out of MTTR.
inline ResponseTimes detection_and_repair_times(const RunResult& r) {
  if (r.incidents.empty()) throw DomainError("run has no attacks");
  ResponseTimes out;
  out.incidents = r.incidents.size();
  double sd = 0.0, sr = 0.0;
  std::size_t nd = 0, nr = 0;
  for (const auto& inc : r.incidents) {
    if (!inc.t_detect) {
      ++out.undetected;
      continue;
    }
    sd += *inc.t_detect - inc.start;
    ++nd;
    if (!inc.t_recovery) {
      ++out.unrecovered;
      continue;
    }
    sr += std::max(0.0, *inc.t_recovery - *inc.t_detect);
    ++nr;
  }
  if (nd) out.mttd = sd / static_cast<double>(nd);
  if (nr) out.mttr = sr / static_cast<double>(nr);
  if (nd && nr) out.t_resp = response_time(out.mttd, out.mttr);
  return out;
}

struct LatencyTriple {
  double p50 = kNaN, p95 = kNaN, p99 = kNaN;
};

inline LatencyTriple latency_of(const LatencyHistogram& h) {
  return {h.percentile(0.50), h.percentile(0.95), h.percentile(0.99)};
}

inline double phase_plr_pct(const PhaseStats& p) {
  if (p.generated_legit == 0) return kNaN;
  return 100.0 * static_cast<double>(p.dropped_legit) / static_cast<double>(p.generated_legit);
}

// Scalar KPIs of one run, used for paired comparisons.
struct RunSummary {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double mean_ri = kNaN;          // after warm-up
  double ri_std_after_threat = kNaN;
  double mean_q = kNaN;
  double peak_p99_ms = kNaN;      // largest per-tick urllc p99 after warm-up
  std::array<LatencyTriple, kPhases> latency;
  std::array<double, kPhases> plr_pct{};
  double peak_penalty_pct = kNaN;
  double penalty_window_s = 0.0;  // time spent with C below the recovery threshold
  double resilience_area = kNaN;
  double expected_impact = kNaN;
  ResponseTimes response;
  std::optional<double> service_failure_s;
  std::size_t enactments = 0;  // fresh, non-initial
  std::size_t rollbacks = 0;
  bool conservation_ok = true;
};

inline double run_resilience_area(const RunResult& r) {
  if (r.incidents.empty()) return kNaN;
  PerformanceTrace tr;
  tr.tick_seconds = r.tick;
  tr.q.reserve(r.ticks.size());
  for (const auto& t : r.ticks) tr.q.push_back(t.q);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& inc : r.incidents) {
    if (!inc.t_dip) {
      sum += 1.0;  // service never degraded
      ++n;
      continue;
    }
    if (!inc.t_recovery || !inc.t_steady) continue;
    tr.t_threat = inc.start;
    tr.t_recovery = *inc.t_recovery;
    tr.t_steady = *inc.t_steady;
    if (*tr.t_steady > tr.t_end()) continue;
    sum += resilience_curve_area(tr);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline RunSummary summarize(const RunResult& r, std::size_t index, const MetricsSpec& m) {
  RunSummary s;
  s.index = index;
  s.seed = r.seed;
  double first_threat = std::numeric_limits<double>::infinity();
  for (const auto& inc : r.incidents) first_threat = std::min(first_threat, inc.start);
  double ri_sum = 0.0, q_sum = 0.0, peak_pen = -std::numeric_limits<double>::infinity(), peak99 = kNaN;
  std::size_t n = 0, degraded = 0;
  std::vector<double> after;
  for (const auto& t : r.ticks) {
    if (t.phase == Phase::warmup) continue;
    ri_sum += t.ri;
    q_sum += t.q;
    ++n;
    peak_pen = std::max(peak_pen, t.penalty_pct);
    if (!std::isnan(t.p99) && (std::isnan(peak99) || t.p99 > peak99)) peak99 = t.p99;
    if (t.c < m.recovery_threshold) ++degraded;
    if (t.t >= first_threat) after.push_back(t.ri);
  }
  if (n) {
    s.mean_ri = ri_sum / static_cast<double>(n);
    s.mean_q = q_sum / static_cast<double>(n);
    s.peak_penalty_pct = peak_pen;
  }
  s.peak_p99_ms = peak99;
  s.penalty_window_s = static_cast<double>(degraded) * r.tick;
  if (!after.empty()) {
    double mu = 0.0;
    for (double x : after) mu += x;
    mu /= static_cast<double>(after.size());
    double var = 0.0;
    for (double x : after) var += (x - mu) * (x - mu);
    s.ri_std_after_threat = std::sqrt(var / static_cast<double>(after.size()));
  }
  for (std::size_t p = 0; p < kPhases; ++p) {
    s.latency[p] = latency_of(r.phases[p].urllc_latency);
    s.plr_pct[p] = phase_plr_pct(r.phases[p]);
  }
  s.resilience_area = run_resilience_area(r);
  if (!r.impacts.empty()) s.expected_impact = expected_attack_impact(r.impacts);
  if (!r.incidents.empty()) s.response = detection_and_repair_times(r);
  s.service_failure_s = r.service_failure_at;
  for (const auto& e : r.policy_log) {
    if (e.kind == EnactKind::rollback) ++s.rollbacks;
    else if (e.policy && e.policy->issued_by != "initial") ++s.enactments;
  }
  s.conservation_ok = r.conservation_ok;
  return s;
}

// Per-tick columns kept from each run for the batch series.
struct SeriesColumns {
  std::vector<double> t, q, c, p50, p95, p99, plr, penalty, reliability, ri;
  std::vector<Phase> phase;

  static SeriesColumns from(const RunResult& r) {
    SeriesColumns s;
    const auto n = r.ticks.size();
    for (auto* v : {&s.t, &s.q, &s.c, &s.p50, &s.p95, &s.p99, &s.plr, &s.penalty, &s.reliability, &s.ri})
      v->reserve(n);
    for (const auto& x : r.ticks) {
      s.t.push_back(x.t);
      s.q.push_back(x.q);
      s.c.push_back(x.c);
      s.p50.push_back(x.p50);
      s.p95.push_back(x.p95);
      s.p99.push_back(x.p99);
      s.plr.push_back(x.plr_pct);
      s.penalty.push_back(x.penalty_pct);
      s.reliability.push_back(x.reliability);
      s.ri.push_back(x.ri);
      s.phase.push_back(x.phase);
    }
    return s;
  }
  std::size_t size() const { return t.size(); }
};

struct KpiReport {
  std::string scenario;
  Strategy strategy = Strategy::proposed;
  std::size_t runs = 0;
  std::uint64_t master_seed = 0;
  double tick = 0.1;
  // R(t) sampled every `curve_step` seconds
  double curve_step = 10.0;
  std::vector<std::pair<double, double>> reliability_curve;
  double time_above_0_9 = 0.0;  // seconds until R(t) first drops below 0.9
  SeriesColumns series;         // per-tick mean across runs (NaN-skipping)
  std::array<LatencyTriple, kPhases> latency;
  std::array<double, kPhases> plr_pct{};
  double mean_ri = kNaN;
  double ri_std_after_threat = kNaN;
  double peak_penalty_pct = kNaN;
  double penalty_window_s = kNaN;
  double resilience_area = kNaN;
  double mttd = kNaN, mttr = kNaN, t_resp = kNaN;
  std::size_t undetected = 0, unrecovered = 0;
  double expected_impact = kNaN;
  std::vector<RunSummary> per_run;
};

namespace detail {

inline double nan_mean(std::span<const double> v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kNaN;
}

}  // namespace detail

// Collects runs of one strategy. Aggregation sorts by run index, so the
// result does not depend on the order runs were added.
class BatchAggregator {
 public:
  BatchAggregator(std::string scenario, Strategy s, std::uint64_t master, const MetricsSpec& m)
      : scenario_(std::move(scenario)), strategy_(s), master_(master), m_(m) {}

  void add(std::size_t index, const RunResult& r) {
    runs_.push_back({index, summarize(r, index, m_), SeriesColumns::from(r), r.phases, r.tick, r.duration});
  }

  std::size_t size() const { return runs_.size(); }

  KpiReport finish(double curve_step = 10.0) const {
    if (runs_.empty()) throw DomainError("empty batch");
    auto runs = runs_;
    std::sort(runs.begin(), runs.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
    KpiReport k;
    k.scenario = scenario_;
    k.strategy = strategy_;
    k.runs = runs.size();
    k.master_seed = master_;
    k.tick = runs.front().tick;
    k.curve_step = curve_step;
    const double duration = runs.front().duration;

    std::vector<std::optional<double>> fails;
    for (const auto& e : runs) fails.push_back(e.summary.service_failure_s);
    k.time_above_0_9 = duration;
    bool dropped = false;
    for (double t = 0.0; t <= duration + 1e-9; t += curve_step) {
      const double R = empirical_reliability(fails, t);
      k.reliability_curve.push_back({t, R});
    }
    // exact crossing from the failure events themselves
    std::vector<double> times;
    for (const auto& f : fails)
      if (f) times.push_back(*f);
    std::sort(times.begin(), times.end());
    for (double t : times) {
      if (!dropped && empirical_reliability(fails, t) < 0.9) {
        k.time_above_0_9 = t;
        dropped = true;
      }
    }

    const std::size_t n = runs.front().series.size();
    auto& s = k.series;
    s.t = runs.front().series.t;
    s.phase = runs.front().series.phase;
    auto mean_col = [&](std::vector<double> SeriesColumns::*col) {
      std::vector<double> out(n, kNaN), buf;
      for (std::size_t i = 0; i < n; ++i) {
        buf.clear();
        for (const auto& e : runs)
          if (i < (e.series.*col).size()) buf.push_back((e.series.*col)[i]);
        out[i] = detail::nan_mean(buf);
      }
      return out;
    };
    s.q = mean_col(&SeriesColumns::q);
    s.c = mean_col(&SeriesColumns::c);
    s.p50 = mean_col(&SeriesColumns::p50);
    s.p95 = mean_col(&SeriesColumns::p95);
    s.p99 = mean_col(&SeriesColumns::p99);
    s.plr = mean_col(&SeriesColumns::plr);
    s.penalty = mean_col(&SeriesColumns::penalty);
    s.reliability = mean_col(&SeriesColumns::reliability);
    s.ri = mean_col(&SeriesColumns::ri);

    for (std::size_t p = 0; p < kPhases; ++p) {
      PhaseStats pooled;
      for (const auto& e : runs) {
        const auto& x = e.phases[p];
        pooled.generated_legit += x.generated_legit;
        pooled.dropped_legit += x.dropped_legit;
        pooled.delivered_legit += x.delivered_legit;
        pooled.ticks += x.ticks;
        for (const auto& [b, c] : x.urllc_latency.bins) pooled.urllc_latency.bins[b] += c;
        pooled.urllc_latency.total += x.urllc_latency.total;
      }
      k.latency[p] = latency_of(pooled.urllc_latency);
      k.plr_pct[p] = phase_plr_pct(pooled);
    }

    auto mean_of = [&](auto get) {
      std::vector<double> v;
      for (const auto& e : runs) v.push_back(get(e.summary));
      return detail::nan_mean(v);
    };
    k.mean_ri = mean_of([](const RunSummary& x) { return x.mean_ri; });
    k.ri_std_after_threat = mean_of([](const RunSummary& x) { return x.ri_std_after_threat; });
    k.peak_penalty_pct = mean_of([](const RunSummary& x) { return x.peak_penalty_pct; });
    k.penalty_window_s = mean_of([](const RunSummary& x) { return x.penalty_window_s; });
    k.resilience_area = mean_of([](const RunSummary& x) { return x.resilience_area; });
    k.mttd = mean_of([](const RunSummary& x) { return x.response.mttd; });
    k.mttr = mean_of([](const RunSummary& x) { return x.response.mttr; });
    if (!std::isnan(k.mttd) && !std::isnan(k.mttr)) k.t_resp = response_time(k.mttd, k.mttr);
    k.expected_impact = mean_of([](const RunSummary& x) { return x.expected_impact; });
    for (const auto& e : runs) {
      k.undetected += e.summary.response.undetected;
      k.unrecovered += e.summary.response.unrecovered;
      k.per_run.push_back(e.summary);
    }
    return k;
  }

 private:
  struct Entry {
    std::size_t index;
    RunSummary summary;
    SeriesColumns series;
    std::array<PhaseStats, kPhases> phases;
    double tick;
    double duration;
  };
  std::string scenario_;
  Strategy strategy_;
  std::uint64_t master_;
  MetricsSpec m_;
  std::vector<Entry> runs_;
};

inline KpiReport run_batch(std::shared_ptr<const ScenarioConfig> cfg, Strategy s, std::uint64_t master, int runs) {
  if (runs < 1) throw ConfigError("runs", "must be >= 1");
  BatchAggregator agg(cfg->name, s, master, cfg->metrics);
  for (int i = 0; i < runs; ++i) {
    auto rc = RunConfig::make(cfg, s, batch_seed(master, static_cast<std::uint64_t>(i)));
    agg.add(static_cast<std::size_t>(i), run(rc));
  }
  return agg.finish();
}

// ---------------------------------------------------------------------------
// Emission

enum class Format { csv, json };

inline std::optional<Format> parse_format(std::string_view s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  return std::nullopt;
}

namespace detail {

inline std::string num(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline nlohmann::ordered_json jnum(double x) {
  if (std::isnan(x) || std::isinf(x)) return nullptr;
  return x;
}

inline nlohmann::ordered_json jopt(const std::optional<double>& x) {
  return x ? jnum(*x) : nlohmann::ordered_json(nullptr);
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  f << body;
  f.flush();
  if (!f) throw IoError("write to '" + p.string() + "' failed");
}

}  // namespace detail

inline constexpr const char* kSeriesHeader =
    "tick_s,strategy,Q,C,latency_p50_ms,latency_p95_ms,latency_p99_ms,plr_pct,throughput_penalty_pct,"
    "reliability_score,ri,phase";

inline void append_series_csv(std::string& out, Strategy strategy, const SeriesColumns& s) {
  const auto name = std::string(to_string(strategy));
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += detail::num(s.t[i]);
    out += ',';
    out += name;
    for (double x : {s.q[i], s.c[i], s.p50[i], s.p95[i], s.p99[i], s.plr[i], s.penalty[i], s.reliability[i], s.ri[i]}) {
      out += ',';
      out += detail::num(x);
    }
    out += ',';
    out += to_string(s.phase[i]);
    out += '\n';
  }
}

inline nlohmann::ordered_json series_json(Strategy strategy, const SeriesColumns& s) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    rows.push_back({{"tick_s", detail::jnum(s.t[i])},
                    {"strategy", to_string(strategy)},
                    {"Q", detail::jnum(s.q[i])},
                    {"C", detail::jnum(s.c[i])},
                    {"latency_p50_ms", detail::jnum(s.p50[i])},
                    {"latency_p95_ms", detail::jnum(s.p95[i])},
                    {"latency_p99_ms", detail::jnum(s.p99[i])},
                    {"plr_pct", detail::jnum(s.plr[i])},
                    {"throughput_penalty_pct", detail::jnum(s.penalty[i])},
                    {"reliability_score", detail::jnum(s.reliability[i])},
                    {"ri", detail::jnum(s.ri[i])},
                    {"phase", to_string(s.phase[i])}});
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["index"] = s.index;
  j["seed"] = s.seed;
  j["mean_ri"] = detail::jnum(s.mean_ri);
  j["ri_std_after_threat"] = detail::jnum(s.ri_std_after_threat);
  j["mean_q"] = detail::jnum(s.mean_q);
  j["peak_p99_ms"] = detail::jnum(s.peak_p99_ms);
  nlohmann::ordered_json lat, plr;
  for (std::size_t p = 0; p < kPhases; ++p) {
    const auto name = std::string(to_string(static_cast<Phase>(p)));
    lat[name] = {{"p50", detail::jnum(s.latency[p].p50)},
                 {"p95", detail::jnum(s.latency[p].p95)},
                 {"p99", detail::jnum(s.latency[p].p99)}};
    plr[name] = detail::jnum(s.plr_pct[p]);
  }
  j["latency_ms"] = lat;
  j["plr_pct"] = plr;
  j["peak_penalty_pct"] = detail::jnum(s.peak_penalty_pct);
  j["penalty_window_s"] = detail::jnum(s.penalty_window_s);
  j["resilience_area"] = detail::jnum(s.resilience_area);
  j["expected_impact"] = detail::jnum(s.expected_impact);
  j["mttd_s"] = detail::jnum(s.response.mttd);
  j["mttr_s"] = detail::jnum(s.response.mttr);
  j["t_resp_s"] = detail::jnum(s.response.t_resp);
  j["incidents"] = s.response.incidents;
  j["undetected"] = s.response.undetected;
  j["unrecovered"] = s.response.unrecovered;
  j["service_failure_s"] = detail::jopt(s.service_failure_s);
  j["enactments"] = s.enactments;
  j["rollbacks"] = s.rollbacks;
  j["conservation_ok"] = s.conservation_ok;
  return j;
}

// Summary object; the series itself goes to the series file.
inline nlohmann::ordered_json to_json(const KpiReport& k) {
  nlohmann::ordered_json j;
  j["scenario"] = k.scenario;
  j["strategy"] = to_string(k.strategy);
  j["runs"] = k.runs;
  j["master_seed"] = k.master_seed;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& [t, r] : k.reliability_curve) curve.push_back({t, r});
  j["reliability_curve"] = {{"step_s", k.curve_step}, {"points", curve}};
  j["time_above_0_9_s"] = detail::jnum(k.time_above_0_9);
  // coarse RI and penalty series, one point per curve step
  nlohmann::ordered_json ri = nlohmann::ordered_json::array(), pen = nlohmann::ordered_json::array();
  const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k.curve_step / k.tick)));
  for (std::size_t i = 0; i < k.series.size(); i += stride) {
    ri.push_back({k.series.t[i], detail::jnum(k.series.ri[i])});
    pen.push_back({k.series.t[i], detail::jnum(k.series.penalty[i])});
  }
  j["resilience_index_series"] = ri;
  j["mean_ri"] = detail::jnum(k.mean_ri);
  j["ri_std_after_threat"] = detail::jnum(k.ri_std_after_threat);
  nlohmann::ordered_json lat, plr;
  for (std::size_t p = 0; p < kPhases; ++p) {
    const auto name = std::string(to_string(static_cast<Phase>(p)));
    lat[name] = {{"p50", detail::jnum(k.latency[p].p50)},
                 {"p95", detail::jnum(k.latency[p].p95)},
                 {"p99", detail::jnum(k.latency[p].p99)}};
    plr[name] = detail::jnum(k.plr_pct[p]);
  }
  j["latency_ms"] = lat;
  j["plr_pct"] = plr;
  j["throughput_penalty_series"] = pen;
  j["peak_penalty_pct"] = detail::jnum(k.peak_penalty_pct);
  j["penalty_window_s"] = detail::jnum(k.penalty_window_s);
  j["resilience_area"] = detail::jnum(k.resilience_area);
  j["mttd_s"] = detail::jnum(k.mttd);
  j["mttr_s"] = detail::jnum(k.mttr);
  j["t_resp_s"] = detail::jnum(k.t_resp);
  j["undetected"] = k.undetected;
  j["unrecovered"] = k.unrecovered;
  j["expected_attack_impact"] = detail::jnum(k.expected_impact);
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : k.per_run) runs.push_back(to_json(r));
  j["per_run"] = runs;
  return j;
}

// Scalar KPIs used in the paired compare file.
inline std::vector<std::pair<std::string, double>> paired_kpis(const RunSummary& s) {
  return {{"mean_ri", s.mean_ri},
          {"ri_std_after_threat", s.ri_std_after_threat},
          {"peak_p99_ms", s.peak_p99_ms},
          {"sustained_p99_ms", s.latency[static_cast<std::size_t>(Phase::sustained)].p99},
          {"sustained_plr_pct", s.plr_pct[static_cast<std::size_t>(Phase::sustained)]},
          {"peak_penalty_pct", s.peak_penalty_pct},
          {"penalty_window_s", s.penalty_window_s},
          {"mttd_s", s.response.mttd},
          {"mttr_s", s.response.mttr},
          {"resilience_area", s.resilience_area},
          {"expected_impact", s.expected_impact}};
}

// Long-format table: one row per (seed, kpi) comparing the first report
// against each of the others.
inline std::string compare_csv(std::span<const KpiReport> reports) {
  std::string out = "seed,strategy_a,strategy_b,kpi,value_a,value_b,delta\n";
  if (reports.size() < 2) return out;
  const auto& a = reports.front();
  for (std::size_t b = 1; b < reports.size(); ++b) {
    const auto& rb = reports[b];
    const std::size_t n = std::min(a.per_run.size(), rb.per_run.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& x = a.per_run[i];
      const auto& y = rb.per_run[i];
      if (x.seed != y.seed) throw StateError("compare needs paired seeds");
      const auto kx = paired_kpis(x);
      const auto ky = paired_kpis(y);
      for (std::size_t m = 0; m < kx.size(); ++m) {
        out += std::to_string(x.seed) + ',' + std::string(to_string(a.strategy)) + ',' +
               std::string(to_string(rb.strategy)) + ',' + kx[m].first + ',' + detail::num(kx[m].second) + ',' +
               detail::num(ky[m].second) + ',' + detail::num(kx[m].second - ky[m].second) + '\n';
      }
    }
  }
  return out;
}

// Writes summary.json plus series.{csv,json}; with two or more reports also
// compare.csv. Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(std::span<const KpiReport> reports, Format fmt,
                                                      const std::filesystem::path& dir) {
  if (reports.empty()) throw DomainError("nothing to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  std::vector<std::filesystem::path> written;

  nlohmann::ordered_json summary;
  summary["scenario"] = reports.front().scenario;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  summary["reports"] = arr;
  detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  written.push_back(dir / "summary.json");

  if (fmt == Format::csv) {
    std::string body = std::string(kSeriesHeader) + "\n";
    for (const auto& r : reports) append_series_csv(body, r.strategy, r.series);
    detail::write_file(dir / "series.csv", body);
    written.push_back(dir / "series.csv");
  } else {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : reports)
      for (auto& row : series_json(r.strategy, r.series)) rows.push_back(std::move(row));
    detail::write_file(dir / "series.json", rows.dump() + "\n");
    written.push_back(dir / "series.json");
  }
  if (reports.size() >= 2) {
    detail::write_file(dir / "compare.csv", compare_csv(reports));
    written.push_back(dir / "compare.csv");
  }
  return written;
}

}  // namespace resil
