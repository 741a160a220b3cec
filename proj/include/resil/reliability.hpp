#pragma once

// Closed-form reliability and resilience mathematics: exponential survival,
// k-out-of-n redundancy, normalized performance integrals, expected attack
// impact, the dynamic mitigation threshold and policy selection under
// reliability/resilience constraints. Everything here is a pure function.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "resil/error.hpp"

namespace resil {

namespace detail {

inline bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

inline void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace detail

struct FailureModel {
  double lambda_hw = 0.0;   // 1/s
  double lambda_ai = 0.0;   // 1/s
  double lambda_phy = 0.0;  // 1/s

  static FailureModel from_mtbf(double mtbf_seconds, double lambda_ai, double lambda_phy) {
    if (!(mtbf_seconds > 0.0) || !std::isfinite(mtbf_seconds))
      throw DomainError("MTBF must be positive and finite");
    FailureModel m{1.0 / mtbf_seconds, lambda_ai, lambda_phy};
    m.validate();
    return m;
  }

  void validate() const {
    if (!detail::finite_nonneg(lambda_hw) || !detail::finite_nonneg(lambda_ai) ||
        !detail::finite_nonneg(lambda_phy))
      throw DomainError("failure rates must be finite and non-negative");
  }
};

struct SystemStructure {
  int n = 1;
  int k = 1;
  std::vector<std::string> subsystem_ids;

  void validate() const {
    if (n < 1 || k < 1 || k > n) throw DomainError("k-out-of-n requires 1 <= k <= n");
    if (static_cast<int>(subsystem_ids.size()) != n)
      throw DomainError("subsystem_ids must hold exactly n entries");
    std::set<std::string> seen(subsystem_ids.begin(), subsystem_ids.end());
    if (static_cast<int>(seen.size()) != n) throw DomainError("subsystem_ids must be distinct");
  }

  // Structure with generated ids "S1".."Sn".
  static SystemStructure make(int n, int k) {
    SystemStructure s{n, k, {}};
    for (int i = 1; i <= n; ++i) s.subsystem_ids.push_back("S" + std::to_string(i));
    s.validate();
    return s;
  }
};

// Design thresholds. alpha may be negative: the sign selects whether degraded
// resilience lowers (alpha > 0, formula as printed) or raises (alpha < 0) the
// mitigation threshold.
struct ThresholdParams {
  double r_min = 0.9999;
  double r_req = 0.85;
  double alpha = 0.1;
  double delta = 0.0005;

  void validate() const {
    if (!(r_min > 0.0 && r_min <= 1.0)) throw DomainError("r_min must lie in (0, 1]");
    if (!(r_req > 0.0 && r_req <= 1.0)) throw DomainError("r_req must lie in (0, 1]");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive");
    if (!std::isfinite(alpha)) throw DomainError("alpha must be finite");
  }
};

struct AttackImpactEntry {
  std::string attack_id;
  double probability = 0.0;
  double delta_q = 0.0;

  void validate() const {
    detail::require_probability(probability, "attack probability");
    if (!detail::finite_nonneg(delta_q)) throw DomainError("delta_q must be non-negative");
  }
};

// Uniformly sampled performance series. Sample i is taken at
// t_start + i * tick_seconds.
struct PerformanceTrace {
  double tick_seconds = 1.0;
  double t_start = 0.0;
  std::vector<double> q;           // normalized performance Q(t)
  double q_nominal = 1.0;
  std::vector<double> throughput;  // T_current(t), bits/s; optional
  double baseline_throughput = 0.0;
  std::optional<double> t_threat;
  std::optional<double> t_recovery;
  std::optional<double> t_steady;

  double time_at(std::size_t i) const { return t_start + static_cast<double>(i) * tick_seconds; }
  double t_end() const {
    return q.empty() && throughput.empty()
               ? t_start
               : time_at(std::max(q.size(), throughput.size()) - 1);
  }
};

// R(t) = exp(-lambda t)
inline double subsystem_reliability(double lambda, double t) {
  if (!(lambda >= 0.0) || !(t >= 0.0)) throw DomainError("lambda and t must be non-negative");
  return std::exp(-lambda * t);
}

// C(n, j). Exact integer running product for n <= 64 (128-bit intermediate),
// floating running product above.
inline double binomial(int n, int j) {
  if (j < 0 || j > n) return 0.0;
  j = std::min(j, n - j);
  if (n <= 64) {
    unsigned __int128 c = 1;
    for (int i = 0; i < j; ++i) c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    return static_cast<double>(c);
  }
  double c = 1.0;
  for (int i = 0; i < j; ++i) c = c * (n - i) / (i + 1);
  return c;
}

// Probability that at least k of n identical, independent units with unit
// reliability r_unit are up.
inline double k_out_of_n_reliability(const SystemStructure& s, double r_unit) {
  s.validate();
  detail::require_probability(r_unit, "r_unit");
  if (r_unit == 1.0) return 1.0;
  if (r_unit == 0.0) return 0.0;
  double sum = 0.0;
  for (int j = s.k; j <= s.n; ++j)
    sum += binomial(s.n, j) * std::pow(r_unit, j) * std::pow(1.0 - r_unit, s.n - j);
  return std::clamp(sum, 0.0, 1.0);
}

// Heterogeneous k-out-of-n: enumerates all 2^n up/down states. n <= 20.
inline double k_out_of_n_reliability(std::span<const double> r_units, int k) {
  const int n = static_cast<int>(r_units.size());
  if (n < 1 || k < 1 || k > n) throw DomainError("k-out-of-n requires 1 <= k <= n");
  if (n > 20) throw DomainError("heterogeneous enumeration supports n <= 20");
  for (double r : r_units) detail::require_probability(r, "unit reliability");
  double sum = 0.0;
  const std::uint32_t states = 1u << n;
  for (std::uint32_t m = 0; m < states; ++m) {
    if (std::popcount(m) < k) continue;
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= (m >> i & 1u) ? r_units[i] : 1.0 - r_units[i];
    sum += p;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// R(t) = exp(-lambda_ai t) * exp(-lambda_phy t)
inline double composite_reliability(const FailureModel& m, double t) {
  if (!(t >= 0.0)) throw DomainError("t must be non-negative");
  m.validate();
  return subsystem_reliability(m.lambda_ai + m.lambda_phy, t);
}

namespace detail {

// Integral of the piecewise-linear interpolant of `y - offset` (samples at
// t_start + i*dt) over [a, b]. Exact for piecewise-linear signals.
inline double trapezoid(std::span<const double> y, double t_start, double dt, double a, double b,
                        double offset = 0.0) {
  if (y.empty()) throw RangeError("empty trace");
  const double t_last = t_start + static_cast<double>(y.size() - 1) * dt;
  const double eps = 1e-9 * std::max(1.0, std::abs(t_last));
  if (a < t_start - eps || b > t_last + eps || a > b) throw RangeError("window outside trace");
  a = std::max(a, t_start);
  b = std::min(b, t_last);
  if (b <= a) return 0.0;
  auto value_at = [&](double t) {
    double x = (t - t_start) / dt;
    auto i = static_cast<std::size_t>(std::floor(x));
    if (i + 1 >= y.size()) return y.back() - offset;
    double f = x - static_cast<double>(i);
    return (y[i] - offset) + f * (y[i + 1] - y[i]);
  };
  auto at = [&](std::size_t i) { return y[i] - offset; };
  const auto first_full = static_cast<std::size_t>(std::ceil((a - t_start) / dt - 1e-12));
  const auto last_full = static_cast<std::size_t>(std::floor((b - t_start) / dt + 1e-12));
  if (first_full > last_full) {
    // Window inside one segment.
    return 0.5 * (value_at(a) + value_at(b)) * (b - a);
  }
  double sum = 0.0;
  double ta = t_start + static_cast<double>(first_full) * dt;
  sum += 0.5 * (value_at(a) + at(first_full)) * (ta - a);
  for (std::size_t i = first_full; i < last_full; ++i) sum += 0.5 * (at(i) + at(i + 1)) * dt;
  double tb = t_start + static_cast<double>(last_full) * dt;
  sum += 0.5 * (at(last_full) + value_at(b)) * (b - tb);
  return sum;
}

}  // namespace detail

// Normalized area under Q over [t0, t1]; 1 means no degradation.
inline double resilience_index(const PerformanceTrace& tr, double t0, double t1) {
  if (!(t0 < t1)) throw DomainError("resilience window requires t0 < t1");
  if (!(tr.q_nominal > 0.0)) throw DomainError("q_nominal must be positive");
  if (tr.q.empty()) throw RangeError("empty trace");
  // integrate around the first sample so a flat trace gives its level exactly
  const double ref = tr.q.front();
  double dev = detail::trapezoid(tr.q, tr.t_start, tr.tick_seconds, t0, t1, ref);
  return std::clamp((ref + dev / (t1 - t0)) / tr.q_nominal, 0.0, 1.0);
}

inline double expected_attack_impact(std::span<const AttackImpactEntry> entries) {
  if (entries.empty()) throw DomainError("expected impact needs at least one attack");
  double sum = 0.0;
  for (const auto& e : entries) {
    e.validate();
    sum += e.probability * e.delta_q;
  }
  return sum;
}

// Threshold(t) = r_min + alpha (resilience_now - r_req) - delta
inline double dynamic_threshold(const ThresholdParams& p, double resilience_now) {
  p.validate();
  return p.r_min + p.alpha * (resilience_now - p.r_req) - p.delta;
}

struct PolicyCandidate {
  std::string id;
  std::vector<AttackImpactEntry> impacts;
  double reliability = 0.0;
  double resilience = 0.0;
};

struct PolicySelection {
  std::string id;
  double expected_impact = 0.0;
  bool feasible = true;
};

// Exhaustive constrained minimization of expected impact over a finite policy
// set. Ties go to the lexicographically smallest id. When no candidate meets
// both floors the most reliable one is returned with feasible = false.
inline PolicySelection select_mitigation_policy(std::span<const PolicyCandidate> candidates,
                                                const ThresholdParams& params) {
  if (candidates.empty()) throw DomainError("empty candidate policy set");
  params.validate();
  std::optional<PolicySelection> best;
  for (const auto& c : candidates) {
    if (c.reliability < params.r_min || c.resilience < params.r_req) continue;
    double impact = c.impacts.empty() ? 0.0 : expected_attack_impact(c.impacts);
    if (!best || impact < best->expected_impact ||
        (impact == best->expected_impact && c.id < best->id))
      best = PolicySelection{c.id, impact, true};
  }
  if (best) return *best;
  const PolicyCandidate* top = &candidates.front();
  for (const auto& c : candidates)
    if (c.reliability > top->reliability || (c.reliability == top->reliability && c.id < top->id))
      top = &c;
  return {top->id, top->impacts.empty() ? 0.0 : expected_attack_impact(top->impacts), false};
}

// T_resp = T_detect + T_mitigate
inline double response_time(double t_detect, double t_mitigate) {
  if (!(t_detect >= 0.0) || !(t_mitigate >= 0.0))
    throw DomainError("detection and mitigation times must be non-negative");
  return t_detect + t_mitigate;
}

// Percentage drop of throughput against the pre-attack baseline.
inline double throughput_penalty(double t_baseline, double t_current) {
  if (!(t_baseline > 0.0)) throw DomainError("baseline throughput must be positive");
  if (!(t_current >= 0.0)) throw DomainError("current throughput must be non-negative");
  return (t_baseline - t_current) / t_baseline * 100.0;
}

// Area under C(t) = T_current/T_baseline from t_threat to t_recovery, divided
// by (t_steady - t_threat). Uses `throughput` when present, else q/q_nominal.
inline double resilience_curve_area(const PerformanceTrace& tr) {
  if (!tr.t_threat || !tr.t_recovery || !tr.t_steady)
    throw StateError("resilience curve needs t_threat, t_recovery and t_steady");
  const double t0 = *tr.t_threat, tr_ = *tr.t_recovery, ts = *tr.t_steady;
  if (!(t0 < ts)) throw DomainError("resilience curve requires t_threat < t_steady");
  if (tr_ < t0 || tr_ > ts) throw DomainError("t_recovery must lie in [t_threat, t_steady]");
  std::vector<double> c;
  if (!tr.throughput.empty()) {
    if (!(tr.baseline_throughput > 0.0)) throw DomainError("baseline throughput must be positive");
    c.reserve(tr.throughput.size());
    for (double x : tr.throughput) c.push_back(x / tr.baseline_throughput);
  } else {
    if (!(tr.q_nominal > 0.0)) throw DomainError("q_nominal must be positive");
    c.reserve(tr.q.size());
    for (double x : tr.q) c.push_back(x / tr.q_nominal);
  }
  if (tr_ == t0) return 0.0;
  return detail::trapezoid(c, tr.t_start, tr.tick_seconds, t0, tr_) / (ts - t0);
}

}  // namespace resil
