#pragma once

// Reference computations written without the library, used by the tests and
// by `resilsim oracle`. Everything here is brute force on purpose.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracles {

// P(at least k of n units work), by summing over all 2^n unit states.
inline double k_of_n_enumerate(const std::vector<double>& r, int k) {
  const auto n = r.size();
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    int up = 0;
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        ++up;
        p *= r[i];
      } else {
        p *= 1.0 - r[i];
      }
    }
    if (up >= k) total += p;
  }
  return total;
}

// Closed binomial sum for identical units.
inline double k_of_n_binomial(int n, int k, double r) {
  double s = 0.0;
  for (int j = k; j <= n; ++j) {
    double c = 1.0;
    for (int i = 1; i <= j; ++i) c = c * (n - j + i) / i;
    s += c * std::pow(r, j) * std::pow(1.0 - r, n - j);
  }
  return s;
}

struct MonteCarlo {
  double estimate = 0.0;
  double std_error = 0.0;
};

inline MonteCarlo k_of_n_monte_carlo(int n, int k, double r, std::uint64_t trials, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uint64_t ok = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    int up = 0;
    for (int i = 0; i < n; ++i) up += u(gen) < r;
    ok += up >= k;
  }
  const double p = static_cast<double>(ok) / static_cast<double>(trials);
  return {p, std::sqrt(std::max(p * (1.0 - p), 1e-300) / static_cast<double>(trials))};
}

// Piecewise-linear function given by knots (t, y), strictly increasing t.
struct Pwl {
  std::vector<std::pair<double, double>> knots;

  double operator()(double t) const {
    if (t <= knots.front().first) return knots.front().second;
    if (t >= knots.back().first) return knots.back().second;
    auto it = std::upper_bound(knots.begin(), knots.end(), std::make_pair(t, -1e300),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& [t1, y1] = *it;
    const auto& [t0, y0] = *(it - 1);
    return y0 + (y1 - y0) * (t - t0) / (t1 - t0);
  }
};

// Integral of f over [a, b] with midpoint sums on `steps` cells. For
// piecewise-linear f whose knots sit on cell boundaries this is exact up to
// rounding.
inline double integrate(const std::function<double(double)>& f, double a, double b, std::size_t steps) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / static_cast<double>(steps);
  long double s = 0.0L;
  for (std::size_t i = 0; i < steps; ++i) s += f(a + (static_cast<double>(i) + 0.5) * h);
  return static_cast<double>(s * h);
}

// Area under the samples y (spacing dt, from t=0) between t0 and t1, with
// linear interpolation between samples. Each sample interval inside the
// window gets 100 midpoint cells, so no cell straddles a knot.
inline double area_fine(const std::vector<double>& y, double dt, double t0, double t1) {
  Pwl p;
  for (std::size_t i = 0; i < y.size(); ++i) p.knots.push_back({static_cast<double>(i) * dt, y[i]});
  std::vector<double> cuts{t0};
  for (const auto& [t, v] : p.knots)
    if (t > t0 && t < t1) cuts.push_back(t);
  cuts.push_back(t1);
  long double total = 0.0L;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate(p, cuts[i], cuts[i + 1], 100);
  return static_cast<double>(total);
}

inline double dynamic_threshold(double r_min, double r_req, double alpha, double delta, double resilience) {
  return r_min + alpha * (resilience - r_req) - delta;
}

// Trust-weighted vote: total trust per distinct policy key; the heaviest
// key wins, ties to the key whose smallest member id sorts first.
struct Ballot {
  std::string controller;
  std::string key;  // anything equal for equal policies
  double trust = 0.0;
};

struct VoteOutcome {
  std::string key;
  double mass = 0.0;
  std::set<std::string> members;
};

inline VoteOutcome vote_exhaustive(const std::vector<Ballot>& ballots) {
  std::map<std::string, double> mass;
  std::map<std::string, std::set<std::string>> members;
  for (const auto& b : ballots) {
    mass[b.key] += b.trust;
    members[b.key].insert(b.controller);
  }
  VoteOutcome best;
  bool first = true;
  for (const auto& [k, m] : mass) {
    const std::string lead = *members[k].begin();
    if (first || m > best.mass + 1e-12 ||
        (std::abs(m - best.mass) <= 1e-12 && lead < *best.members.begin())) {
      best = {k, m, members[k]};
      first = false;
    }
  }
  return best;
}

inline double expected_impact(const std::vector<std::pair<double, double>>& p_dq) {
  double s = 0.0;
  for (const auto& [p, dq] : p_dq) s += p * dq;
  return s;
}

// Fraction of runs without a failure at or before t.
inline double survival(const std::vector<std::optional<double>>& failures, double t) {
  std::size_t alive = 0;
  for (const auto& f : failures) alive += !(f && *f <= t);
  return static_cast<double>(alive) / static_cast<double>(failures.size());
}

// RI recomputed from scratch at every tick over the trailing window.
inline std::vector<double> ri_naive(const std::vector<double>& c, std::size_t window, double threshold,
                                    double wa, double wr, double wm) {
  std::vector<double> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0, mn = 1.0;
    for (std::size_t j = lo; j <= i; ++j) {
      const double q = std::clamp(c[j], 0.0, 1.0);
      sum += q;
      mn = std::min(mn, q);
    }
    std::size_t run = 0;
    for (std::size_t j = i + 1; j-- > 0;) {
      if (c[j] < threshold) ++run;
      else break;
    }
    const double avail = sum / static_cast<double>(i + 1 - lo);
    const double rec = std::min(1.0, static_cast<double>(run) / static_cast<double>(window));
    out.push_back(std::clamp(wa * avail + wr * (1.0 - rec) + wm * mn, 0.0, 1.0));
  }
  return out;
}

// MTTD / MTTR from hand-written timestamps.
struct Incident {
  double start;
  std::optional<double> detect;
  std::optional<double> recover;
};

inline std::pair<double, double> mttd_mttr(const std::vector<Incident>& xs) {
  double d = 0.0, r = 0.0;
  int nd = 0, nr = 0;
  for (const auto& x : xs) {
    if (!x.detect) continue;
    d += *x.detect - x.start;
    ++nd;
    if (x.recover) {
      r += std::max(0.0, *x.recover - *x.detect);
      ++nr;
    }
  }
  return {nd ? d / nd : NAN, nr ? r / nr : NAN};
}

// Exact two-sided sign test p-value for `wins` successes out of n.
inline double sign_test_p(int wins, int n) {
  auto pmf = [&](int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c * std::pow(0.5, n);
  };
  const int tail = std::min(wins, n - wins);
  double p = 0.0;
  for (int k = 0; k <= tail; ++k) p += pmf(k);
  return std::min(1.0, 2.0 * p);
}

inline void print_report(std::ostream& os) {
  os.precision(12);
  const double r = std::exp(-0.1);
  os << "k_out_of_n(n=3, k=2, r=e^-0.1) binomial  = " << k_of_n_binomial(3, 2, r) << "\n";
  os << "k_out_of_n(n=3, k=2, r=e^-0.1) enumerate = " << k_of_n_enumerate({r, r, r}, 2) << "\n";
  auto mc = k_of_n_monte_carlo(3, 2, r, 1000000, 12345);
  os << "k_out_of_n(n=3, k=2) monte carlo 1e6     = " << mc.estimate << " +- " << mc.std_error << "\n";
  os << "dynamic_threshold(0.9999, 0.85, 0.1, 0.0005, R=0.85) = " << dynamic_threshold(0.9999, 0.85, 0.1, 0.0005, 0.85)
     << "\n";
  const std::vector<double> flat(101, 1.0), half(101, 0.5);
  os << "resilience area, C = 1   on [0, 10] = " << area_fine(flat, 0.1, 0.0, 10.0) / 10.0 << "\n";
  os << "resilience area, C = 0.5 on [0, 10] = " << area_fine(half, 0.1, 0.0, 10.0) / 10.0 << "\n";
  auto v = vote_exhaustive({{"a", "P1", 0.5}, {"b", "P2", 0.3}, {"c", "P2", 0.4}});
  os << "vote {a:P1 0.5, b:P2 0.3, c:P2 0.4} -> " << v.key << " with mass " << v.mass << "\n";
  os << "expected impact [(0.5, 0.2), (0.25, 0.4)] = " << expected_impact({{0.5, 0.2}, {0.25, 0.4}}) << "\n";
  auto [d, m] = mttd_mttr({{100.0, 103.0, 583.0}});
  os << "MTTD, MTTR for (start 100, detect 103, recover 583) = " << d << ", " << m << "; T_resp = " << d + m << "\n";
  os << "sign test p(18 of 20) = " << sign_test_p(18, 20) << "\n";
}

}  // namespace oracles
