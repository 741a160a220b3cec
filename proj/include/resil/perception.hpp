#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "resil/error.hpp"

namespace resil {

struct TelemetrySample {
  std::string stream;
  double tick = 0.0;  // seconds
  double value = 0.0;
  int replica = 0;
};

namespace detail {

// Median of a scratch copy (reordered in place).
inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Median of the replicas.
inline double redundancy_vote(std::span<const double> replicas) {
  if (replicas.empty()) throw DomainError("redundancy_vote needs at least one replica");
  std::vector<double> v(replicas.begin(), replicas.end());
  return detail::median_inplace(v);
}

inline constexpr std::size_t kMinOutlierWindow = 5;
inline constexpr double kMadScale = 1.4826;
inline constexpr double kMadCutoff = 3.0;

// Flags samples farther than 3 scaled MADs from the window median. Windows
// shorter than 5 samples pass through unflagged.
namespace detail {

// Window median and outlier cutoff; `scratch` is reused by the caller.
inline std::pair<double, double> mad_cutoff(std::span<const double> window, std::vector<double>& scratch) {
  scratch.assign(window.begin(), window.end());
  const double med = median_inplace(scratch);
  for (std::size_t i = 0; i < window.size(); ++i) scratch[i] = std::abs(window[i] - med);
  return {med, kMadCutoff * kMadScale * median_inplace(scratch)};
}

// Same as mad_cutoff for an ascending window. The deviations below and above
// the median are two ascending runs, merged until the middle is reached.
inline std::pair<double, double> mad_cutoff_sorted(std::span<const double> s) {
  const std::size_t n = s.size(), mid = n / 2;
  const double med = n % 2 ? s[mid] : 0.5 * (s[mid - 1] + s[mid]);
  std::size_t lo = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), med) - s.begin());
  std::size_t hi = lo;
  double prev = 0.0, cur = 0.0;
  for (std::size_t k = 0; k <= mid; ++k) {
    prev = cur;
    const bool take_lo = lo > 0 && (hi >= n || med - s[lo - 1] <= s[hi] - med);
    cur = take_lo ? med - s[--lo] : s[hi++] - med;
  }
  const double mad = n % 2 ? cur : 0.5 * (prev + cur);
  return {med, kMadCutoff * kMadScale * mad};
}

}  // namespace detail

inline std::vector<bool> detect_outliers(std::span<const double> window) {
  std::vector<bool> mask(window.size(), false);
  if (window.size() < kMinOutlierWindow) return mask;
  std::vector<double> scratch;
  const auto [med, cutoff] = detail::mad_cutoff(window, scratch);
  for (std::size_t i = 0; i < window.size(); ++i) mask[i] = std::abs(window[i] - med) > cutoff;
  return mask;
}

struct BufferedValue {
  double value = 0.0;  // normalized
  bool flagged = false;
};

// Last W cleaned values of every registered stream.
class TimeSeriesBuffer {
 public:
  explicit TimeSeriesBuffer(std::size_t window = 100) : window_(window) {
    if (window == 0) throw DomainError("buffer window must be >= 1");
  }

  void add_stream(const std::string& id, double lo, double hi) {
    if (!(hi > lo)) throw DomainError("stream range must satisfy hi > lo");
    if (index_.count(id)) throw DomainError("duplicate stream '" + id + "'");
    index_.emplace(id, streams_.size());
    streams_.push_back({id, lo, hi, {}, {}});
  }

  std::size_t window() const { return window_; }
  std::size_t stream_count() const { return streams_.size(); }
  const std::string& stream_id(std::size_t i) const { return streams_[i].id; }
  std::size_t index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw StreamError("unknown stream '" + id + "'");
    return it->second;
  }
  bool has_stream(const std::string& id) const { return index_.count(id) > 0; }
  double lo(std::size_t i) const { return streams_[i].lo; }
  double hi(std::size_t i) const { return streams_[i].hi; }

  double normalize(std::size_t i, double v) const {
    const auto& s = streams_[i];
    return std::clamp((v - s.lo) / (s.hi - s.lo), 0.0, 1.0);
  }

  void push(std::size_t i, BufferedValue v) {
    auto& r = streams_[i];
    r.values.push_back(v);
    r.sorted.insert(std::upper_bound(r.sorted.begin(), r.sorted.end(), v.value), v.value);
    if (r.values.size() > window_) {
      r.sorted.erase(std::lower_bound(r.sorted.begin(), r.sorted.end(), r.values.front().value));
      r.values.pop_front();
    }
  }

  // Held values of stream i in ascending order.
  const std::vector<double>& sorted(std::size_t i) const { return streams_[i].sorted; }

  const std::deque<BufferedValue>& values(std::size_t i) const { return streams_[i].values; }
  std::size_t size(std::size_t i) const { return streams_[i].values.size(); }

  // Non-flagged values in chronological order.
  std::vector<double> clean_values(std::size_t i) const {
    std::vector<double> out;
    for (const auto& v : streams_[i].values)
      if (!v.flagged) out.push_back(v.value);
    return out;
  }

  bool operator==(const TimeSeriesBuffer& o) const {
    if (window_ != o.window_ || streams_.size() != o.streams_.size()) return false;
    for (std::size_t i = 0; i < streams_.size(); ++i) {
      const auto& a = streams_[i].values;
      const auto& b = o.streams_[i].values;
      if (a.size() != b.size()) return false;
      for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k].value != b[k].value || a[k].flagged != b[k].flagged) return false;
    }
    return true;
  }

 private:
  struct StreamRing {
    std::string id;
    double lo, hi;
    std::deque<BufferedValue> values;
    std::vector<double> sorted;
  };
  std::size_t window_;
  std::vector<StreamRing> streams_;
  std::map<std::string, std::size_t> index_;
};

struct CleanSample {
  std::size_t stream = 0;
  double value = 0.0;  // normalized to [0, 1]
  bool flagged = false;
};

// One cleaned value per stream that reported this tick, in stream
// registration order. Flagged values are still reported (detectors score
// them) but carry the flag so baseline statistics can skip them.
inline std::vector<CleanSample> preprocess(std::span<const TelemetrySample> raw, TimeSeriesBuffer& buf) {
  thread_local std::vector<std::vector<double>> replicas;
  thread_local std::vector<double> window;
  replicas.resize(buf.stream_count());
  for (auto& r : replicas) r.clear();
  for (const auto& s : raw) replicas[buf.index(s.stream)].push_back(s.value);
  std::vector<CleanSample> out;
  for (std::size_t i = 0; i < buf.stream_count(); ++i) {
    if (replicas[i].empty()) continue;
    const double x = buf.normalize(i, detail::median_inplace(replicas[i]));
    // the window as it will be after this push, in ascending order
    const auto& held = buf.values(i);
    window = buf.sorted(i);
    if (held.size() == buf.window()) window.erase(std::lower_bound(window.begin(), window.end(), held.front().value));
    window.insert(std::upper_bound(window.begin(), window.end(), x), x);
    bool flagged = false;
    if (window.size() >= kMinOutlierWindow) {
      const auto [med, cutoff] = detail::mad_cutoff_sorted(window);
      flagged = std::abs(x - med) > cutoff;
    }
    buf.push(i, {x, flagged});
    out.push_back({i, x, flagged});
  }
  return out;
}

}  // namespace resil
