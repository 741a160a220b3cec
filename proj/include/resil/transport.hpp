#pragma once

// Tick-driven packet transport.
//
// Packets travel in batches (same source, route, hop and birth tick). Each
// directed link keeps one FIFO per traffic class plus one for best-effort
// (attack) traffic. Per tick a link serves capacity*tick bits, shared by both
// directions: every sliced class first draws on its reserved fraction, then
// all classes compete for the unreserved remainder in proportion to their
// backlog. Reserved capacity is not lent out. Within a tick packets move hop
// by hop in waves, so an uncongested path is crossed in the tick the packet
// was sent. Node buffers are enforced on the backlog left at the end of the
// tick: each class owns a reserved share and the rest is shared; overflow is
// dropped from the queue tails in proportion to class excess.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "resil/error.hpp"
#include "resil/network.hpp"

namespace resil {

inline constexpr std::size_t kClasses = 4;  // telemetry, video, urllc, best effort
inline constexpr std::uint8_t kBestEffort = 3;

inline constexpr std::uint8_t class_index(TrafficClass c) { return static_cast<std::uint8_t>(c); }

// Splits `total` units over `weights` proportionally with largest-remainder
// rounding; ties go to the lower index. Requires total <= sum(weights).
inline std::vector<std::int64_t> proportional_split(std::int64_t total, std::span<const std::int64_t> weights) {
  std::vector<std::int64_t> out(weights.size(), 0);
  __int128 sum = 0;
  for (auto w : weights) sum += w;
  if (total <= 0 || sum == 0) return out;
  if (total >= sum) {
    std::copy(weights.begin(), weights.end(), out.begin());
    return out;
  }
  std::int64_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out[i] = static_cast<std::int64_t>(static_cast<__int128>(total) * weights[i] / sum);
    given += out[i];
  }
  // Fewer than weights.size() units are left; hand them out one at a time
  // to the largest remainders.
  std::vector<char> used(weights.size(), 0);
  for (; given < total; ++given) {
    std::size_t best = weights.size();
    __int128 best_rem = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (used[i]) continue;
      const __int128 r = static_cast<__int128>(total) * weights[i] % sum;
      if (r > best_rem) best_rem = r, best = i;
    }
    used[best] = 1;
    ++out[best];
  }
  return out;
}

struct Batch {
  std::uint32_t source = 0;
  std::uint32_t route = 0;
  std::uint16_t hop = 0;  // index of the node currently holding the batch
  std::uint8_t cls = 0;
  std::uint16_t ready_wave = 0;
  std::int64_t count = 0;
  std::int64_t birth = 0;  // tick
  double delay = 0.0;      // accumulated propagation + transmission + in-tick wait (s)
};

struct Injection {
  std::uint32_t source = 0;
  std::uint32_t route = 0;
  std::int64_t count = 0;
};

struct TickStats {
  std::int64_t generated_legit = 0, delivered_legit = 0, dropped_legit = 0;
  std::int64_t generated_attack = 0, delivered_attack = 0, dropped_attack = 0;
  double delivered_legit_bits = 0.0;
  std::int64_t urllc_delivered = 0, urllc_dropped = 0, urllc_generated = 0;
  std::vector<std::pair<double, std::int64_t>> urllc_latency_ms;  // (latency, packets)
  std::vector<double> ingress_bits;                                 // per node
  std::vector<std::int64_t> queue_depth;                            // per node, end of tick
};

class Transport {
 public:
  struct Source {
    double packet_bits = 8000.0;
    std::uint8_t cls = 0;
    bool legit = true;
  };

  Transport(const Topology& t, double tick_seconds) : topo_(&t), tick_(tick_seconds) {
    if (!(tick_seconds > 0.0)) throw DomainError("tick must be > 0");
    const std::size_t L = t.link_count();
    queues_.resize(L * 2 * kClasses);
    qcount_.assign(L * 2 * kClasses, 0);
    credit_.assign(L * 2 * kClasses, 0.0);
    reserve_.resize(L);
    served_bits_.assign(L, 0.0);
    in_dirty_.assign(L, 0);
    slices_.fill(0.0);
  }

  std::uint32_t add_source(double packet_bits, std::uint8_t cls, bool legit) {
    if (!(packet_bits > 0.0)) throw DomainError("packet size must be > 0");
    if (cls >= kClasses) throw DomainError("bad class");
    sources_.push_back({packet_bits, cls, legit});
    return static_cast<std::uint32_t>(sources_.size() - 1);
  }
  const Source& source(std::uint32_t i) const { return sources_[i]; }

  // Interns a node-index route; hops must be links of the topology.
  std::uint32_t intern_route(const std::vector<std::size_t>& nodes) {
    auto it = route_index_.find(nodes);
    if (it != route_index_.end()) return it->second;
    if (nodes.size() < 2) throw DomainError("route needs at least two nodes");
    std::vector<std::size_t> links;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      auto li = topo_->link_between(nodes[i], nodes[i + 1]);
      if (!li) throw RouteError(topo_->node(nodes[i]).id + "-" + topo_->node(nodes[i + 1]).id, "route hop is not a link");
      links.push_back(*li);
    }
    const auto id = static_cast<std::uint32_t>(route_nodes_.size());
    route_nodes_.push_back(nodes);
    route_links_.push_back(std::move(links));
    route_index_.emplace(nodes, id);
    max_hops_ = std::max(max_hops_, nodes.size() - 1);
    return id;
  }
  const std::vector<std::size_t>& route_nodes(std::uint32_t r) const { return route_nodes_[r]; }

  void set_slices(const std::map<TrafficClass, double>& s) {
    slices_.fill(0.0);
    for (const auto& [c, f] : s) slices_[class_index(c)] = f;
  }

  std::int64_t in_queue() const { return in_queue_; }
  std::int64_t in_queue_legit() const { return in_queue_legit_; }

  TickStats step(std::int64_t tick, std::span<const Injection> gen) {
    const Topology& t = *topo_;
    TickStats st;
    st.ingress_bits.assign(t.node_count(), 0.0);
    st.queue_depth.assign(t.node_count(), 0);
    stats_ = &st;
    tick_now_ = tick;

    // Packets waiting on unusable links are lost.
    for (std::size_t li = 0; li < t.link_count(); ++li) {
      if (t.link_usable(li)) continue;
      for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t c = 0; c < kClasses; ++c) {
          const std::size_t qi = qidx(li, d, c);
          auto& q = queues_[qi];
          for (const auto& b : q) {
            drop(b, b.count);
            in_queue_add(b, -b.count);
          }
          q.clear();
          qcount_[qi] = 0;
          credit_[qidx(li, d, c)] = 0.0;
        }
    }
    for (std::size_t li = 0; li < t.link_count(); ++li) {
      budget_init(li);
      if (has_backlog(li)) {
        mark(li);
        for (std::size_t d = 0; d < 2; ++d)
          for (std::size_t c = 0; c < kClasses; ++c)
            for (auto& b : queues_[qidx(li, d, c)]) b.ready_wave = 0;
      }
    }

    for (const auto& g : gen) {
      if (g.count <= 0) continue;
      const Source& s = sources_[g.source];
      if (s.legit) {
        st.generated_legit += g.count;
        if (s.cls == class_index(TrafficClass::urllc)) st.urllc_generated += g.count;
      } else {
        st.generated_attack += g.count;
      }
      Batch b;
      b.source = g.source;
      b.route = g.route;
      b.hop = 0;
      b.cls = s.cls;
      b.count = g.count;
      b.birth = tick;
      b.ready_wave = 0;
      forward(b, 0);
    }

    for (std::uint16_t w = 0; w <= max_hops_ + 1; ++w) {
      std::vector<std::size_t> links;
      links.swap(dirty_);
      for (auto li : links) in_dirty_[li] = 0;
      if (links.empty()) break;
      std::sort(links.begin(), links.end());
      for (auto li : links) serve_link(li, w);
    }
    // Anything still marked has eligible packets left over for next tick.
    for (auto li : dirty_) in_dirty_[li] = 0;
    dirty_.clear();

    enforce_buffers();
    for (std::size_t li = 0; li < t.link_count(); ++li) {
      auto [a, b] = t.endpoints(li);
      for (std::size_t d = 0; d < 2; ++d) {
        const std::size_t at = d == 0 ? a : b;
        for (std::size_t c = 0; c < kClasses; ++c) st.queue_depth[at] += qcount_[qidx(li, d, c)];
      }
    }
    stats_ = nullptr;
    return st;
  }

 private:
  static constexpr std::array<std::uint8_t, kClasses> kServiceOrder = {2, 0, 1, 3};

  std::size_t qidx(std::size_t li, std::size_t dir, std::size_t c) const { return (li * 2 + dir) * kClasses + c; }
  std::deque<Batch>& queue(std::size_t li, std::size_t dir, std::size_t c) { return queues_[qidx(li, dir, c)]; }

  void in_queue_add(const Batch& b, std::int64_t n) {
    in_queue_ += n;
    if (sources_[b.source].legit) in_queue_legit_ += n;
  }

  void drop(const Batch& b, std::int64_t n) {
    if (n <= 0) return;
    if (sources_[b.source].legit) {
      stats_->dropped_legit += n;
      if (b.cls == class_index(TrafficClass::urllc)) stats_->urllc_dropped += n;
    } else {
      stats_->dropped_attack += n;
    }
  }

  void deliver(const Batch& b) {
    const Source& s = sources_[b.source];
    if (s.legit) {
      stats_->delivered_legit += b.count;
      stats_->delivered_legit_bits += static_cast<double>(b.count) * s.packet_bits;
      if (b.cls == class_index(TrafficClass::urllc)) {
        stats_->urllc_delivered += b.count;
        const double ms = (static_cast<double>(tick_now_ - b.birth) * tick_ + b.delay) * 1000.0;
        stats_->urllc_latency_ms.push_back({ms, b.count});
      }
    } else {
      stats_->delivered_attack += b.count;
    }
  }

  // Places a batch that sits at route node `hop` into its outgoing queue.
  void forward(Batch b, std::uint16_t ready_wave) {
    const Topology& t = *topo_;
    const auto& nodes = route_nodes_[b.route];
    const auto& links = route_links_[b.route];
    const std::size_t at = nodes[b.hop];
    if (!t.node_up(at)) {
      drop(b, b.count);
      return;
    }
    if (b.hop + 1u >= nodes.size()) {
      deliver(b);
      return;
    }
    const std::size_t li = links[b.hop];
    if (!t.link_usable(li)) {
      drop(b, b.count);
      return;
    }
    const std::size_t dir = t.endpoints(li).first == at ? 0 : 1;
    b.ready_wave = ready_wave;
    auto& q = queue(li, dir, b.cls);
    const std::size_t qi = qidx(li, dir, b.cls);
    qcount_[qi] += b.count;
    in_queue_add(b, b.count);
    if (!sources_[b.source].legit && !q.empty()) {
      // Attack traffic carries no latency bookkeeping; coalesce.
      Batch& back = q.back();
      if (back.source == b.source && back.route == b.route && back.hop == b.hop && back.ready_wave == b.ready_wave) {
        back.count += b.count;
        mark(li);
        return;
      }
    }
    q.push_back(b);
    mark(li);
  }

  void mark(std::size_t li) {
    if (!in_dirty_[li]) {
      in_dirty_[li] = 1;
      dirty_.push_back(li);
    }
  }

  bool has_backlog(std::size_t li) const {
    for (std::size_t d = 0; d < 2; ++d)
      for (std::size_t c = 0; c < kClasses; ++c)
        if (qcount_[qidx(li, d, c)] > 0) return true;
    return false;
  }

  void budget_init(std::size_t li) {
    const double budget = topo_->link(li).capacity * tick_;
    auto& r = reserve_[li];
    double reserved = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      r[c] = slices_[c] * budget;
      reserved += r[c];
    }
    r[3] = std::max(0.0, budget - reserved);  // unreserved pool
    served_bits_[li] = 0.0;
  }

  // Eligible backlog (bits) of one queue at wave w.
  double eligible_bits(std::size_t li, std::size_t d, std::size_t c, std::uint16_t w) const {
    double bits = 0.0;
    for (const auto& b : queues_[qidx(li, d, c)]) {
      if (b.ready_wave > w) break;
      bits += static_cast<double>(b.count) * sources_[b.source].packet_bits;
    }
    return bits;
  }

  void serve_link(std::size_t li, std::uint16_t w) {
    const Topology& t = *topo_;
    if (!t.link_usable(li)) return;
    std::array<std::array<double, kClasses>, 2> demand{};
    double total = 0.0;
    for (std::size_t d = 0; d < 2; ++d)
      for (std::size_t c = 0; c < kClasses; ++c) {
        demand[d][c] = eligible_bits(li, d, c, w);
        total += demand[d][c];
      }
    if (total <= 0.0) return;
    auto& pool = reserve_[li];
    std::array<std::array<double, kClasses>, 2> allow{};
    std::array<std::array<double, kClasses>, 2> rest = demand;
    for (std::size_t c = 0; c < 3; ++c) {
      const double dc = demand[0][c] + demand[1][c];
      if (dc <= 0.0 || pool[c] <= 0.0) continue;
      const double g = std::min(dc, pool[c]);
      pool[c] -= g;
      for (std::size_t d = 0; d < 2; ++d) {
        const double a = g * demand[d][c] / dc;
        allow[d][c] += a;
        rest[d][c] -= a;
      }
    }
    double rest_total = 0.0;
    for (std::size_t d = 0; d < 2; ++d)
      for (std::size_t c = 0; c < kClasses; ++c) rest_total += std::max(0.0, rest[d][c]);
    if (rest_total > 0.0 && pool[3] > 0.0) {
      const double g = std::min(rest_total, pool[3]);
      pool[3] -= g;
      for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t c = 0; c < kClasses; ++c) allow[d][c] += g * std::max(0.0, rest[d][c]) / rest_total;
    }

    const auto [ea, eb] = t.endpoints(li);
    const Link& link = t.link(li);
    for (auto c : kServiceOrder) {
      for (std::size_t d = 0; d < 2; ++d) {
        const std::size_t qi = qidx(li, d, c);
        auto& q = queues_[qi];
        double& credit = credit_[qi];
        credit += allow[d][c];
        const std::size_t to = d == 0 ? eb : ea;
        while (!q.empty() && q.front().ready_wave <= w) {
          Batch& head = q.front();
          const double size = sources_[head.source].packet_bits;
          const auto fit = static_cast<std::int64_t>(std::floor(credit / size + 1e-9));
          if (fit <= 0) break;
          const std::int64_t n = std::min(fit, head.count);
          const double bits = static_cast<double>(n) * size;
          credit = std::max(0.0, credit - bits);
          Batch moved = head;
          moved.count = n;
          // Mean in-tick wait of the served packets plus transmission and propagation.
          moved.delay += (served_bits_[li] + 0.5 * bits) / link.capacity + size / link.capacity + link.propagation_delay;
          served_bits_[li] += bits;
          head.count -= n;
          qcount_[qi] -= n;
          in_queue_add(moved, -n);
          if (head.count == 0) q.pop_front();
          stats_->ingress_bits[to] += bits;
          moved.hop = static_cast<std::uint16_t>(moved.hop + 1);
          forward(moved, static_cast<std::uint16_t>(w + 1));
        }
        if (q.empty() || q.front().ready_wave > w) {
          // Nothing eligible left: unused credit does not carry over.
          if (q.empty()) credit = 0.0;
        }
        // Credit beyond one packet is capacity this queue could not use.
        if (!q.empty()) credit = std::min(credit, sources_[q.front().source].packet_bits);
      }
    }
  }

  void enforce_buffers() {
    const Topology& t = *topo_;
    const std::size_t N = t.node_count();
    // Per node, per class: list of (queue index) for outgoing queues.
    auto& backlog = backlog_;
    backlog.assign(N, {});
    for (std::size_t li = 0; li < t.link_count(); ++li) {
      auto [a, b] = t.endpoints(li);
      for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t c = 0; c < kClasses; ++c) backlog[d == 0 ? a : b][c] += qcount_[qidx(li, d, c)];
    }
    for (std::size_t u = 0; u < N; ++u) {
      std::int64_t total = 0;
      for (auto v : backlog[u]) total += v;
      const auto B = static_cast<std::int64_t>(t.node(u).buffer_capacity);
      if (total <= B) continue;
      std::array<std::int64_t, kClasses> reserved{};
      std::int64_t reserved_sum = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        reserved[c] = static_cast<std::int64_t>(std::floor(slices_[c] * static_cast<double>(B) + 1e-9));
        reserved_sum += reserved[c];
      }
      const std::int64_t shared = std::max<std::int64_t>(0, B - reserved_sum);
      std::array<std::int64_t, kClasses> excess{};
      for (std::size_t c = 0; c < kClasses; ++c) excess[c] = std::max<std::int64_t>(0, backlog[u][c] - reserved[c]);
      auto keep = proportional_split(shared, excess);
      for (std::size_t c = 0; c < kClasses; ++c) {
        const std::int64_t to_drop = excess[c] - keep[c];
        if (to_drop > 0) drop_at(u, c, to_drop);
      }
    }
  }

  // Drops `n` packets of class c queued at node u, spread over u's outgoing
  // queues in proportion to their backlog, newest packets first.
  void drop_at(std::size_t u, std::size_t c, std::int64_t n) {
    const Topology& t = *topo_;
    auto& qs = drop_queues_;
    auto& w = drop_weights_;
    qs.clear();
    w.clear();
    for (auto [v, li] : t.neighbors(u)) {
      (void)v;
      const std::size_t d = t.endpoints(li).first == u ? 0 : 1;
      const std::size_t qi = qidx(li, d, c);
      if (qcount_[qi] > 0) {
        qs.push_back(qi);
        w.push_back(qcount_[qi]);
      }
    }
    auto parts = proportional_split(n, w);
    for (std::size_t k = 0; k < qs.size(); ++k) {
      std::int64_t left = parts[k];
      auto& q = queues_[qs[k]];
      while (left > 0 && !q.empty()) {
        Batch& b = q.back();
        const std::int64_t m = std::min(left, b.count);
        drop(b, m);
        in_queue_add(b, -m);
        b.count -= m;
        qcount_[qs[k]] -= m;
        left -= m;
        if (b.count == 0) q.pop_back();
      }
    }
  }

  const Topology* topo_;
  double tick_;
  std::vector<Source> sources_;
  std::vector<std::vector<std::size_t>> route_nodes_;
  std::vector<std::vector<std::size_t>> route_links_;
  std::map<std::vector<std::size_t>, std::uint32_t> route_index_;
  std::size_t max_hops_ = 1;
  std::vector<std::deque<Batch>> queues_;
  std::vector<std::int64_t> qcount_;
  std::vector<double> credit_;
  std::vector<std::array<double, kClasses>> reserve_;
  std::vector<double> served_bits_;
  std::vector<std::size_t> dirty_;
  std::vector<char> in_dirty_;
  std::array<double, kClasses> slices_{};
  std::int64_t in_queue_ = 0;
  std::int64_t in_queue_legit_ = 0;
  TickStats* stats_ = nullptr;
  std::int64_t tick_now_ = 0;
  std::vector<std::array<std::int64_t, kClasses>> backlog_;
  std::vector<std::size_t> drop_queues_;
  std::vector<std::int64_t> drop_weights_;
};

}  // namespace resil
