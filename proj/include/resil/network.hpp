#pragma once

// Cyber-physical system state: nodes, capacitated undirected links, flows,
// and the routing/slicing policies the control plane enacts. Also the graph
// algorithms the shields and controllers rely on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "resil/error.hpp"

namespace resil {

enum class NodeRole { iot_device, mec_server, edge_controller, core_router, gnb };

enum class TrafficClass { telemetry = 0, video = 1, urllc = 2 };

inline constexpr std::array<TrafficClass, 3> kTrafficClasses = {
    TrafficClass::telemetry, TrafficClass::video, TrafficClass::urllc};

inline std::string_view to_string(NodeRole r) {
  switch (r) {
    case NodeRole::iot_device: return "iot_device";
    case NodeRole::mec_server: return "mec_server";
    case NodeRole::edge_controller: return "edge_controller";
    case NodeRole::core_router: return "core_router";
    case NodeRole::gnb: return "gnb";
  }
  return "?";
}

inline std::optional<NodeRole> parse_node_role(std::string_view s) {
  if (s == "iot_device") return NodeRole::iot_device;
  if (s == "mec_server") return NodeRole::mec_server;
  if (s == "edge_controller") return NodeRole::edge_controller;
  if (s == "core_router") return NodeRole::core_router;
  if (s == "gnb") return NodeRole::gnb;
  return std::nullopt;
}

inline std::string_view to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::telemetry: return "telemetry";
    case TrafficClass::video: return "video";
    case TrafficClass::urllc: return "urllc";
  }
  return "?";
}

inline std::optional<TrafficClass> parse_traffic_class(std::string_view s) {
  if (s == "telemetry") return TrafficClass::telemetry;
  if (s == "video") return TrafficClass::video;
  if (s == "urllc") return TrafficClass::urllc;
  return std::nullopt;
}

struct NodeSpec {
  std::string id;
  NodeRole role = NodeRole::core_router;
  std::vector<std::string> hosted_subsystems;
  int buffer_capacity = 1000;  // packets
  bool up = true;
};

struct Link {
  std::string id;
  std::string a;
  std::string b;
  double capacity = 0.0;           // bits/s, shared by both directions
  double propagation_delay = 0.0;  // s
  bool up = true;
};

struct Flow {
  std::string id;
  std::string source;
  std::string destination;
  TrafficClass traffic_class = TrafficClass::telemetry;
  double offered_rate = 0.0;  // mean bits/s
  double packet_size = 0.0;   // bits
};

using Path = std::vector<std::string>;  // node ids, source first

struct NetworkPolicy {
  std::uint64_t id = 0;
  std::map<std::string, std::vector<Path>> routes;  // flow id -> paths
  std::map<TrafficClass, double> slice_allocation;   // fraction of every link
  std::string issued_by;
  double issued_at = 0.0;

  double slice(TrafficClass c) const {
    auto it = slice_allocation.find(c);
    return it == slice_allocation.end() ? 0.0 : it->second;
  }
  double shared_fraction() const {
    double s = 0.0;
    for (auto c : kTrafficClasses) s += slice(c);
    return std::max(0.0, 1.0 - s);
  }

  void validate_slices() const {
    double sum = 0.0;
    for (const auto& [c, f] : slice_allocation) {
      if (!(f >= 0.0 && f <= 1.0)) throw DomainError("slice fraction outside [0, 1]");
      sum += f;
    }
    if (sum > 1.0 + 1e-12) throw DomainError("slice fractions sum above 1");
  }
};

// Byte string identifying a policy's routes and slices; ids, issuer and
// issue time are excluded. Paths of a flow are sorted since traffic splits
// evenly over them regardless of listing order.
inline std::string canonical_form(const NetworkPolicy& p) {
  std::string out;
  out.reserve(64 * p.routes.size() + 64);
  for (const auto& [flow, paths] : p.routes) {
    out += flow;
    out += '{';
    std::vector<const Path*> sorted;
    sorted.reserve(paths.size());
    for (const auto& path : paths) sorted.push_back(&path);
    std::sort(sorted.begin(), sorted.end(), [](const Path* x, const Path* y) { return *x < *y; });
    for (const Path* path : sorted) {
      out += '[';
      for (const auto& n : *path) {
        out += n;
        out += ',';
      }
      out += ']';
    }
    out += '}';
  }
  out += '|';
  char buf[64];
  for (auto c : kTrafficClasses) {
    std::snprintf(buf, sizeof buf, "%s=%a;", std::string(to_string(c)).c_str(), p.slice(c));
    out += buf;
  }
  return out;
}

// Every field, paths in listed order; used for bytewise comparisons.
inline std::string serialize_policy(const NetworkPolicy& p) {
  std::string out = std::to_string(p.id) + '|' + p.issued_by + '|';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a|", p.issued_at);
  out += buf;
  for (const auto& [flow, paths] : p.routes) {
    out += flow;
    out += '{';
    for (const auto& path : paths) {
      out += '[';
      for (const auto& n : path) {
        out += n;
        out += ',';
      }
      out += ']';
    }
    out += '}';
  }
  out += '|';
  for (const auto& [c, f] : p.slice_allocation) {
    std::snprintf(buf, sizeof buf, "%s=%a;", std::string(to_string(c)).c_str(), f);
    out += buf;
  }
  return out;
}

inline bool equivalent(const NetworkPolicy& a, const NetworkPolicy& b) {
  return canonical_form(a) == canonical_form(b);
}

class Topology {
 public:
  struct Adjacent {
    std::size_t node;
    std::size_t link;
  };

  std::size_t add_node(NodeSpec n) {
    if (n.id.empty()) throw ConfigError("nodes", "node id must be non-empty");
    if (node_index_.count(n.id)) throw ConfigError("nodes." + n.id, "duplicate node id");
    if (n.buffer_capacity < 1) throw ConfigError("nodes." + n.id, "buffer_capacity must be >= 1");
    node_index_.emplace(n.id, nodes_.size());
    live_.push_back(n.up);
    nodes_.push_back(std::move(n));
    adjacency_.emplace_back();
    removed_.push_back(false);
    return nodes_.size() - 1;
  }

  std::size_t add_link(Link l) {
    const std::string where = "links." + l.id;
    if (l.id.empty()) throw ConfigError("links", "link id must be non-empty");
    if (link_index_.count(l.id)) throw ConfigError(where, "duplicate link id");
    auto ia = node_index(l.a);
    auto ib = node_index(l.b);
    if (!ia) throw ConfigError(where, "unknown node '" + l.a + "'");
    if (!ib) throw ConfigError(where, "unknown node '" + l.b + "'");
    if (*ia == *ib) throw ConfigError(where, "endpoints must be distinct");
    if (!(l.capacity > 0.0) || !std::isfinite(l.capacity))
      throw ConfigError(where, "capacity must be positive");
    if (!(l.propagation_delay >= 0.0)) throw ConfigError(where, "propagation_delay must be >= 0");
    if (link_between(*ia, *ib)) throw ConfigError(where, "parallel links are not supported");
    const std::size_t li = links_.size();
    link_index_.emplace(l.id, li);
    pair_index_.emplace(pair_key(*ia, *ib), li);
    links_.push_back(std::move(l));
    endpoints_.push_back({*ia, *ib});
    usable_.push_back(0);
    refresh_link(li);
    adjacency_[*ia].push_back({*ib, li});
    adjacency_[*ib].push_back({*ia, li});
    return li;
  }

  std::optional<std::size_t> node_index(std::string_view id) const {
    auto it = node_index_.find(std::string(id));
    if (it == node_index_.end() || removed_[it->second]) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> link_index(std::string_view id) const {
    auto it = link_index_.find(std::string(id));
    if (it == link_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> link_between(std::size_t u, std::size_t v) const {
    auto it = pair_index_.find(pair_key(u, v));
    if (it == pair_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }
  const NodeSpec& node(std::size_t i) const { return nodes_[i]; }
  const Link& link(std::size_t i) const { return links_[i]; }
  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  std::span<const Adjacent> neighbors(std::size_t u) const { return adjacency_[u]; }
  std::pair<std::size_t, std::size_t> endpoints(std::size_t li) const { return endpoints_[li]; }
  std::size_t other_end(std::size_t li, std::size_t u) const {
    return endpoints_[li].first == u ? endpoints_[li].second : endpoints_[li].first;
  }

  bool removed(std::size_t u) const { return removed_[u]; }
  bool node_up(std::size_t u) const { return live_[u]; }
  bool link_usable(std::size_t li) const { return usable_[li]; }

  void set_node_up(std::size_t u, bool up) {
    nodes_[u].up = up;
    refresh_node(u);
  }
  void set_link_up(std::size_t li, bool up) {
    links_[li].up = up;
    refresh_link(li);
  }

  // Takes the node out of the topology. Its id no longer resolves and every
  // incident link becomes unusable.
  void remove_node(std::string_view id) {
    auto i = node_index(id);
    if (!i) throw DomainError("unknown node '" + std::string(id) + "'");
    removed_[*i] = true;
    refresh_node(*i);
  }

  // Connectivity of the usable subgraph over nodes that are up.
  bool connected() const {
    std::size_t start = nodes_.size();
    std::size_t live = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (node_up(i)) {
        ++live;
        if (start == nodes_.size()) start = i;
      }
    if (live <= 1) return true;
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      for (auto [v, li] : adjacency_[u])
        if (!seen[v] && link_usable(li)) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
    }
    return count == live;
  }

  // Link id for a hop, or nullopt when the pair is not adjacent.
  std::optional<std::size_t> hop_link(std::string_view a, std::string_view b) const {
    auto ia = node_index(a);
    auto ib = node_index(b);
    if (!ia || !ib) return std::nullopt;
    return link_between(*ia, *ib);
  }

  bool operator==(const Topology& o) const {
    if (nodes_.size() != o.nodes_.size() || links_.size() != o.links_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].id != o.nodes_[i].id || nodes_[i].up != o.nodes_[i].up ||
          removed_[i] != o.removed_[i])
        return false;
    for (std::size_t i = 0; i < links_.size(); ++i)
      if (links_[i].id != o.links_[i].id || links_[i].up != o.links_[i].up) return false;
    return true;
  }

 private:
  void refresh_node(std::size_t u) {
    live_[u] = !removed_[u] && nodes_[u].up;
    for (const auto& a : adjacency_[u]) refresh_link(a.link);
  }
  void refresh_link(std::size_t li) {
    auto [a, b] = endpoints_[li];
    usable_[li] = links_[li].up && live_[a] && live_[b];
  }

  static std::uint64_t pair_key(std::size_t u, std::size_t v) {
    if (u > v) std::swap(u, v);
    return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
  }

  std::vector<NodeSpec> nodes_;
  std::vector<Link> links_;
  std::vector<std::pair<std::size_t, std::size_t>> endpoints_;
  std::vector<char> live_;    // up and not removed
  std::vector<char> usable_;  // link up with both ends live
  std::vector<std::vector<Adjacent>> adjacency_;
  std::vector<bool> removed_;
  std::unordered_map<std::string, std::size_t> node_index_;
  std::unordered_map<std::string, std::size_t> link_index_;
  std::unordered_map<std::uint64_t, std::size_t> pair_index_;
};

// Restrictions applied to path searches.
struct PathFilter {
  std::set<std::size_t> avoid_nodes;      // never traversed unless an endpoint
  std::vector<char> allowed_links;        // empty: every usable link allowed
};

namespace detail {

inline bool link_ok(const Topology& t, std::size_t li, const PathFilter& f) {
  if (!t.link_usable(li)) return false;
  if (!f.allowed_links.empty() && !f.allowed_links[li]) return false;
  return true;
}

inline Path to_path(const Topology& t, const std::vector<std::size_t>& nodes) {
  Path p;
  p.reserve(nodes.size());
  for (auto n : nodes) p.push_back(t.node(n).id);
  return p;
}

}  // namespace detail

// Fewest-hop path over usable links; ties resolved by adjacency order.
inline std::optional<std::vector<std::size_t>> shortest_path_idx(const Topology& t, std::size_t src,
                                                                 std::size_t dst,
                                                                 const PathFilter& f = {}) {
  if (!t.node_up(src) || !t.node_up(dst)) return std::nullopt;
  if (src == dst) return std::vector<std::size_t>{src};
  std::vector<std::size_t> parent(t.node_count(), SIZE_MAX);
  std::queue<std::size_t> q;
  parent[src] = src;
  q.push(src);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto [v, li] : t.neighbors(u)) {
      if (parent[v] != SIZE_MAX || !detail::link_ok(t, li, f)) continue;
      if (v != dst && f.avoid_nodes.count(v)) continue;
      parent[v] = u;
      if (v == dst) {
        std::vector<std::size_t> path{dst};
        while (path.back() != src) path.push_back(parent[path.back()]);
        std::reverse(path.begin(), path.end());
        return path;
      }
      q.push(v);
    }
  }
  return std::nullopt;
}

inline std::optional<Path> shortest_path(const Topology& t, std::string_view src,
                                         std::string_view dst, const PathFilter& f = {}) {
  auto s = t.node_index(src);
  auto d = t.node_index(dst);
  if (!s || !d) throw DomainError("unknown endpoint");
  auto p = shortest_path_idx(t, *s, *d, f);
  if (!p) return std::nullopt;
  return detail::to_path(t, *p);
}

// Up to `limit` pairwise edge-disjoint paths, found by repeated BFS
// augmentation on unit capacities (each undirected link admits one unit in
// either direction) followed by flow decomposition. When the max-flow value
// is below `limit`, exactly max-flow paths are returned.
inline std::vector<std::vector<std::size_t>> edge_disjoint_paths_idx(const Topology& t,
                                                                     std::size_t src,
                                                                     std::size_t dst,
                                                                     std::size_t limit,
                                                                     const PathFilter& f = {}) {
  std::vector<std::vector<std::size_t>> result;
  if (src == dst || limit == 0 || !t.node_up(src) || !t.node_up(dst)) return result;
  const std::size_t L = t.link_count();
  // flow[li] in {-1, 0, 1}: +1 means one unit from endpoints.first to .second.
  std::vector<int> flow(L, 0);
  auto residual = [&](std::size_t li, std::size_t from) {
    auto [a, b] = t.endpoints(li);
    int dir = (from == a) ? 1 : -1;
    (void)b;
    return flow[li] != dir;  // can push one more unit in direction `dir`
  };
  auto passable = [&](std::size_t v) { return v == dst || v == src || !f.avoid_nodes.count(v); };

  std::size_t value = 0;
  std::vector<std::size_t> parent_node(t.node_count());
  std::vector<std::size_t> parent_link(t.node_count());
  while (value < limit) {
    std::fill(parent_node.begin(), parent_node.end(), SIZE_MAX);
    std::queue<std::size_t> q;
    parent_node[src] = src;
    q.push(src);
    while (!q.empty() && parent_node[dst] == SIZE_MAX) {
      auto u = q.front();
      q.pop();
      for (auto [v, li] : t.neighbors(u)) {
        if (parent_node[v] != SIZE_MAX || !detail::link_ok(t, li, f) || !passable(v)) continue;
        if (!residual(li, u)) continue;
        parent_node[v] = u;
        parent_link[v] = li;
        q.push(v);
      }
    }
    if (parent_node[dst] == SIZE_MAX) break;
    for (auto v = dst; v != src; v = parent_node[v]) {
      auto u = parent_node[v];
      auto li = parent_link[v];
      auto [a, b] = t.endpoints(li);
      (void)b;
      flow[li] += (u == a) ? 1 : -1;
    }
    ++value;
  }
  // Decompose: walk from src along saturated arcs, consuming them.
  for (std::size_t k = 0; k < value; ++k) {
    std::vector<std::size_t> path{src};
    std::vector<char> on_path(t.node_count(), 0);
    on_path[src] = 1;
    auto u = src;
    while (u != dst) {
      bool advanced = false;
      for (auto [v, li] : t.neighbors(u)) {
        auto [a, b] = t.endpoints(li);
        (void)b;
        int dir = (u == a) ? 1 : -1;
        if (flow[li] != dir) continue;
        flow[li] = 0;
        if (on_path[v]) {
          // Cycle in the decomposition: cut it out.
          while (path.back() != v) {
            on_path[path.back()] = 0;
            path.pop_back();
          }
          u = v;
        } else {
          path.push_back(v);
          on_path[v] = 1;
          u = v;
        }
        advanced = true;
        break;
      }
      if (!advanced) break;  // unreachable for a valid flow
    }
    if (u == dst) result.push_back(std::move(path));
  }
  return result;
}

inline std::vector<Path> edge_disjoint_paths(const Topology& t, std::string_view src,
                                             std::string_view dst, std::size_t limit,
                                             const PathFilter& f = {}) {
  auto s = t.node_index(src);
  auto d = t.node_index(dst);
  if (!s || !d) throw DomainError("unknown endpoint");
  if (*s == *d) throw DomainError("edge_disjoint_paths requires src != dst");
  std::vector<Path> out;
  for (const auto& p : edge_disjoint_paths_idx(t, *s, *d, limit, f)) out.push_back(detail::to_path(t, p));
  return out;
}

// Resolves a node-sequence path to link indices. Throws RouteError on a
// non-adjacent pair, or on a down link when `require_up` is set.
inline std::vector<std::size_t> path_links(const Topology& t, const Path& p, bool require_up) {
  std::vector<std::size_t> out;
  if (p.size() < 2) return out;
  out.reserve(p.size() - 1);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    auto li = t.hop_link(p[i], p[i + 1]);
    if (!li) throw RouteError(p[i] + "-" + p[i + 1], "no link between " + p[i] + " and " + p[i + 1]);
    if (require_up && !t.link_usable(*li))
      throw RouteError(t.link(*li).id, "route crosses down link " + t.link(*li).id);
    out.push_back(*li);
  }
  return out;
}

// Offered load of every link as a fraction of its capacity. Each flow splits
// evenly over its listed paths. Values above 1 denote overload.
inline std::map<std::string, double> link_utilization(const Topology& t, const NetworkPolicy& p,
                                                      std::span<const Flow> flows) {
  std::vector<double> load(t.link_count(), 0.0);
  for (const auto& f : flows) {
    auto it = p.routes.find(f.id);
    if (it == p.routes.end() || it->second.empty()) continue;
    const double share = f.offered_rate / static_cast<double>(it->second.size());
    for (const auto& path : it->second)
      for (auto li : path_links(t, path, true)) load[li] += share;
  }
  for (const auto& [fid, paths] : p.routes) {
    (void)paths;
    bool known = std::any_of(flows.begin(), flows.end(), [&](const Flow& f) { return f.id == fid; });
    if (!known) throw DomainError("policy routes unknown flow '" + fid + "'");
  }
  std::map<std::string, double> out;
  for (std::size_t li = 0; li < t.link_count(); ++li)
    out.emplace(t.link(li).id, load[li] / t.link(li).capacity);
  return out;
}

// Half the fraction of flows whose path set changed plus half the total
// variation distance between slice allocations (the unreserved remainder
// counts as one more category).
inline double policy_delta(const NetworkPolicy& proposed, const NetworkPolicy& active) {
  if (proposed.routes.size() != active.routes.size())
    throw DomainError("policies cover different flow sets");
  std::size_t changed = 0;
  auto ia = active.routes.begin();
  for (auto ip = proposed.routes.begin(); ip != proposed.routes.end(); ++ip, ++ia) {
    if (ip->first != ia->first) throw DomainError("policies cover different flow sets");
    auto sorted = [](std::vector<Path> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    if (sorted(ip->second) != sorted(ia->second)) ++changed;
  }
  const double route_frac =
      proposed.routes.empty() ? 0.0 : static_cast<double>(changed) / proposed.routes.size();
  double tv = 0.0;
  for (auto c : kTrafficClasses) tv += std::abs(proposed.slice(c) - active.slice(c));
  tv += std::abs(proposed.shared_fraction() - active.shared_fraction());
  tv *= 0.5;
  return std::clamp(0.5 * route_frac + 0.5 * tv, 0.0, 1.0);
}

enum class EnactKind { fresh, rollback };

struct EnactedPolicy {
  std::shared_ptr<const NetworkPolicy> policy;
  double enacted_at = 0.0;
  EnactKind kind = EnactKind::fresh;
};

// Mutable state of one run: topology with live up/down flags, the flow set,
// the active policy and the log of enactments.
struct NetworkState {
  Topology topology;
  std::vector<Flow> flows;
  NetworkPolicy active;
  std::vector<EnactedPolicy> enacted;
  std::uint64_t highest_id = 0;
  std::uint64_t revision = 0;  // bumped on every enactment

  const Flow* find_flow(std::string_view id) const {
    for (const auto& f : flows)
      if (f.id == id) return &f;
    return nullptr;
  }
};

// Replaces routing and slicing atomically. Fresh policies must carry an id
// above every previously enacted one; rollbacks re-enact a stored policy
// verbatim. Paths may cross links that are currently down (a degraded
// rollback target is still enactable) but every node must exist and every
// hop must be a link.
inline void apply_policy(NetworkState& s, std::shared_ptr<const NetworkPolicy> pp, double now,
                         EnactKind kind = EnactKind::fresh) {
  if (!pp) throw EnactmentError("null policy");
  const NetworkPolicy& p = *pp;
  if (kind == EnactKind::fresh && !s.enacted.empty() && p.id <= s.highest_id)
    throw EnactmentError("policy id " + std::to_string(p.id) + " does not exceed " +
                         std::to_string(s.highest_id));
  try {
    p.validate_slices();
  } catch (const DomainError& e) {
    throw EnactmentError(e.what());
  }
  for (const auto& [fid, paths] : p.routes) {
    const Flow* f = s.find_flow(fid);
    if (!f) throw EnactmentError("policy routes unknown flow '" + fid + "'");
    for (const auto& path : paths) {
      if (path.size() < 2 || path.front() != f->source || path.back() != f->destination)
        throw EnactmentError("path of flow '" + fid + "' does not join its endpoints");
      for (const auto& n : path)
        if (!s.topology.node_index(n))
          throw EnactmentError("policy references removed or unknown node '" + n + "'");
      try {
        path_links(s.topology, path, false);
      } catch (const RouteError& e) {
        throw EnactmentError(e.what());
      }
    }
  }
  s.active = p;
  s.enacted.push_back({std::move(pp), now, kind});
  if (kind == EnactKind::fresh || p.id > s.highest_id) s.highest_id = std::max(s.highest_id, p.id);
  ++s.revision;
}

inline void apply_policy(NetworkState& s, const NetworkPolicy& p, double now,
                         EnactKind kind = EnactKind::fresh) {
  apply_policy(s, std::make_shared<const NetworkPolicy>(p), now, kind);
}

}  // namespace resil
