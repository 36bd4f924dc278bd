#pragma once
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "sfcsim/util.hpp"

namespace sfcsim {

struct UnknownTopology : Error {
  using Error::Error;
};
struct MalformedSpec : Error {
  using Error::Error;
};
struct UnknownNode : Error {
  using Error::Error;
};
struct OverRelease : Error {
  using Error::Error;
};

// Bandwidth is tracked in integer micro-units so reserve/release pairs and
// rollbacks restore state exactly (no floating-point drift).
using BwUnits = std::int64_t;
inline BwUnits bw_to_units(double bw) { return static_cast<BwUnits>(std::llround(bw * 1e6)); }
inline double bw_from_units(BwUnits u) { return static_cast<double>(u) * 1e-6; }

struct SubstrateNode {
  int id = 0;
  int cpu_capacity = 0;
  int cpu_available = 0;
};

struct SubstrateLink {
  int a = 0, b = 0;  // endpoints, a < b
  BwUnits bw_capacity = 0;
  BwUnits bw_available = 0;
  double latency_ms = 0.0;
};

struct TopologySpec {
  std::string name;  // "netrail", "bteurope" or "" for explicit
  std::string profile = "default";  // "default" | "scarce"
  // explicit tables; used when name is empty
  std::vector<std::pair<int, int>> nodes;                       // {id, cpu}
  std::vector<std::tuple<int, int, double, double>> links;      // {a, b, bw, latency_ms}
  int cpu_capacity_override = 0;                                // 0 = per profile
};

// A routed path: ordered node sequence plus the link indices between them.
// Empty path (src == dst) has no links and zero latency.
struct Path {
  std::vector<int> nodes;
  std::vector<int> links;
  double latency_ms = 0.0;
  bool empty() const { return links.empty(); }
};

class SubstrateNetwork {
 public:
  SubstrateNetwork() = default;

  const std::vector<SubstrateNode>& nodes() const { return nodes_; }
  const std::vector<SubstrateLink>& links() const { return links_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int link_count() const { return static_cast<int>(links_.size()); }

  const SubstrateNode& node(int id) const {
    check_node(id);
    return nodes_[static_cast<std::size_t>(id)];
  }

  bool allocate_cpu(int node_id, int cores) {
    check_node(id_or_throw(node_id));
    if (cores < 1) throw Error("allocate_cpu: cores must be >= 1");
    auto& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.cpu_available < cores) return false;
    n.cpu_available -= cores;
    return true;
  }

  void release_cpu(int node_id, int cores) {
    check_node(id_or_throw(node_id));
    if (cores < 0) throw Error("release_cpu: negative cores");
    if (cores == 0) return;
    auto& n = nodes_[static_cast<std::size_t>(node_id)];
    if (n.cpu_available + cores > n.cpu_capacity)
      throw OverRelease("release_cpu would exceed capacity on node " + std::to_string(node_id));
    n.cpu_available += cores;
  }

  // (sum of available CPU) / (sum of capacity), in [0,1].
  double availability_index() const {
    std::int64_t avail = 0, cap = 0;
    for (const auto& n : nodes_) {
      avail += n.cpu_available;
      cap += n.cpu_capacity;
    }
    return static_cast<double>(avail) / static_cast<double>(cap);
  }

  // Minimum-latency path among paths whose links all carry >= bw_demand and
  // whose total latency fits the budget. Equal-latency ties resolve to the
  // lexicographically smallest node sequence.
  std::optional<Path> feasible_path(int src, int dst, double bw_demand,
                                    double latency_budget_ms) const {
    check_node(src);
    check_node(dst);
    if (src == dst) {
      Path p;
      p.nodes = {src};
      return p;
    }
    const BwUnits demand = bw_to_units(bw_demand);
    const int n = node_count();
    struct Cand {
      double dist;
      std::vector<int> seq;
      bool operator>(const Cand& o) const {
        if (dist != o.dist) return dist > o.dist;
        return seq > o.seq;
      }
    };
    std::vector<char> settled(static_cast<std::size_t>(n), 0);
    std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> pq;
    pq.push({0.0, {src}});
    while (!pq.empty()) {
      Cand c = pq.top();
      pq.pop();
      const int u = c.seq.back();
      if (settled[static_cast<std::size_t>(u)]) continue;
      settled[static_cast<std::size_t>(u)] = 1;
      if (u == dst) {
        if (c.dist > latency_budget_ms) return std::nullopt;
        return materialize(c.seq, c.dist);
      }
      for (const auto& [v, li] : adj_[static_cast<std::size_t>(u)]) {
        if (settled[static_cast<std::size_t>(v)]) continue;
        const auto& l = links_[static_cast<std::size_t>(li)];
        if (l.bw_available < demand) continue;
        const double nd = c.dist + l.latency_ms;
        if (nd > latency_budget_ms) continue;
        Cand nc{nd, c.seq};
        nc.seq.push_back(v);
        pq.push(std::move(nc));
      }
    }
    return std::nullopt;
  }

  // All-or-nothing bandwidth reservation across the path.
  bool reserve_path(const Path& p, double bw_demand) {
    const BwUnits d = bw_to_units(bw_demand);
    if (d == 0 || p.links.empty()) return true;
    std::size_t done = 0;
    for (; done < p.links.size(); ++done) {
      auto& l = links_[static_cast<std::size_t>(p.links[done])];
      if (l.bw_available < d) break;
      l.bw_available -= d;
    }
    if (done == p.links.size()) return true;
    for (std::size_t i = 0; i < done; ++i)
      links_[static_cast<std::size_t>(p.links[i])].bw_available += d;
    return false;
  }

  void release_path(const Path& p, double bw_demand) {
    const BwUnits d = bw_to_units(bw_demand);
    if (d == 0) return;
    for (int li : p.links) {
      auto& l = links_[static_cast<std::size_t>(li)];
      if (l.bw_available + d > l.bw_capacity)
        throw OverRelease("release_path would exceed link capacity");
      l.bw_available += d;
    }
  }

  std::int64_t total_cpu_capacity() const {
    std::int64_t c = 0;
    for (const auto& n : nodes_) c += n.cpu_capacity;
    return c;
  }
  std::int64_t total_cpu_available() const {
    std::int64_t c = 0;
    for (const auto& n : nodes_) c += n.cpu_available;
    return c;
  }

  // Canonical text dump; used for byte-identical state comparisons.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& n : nodes_) os << "n " << n.id << ' ' << n.cpu_capacity << ' ' << n.cpu_available << '\n';
    for (const auto& l : links_)
      os << "l " << l.a << ' ' << l.b << ' ' << l.bw_capacity << ' ' << l.bw_available << ' '
         << fmt_double(l.latency_ms, 17) << '\n';
    return os.str();
  }

  friend SubstrateNetwork load_topology(const TopologySpec& spec);

 private:
  Path materialize(const std::vector<int>& seq, double dist) const {
    Path p;
    p.nodes = seq;
    p.latency_ms = dist;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      const int a = std::min(seq[i], seq[i + 1]);
      const int b = std::max(seq[i], seq[i + 1]);
      p.links.push_back(link_index_.at({a, b}));
    }
    return p;
  }

  static int id_or_throw(int id) { return id; }
  void check_node(int id) const {
    if (id < 0 || id >= node_count()) throw UnknownNode("unknown node id " + std::to_string(id));
  }

  std::vector<SubstrateNode> nodes_;
  std::vector<SubstrateLink> links_;
  std::vector<std::vector<std::pair<int, int>>> adj_;  // node -> (neighbor, link idx)
  std::map<std::pair<int, int>, int> link_index_;
};

namespace detail {

inline void builtin_tables(const std::string& name, std::vector<std::pair<int, int>>& nodes,
                           std::vector<std::tuple<int, int, double, double>>& links, int cpu,
                           double bw, double lat) {
  auto ring_plus_chords = [&](int n, const std::vector<std::pair<int, int>>& chords) {
    for (int i = 0; i < n; ++i) nodes.push_back({i, cpu});
    for (int i = 0; i < n; ++i) links.push_back({i, (i + 1) % n, bw, lat});
    for (auto [a, b] : chords) links.push_back({a, b, bw, lat});
  };
  if (name == "netrail") {
    // 7 nodes, 10 links
    ring_plus_chords(7, {{0, 3}, {1, 4}, {2, 5}});
  } else if (name == "bteurope") {
    // 24 nodes, 37 links
    ring_plus_chords(24, {{0, 12},
                          {1, 7},
                          {2, 16},
                          {3, 9},
                          {4, 20},
                          {5, 11},
                          {6, 18},
                          {8, 14},
                          {10, 22},
                          {13, 19},
                          {15, 21},
                          {17, 23},
                          {2, 21}});
  } else {
    throw UnknownTopology("unknown topology '" + name + "'");
  }
}

}  // namespace detail

inline SubstrateNetwork load_topology(const TopologySpec& spec) {
  std::vector<std::pair<int, int>> nodes = spec.nodes;
  std::vector<std::tuple<int, int, double, double>> links = spec.links;
  if (!spec.name.empty()) {
    nodes.clear();
    links.clear();
    int cpu = spec.profile == "scarce" ? 40 : 100;
    if (spec.cpu_capacity_override > 0) cpu = spec.cpu_capacity_override;
    detail::builtin_tables(spec.name, nodes, links, cpu, 1000.0, 2.0);
  }
  if (nodes.empty()) throw MalformedSpec("topology has no nodes");

  SubstrateNetwork net;
  std::vector<int> seen;
  for (auto [id, cpu] : nodes) {
    if (id != static_cast<int>(net.nodes_.size()))
      throw MalformedSpec("node ids must be dense and ascending from 0");
    if (cpu < 1) throw MalformedSpec("non-positive cpu capacity on node " + std::to_string(id));
    net.nodes_.push_back({id, cpu, cpu});
  }
  net.adj_.resize(net.nodes_.size());
  for (auto [a, b, bw, lat] : links) {
    if (a == b) throw MalformedSpec("self-loop link");
    if (a < 0 || a >= net.node_count() || b < 0 || b >= net.node_count())
      throw MalformedSpec("link endpoint out of range");
    if (bw <= 0.0) throw MalformedSpec("non-positive link bandwidth");
    if (lat < 0.0) throw MalformedSpec("negative link latency");
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (net.link_index_.count({lo, hi})) throw MalformedSpec("duplicate link");
    const int li = net.link_count();
    net.links_.push_back({lo, hi, bw_to_units(bw), bw_to_units(bw), lat});
    net.link_index_[{lo, hi}] = li;
    net.adj_[static_cast<std::size_t>(lo)].push_back({hi, li});
    net.adj_[static_cast<std::size_t>(hi)].push_back({lo, li});
  }
  for (auto& al : net.adj_) std::sort(al.begin(), al.end());

  // connectivity check
  std::vector<char> vis(net.nodes_.size(), 0);
  std::vector<int> stack{0};
  vis[0] = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (auto [v, li] : net.adj_[static_cast<std::size_t>(u)])
      if (!vis[static_cast<std::size_t>(v)]) {
        vis[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
  }
  for (char c : vis)
    if (!c) throw MalformedSpec("topology is not connected");
  return net;
}

// Topology file: optional "name"/"profile" key-value lines, then [nodes] rows
// "id cpu" and [links] rows "a b bw latency_ms". '#' starts a comment.
inline TopologySpec parse_topology_text(const std::string& text) {
  TopologySpec spec;
  enum class Sect { None, Nodes, Links } sect = Sect::None;
  std::istringstream is(text);
  std::string raw;
  while (std::getline(is, raw)) {
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    if (line == "[nodes]") {
      sect = Sect::Nodes;
      continue;
    }
    if (line == "[links]") {
      sect = Sect::Links;
      continue;
    }
    if (auto eq = line.find('='); eq != std::string::npos && sect == Sect::None) {
      std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      if (key == "name")
        spec.name = val;
      else if (key == "profile")
        spec.profile = val;
      else
        throw MalformedSpec("unknown topology key '" + key + "'");
      continue;
    }
    auto tok = split_ws(line);
    try {
      if (sect == Sect::Nodes) {
        if (tok.size() != 2) throw MalformedSpec("node row needs: id cpu");
        spec.nodes.push_back({std::stoi(tok[0]), std::stoi(tok[1])});
      } else if (sect == Sect::Links) {
        if (tok.size() != 4) throw MalformedSpec("link row needs: a b bw latency_ms");
        spec.links.push_back({std::stoi(tok[0]), std::stoi(tok[1]), std::stod(tok[2]), std::stod(tok[3])});
      } else {
        throw MalformedSpec("row outside of [nodes]/[links]: " + line);
      }
    } catch (const std::invalid_argument&) {
      throw MalformedSpec("bad number in topology row: " + line);
    }
  }
  if (!spec.nodes.empty()) spec.name.clear();
  return spec;
}

}  // namespace sfcsim
