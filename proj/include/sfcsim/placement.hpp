#pragma once
#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfcsim/adsch.hpp"
#include "sfcsim/netmodel.hpp"
#include "sfcsim/numkernel.hpp"
#include "sfcsim/workload.hpp"

namespace sfcsim {

struct BadInput : Error {
  using Error::Error;
};

enum class SharedKind { Reader = 0, Parser = 1 };

inline const char* shared_kind_name(SharedKind k) {
  return k == SharedKind::Reader ? "reader" : "parser";
}

struct MicroVnf {
  int parent_vnf = 0;    // index within the chain
  int segment_index = 0;
  int cpu_demand = 1;
  std::optional<SharedKind> shared;
  int overhead_cpu = 0;  // extra cores this segment costs beyond the split
};

struct DecompositionPlan {
  std::vector<MicroVnf> segments;
  double inter_segment_bw = 0.0;
  std::vector<int> reuse_row;  // per segment: repo row id, -1 = fresh deployment
};

// ---------------------------------------------------------------------------
// micro-VNF repository

struct RepoRow {
  int id = 0;
  SharedKind kind = SharedKind::Reader;
  int node = 0;
  int cores_total = 0;  // cores held on the node by this shared instance
  int reuse_used = 0;   // reuse demand currently served
  int refcount = 0;     // owning SFC(s) plus reusing SFCs
};

// Catalog of deployed shared micro-VNFs. An instance deployed with c cores
// can absorb up to (share_capacity-1)*c cores of reuse demand; its cores
// release only when the last referencing SFC departs.
class MicroVnfRepository {
 public:
  explicit MicroVnfRepository(int share_capacity = 4) : share_capacity_(share_capacity) {}

  const std::vector<RepoRow>& rows() const { return rows_; }

  int headroom(const RepoRow& r) const {
    return (share_capacity_ - 1) * r.cores_total - r.reuse_used;
  }

  // lowest-id row of this kind able to absorb `demand`
  const RepoRow* find_reusable(SharedKind kind, int demand) const {
    for (const auto& r : rows_)
      if (r.kind == kind && headroom(r) >= demand) return &r;
    return nullptr;
  }

  const RepoRow* row_by_id(int id) const {
    for (const auto& r : rows_)
      if (r.id == id) return &r;
    return nullptr;
  }

  void add_reuse(int row_id, int demand) {
    auto& r = row_mut(row_id);
    r.reuse_used += demand;
    r.refcount += 1;
  }

  // Registers a fresh shared deployment; merges into an existing (kind,node)
  // row so a shared kind appears at most once per node.
  int register_deployment(SharedKind kind, int node, int cores) {
    for (auto& r : rows_)
      if (r.kind == kind && r.node == node) {
        r.cores_total += cores;
        r.refcount += 1;
        return r.id;
      }
    rows_.push_back({next_id_++, kind, node, cores, 0, 1});
    return rows_.back().id;
  }

  void release_ref(int row_id, int reuse_demand, SubstrateNetwork& net) {
    auto& r = row_mut(row_id);
    r.reuse_used -= reuse_demand;
    r.refcount -= 1;
    if (r.refcount == 0) {
      net.release_cpu(r.node, r.cores_total);
      rows_.erase(std::find_if(rows_.begin(), rows_.end(),
                               [row_id](const RepoRow& x) { return x.id == row_id; }));
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& r : rows_)
      os << "row " << r.id << ' ' << shared_kind_name(r.kind) << ' ' << r.node << ' '
         << r.cores_total << ' ' << r.reuse_used << ' ' << r.refcount << '\n';
    return os.str();
  }

  std::int64_t total_cores() const {
    std::int64_t c = 0;
    for (const auto& r : rows_) c += r.cores_total;
    return c;
  }

 private:
  RepoRow& row_mut(int id) {
    for (auto& r : rows_)
      if (r.id == id) return r;
    throw Error("repository row " + std::to_string(id) + " not found");
  }

  int share_capacity_;
  int next_id_ = 0;
  std::vector<RepoRow> rows_;
};

// ---------------------------------------------------------------------------
// decomposition operations

// True when the chosen node cannot host the VNF and no node in the network
// can host it whole; a bad pick with a feasible node elsewhere prefers a
// monolithic retry over decomposition.
inline bool identify_decomposition_candidate(const VnfSpec& vnf, const SubstrateNetwork& net,
                                             int chosen_node) {
  if (net.node(chosen_node).cpu_available >= vnf.cpu_demand) return false;
  for (const auto& n : net.nodes())
    if (n.cpu_available >= vnf.cpu_demand) return false;
  return true;
}

// Segment count from demand and network availability: segment size
// s = max(1, floor(nai * demand)), m = ceil(demand / s). Scarce networks
// (low NAI) force finer segmentation; m = 1 when nai = 1.
inline int granularity_index(int cpu_demand, double nai) {
  if (cpu_demand < 1) throw BadInput("granularity_index: cpu_demand < 1");
  const int s = std::max(1, static_cast<int>(std::floor(nai * cpu_demand + 1e-9)));
  return (cpu_demand + s - 1) / s;
}

// Near-equal integer split into m segments (sizes differ by at most one,
// larger first, sum preserved). Reader/parser prelude segments are tagged
// per the standard VNF template when m permits; every segment past the first
// carries the configured overhead cores, and internal virtual links carry
// beta * sfc bandwidth.
inline DecompositionPlan decompose(const VnfSpec& vnf, int parent_index, int m, double sfc_bw,
                                   double beta, int overhead_cpu) {
  if (m < 1) throw BadInput("decompose: m < 1");
  DecompositionPlan plan;
  plan.inter_segment_bw = m > 1 ? beta * sfc_bw : 0.0;
  const int base = vnf.cpu_demand / m, rem = vnf.cpu_demand % m;
  for (int i = 0; i < m; ++i) {
    MicroVnf seg;
    seg.parent_vnf = parent_index;
    seg.segment_index = i;
    seg.cpu_demand = base + (i < rem ? 1 : 0);
    seg.overhead_cpu = i > 0 ? overhead_cpu : 0;
    if (m >= 2 && i == 0) seg.shared = SharedKind::Reader;
    if (m >= 3 && i == 1) seg.shared = SharedKind::Parser;
    plan.segments.push_back(seg);
  }
  plan.reuse_row.assign(plan.segments.size(), -1);
  return plan;
}

// Replaces shared segments with references to live repository instances when
// one has headroom; repo refcounts update immediately. Fresh shared segments
// register after their placement succeeds.
inline void rearchitect(DecompositionPlan& plan, MicroVnfRepository& repo) {
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    const auto& seg = plan.segments[i];
    if (!seg.shared) continue;
    const RepoRow* row = repo.find_reusable(*seg.shared, seg.cpu_demand);
    if (!row) continue;
    plan.reuse_row[i] = row->id;
    repo.add_reuse(row->id, seg.cpu_demand);
  }
}

// ---------------------------------------------------------------------------
// DDQL agent

struct PlaceTransition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next;
  bool done = false;
};

// Double-Q rule: evaluate the online net's argmax under the target net.
inline double ddql_target(double reward, bool done, std::span<const double> q_online_next,
                          std::span<const double> q_target_next, double gamma) {
  if (q_online_next.size() != q_target_next.size())
    throw DimensionMismatch("ddql_target: q vectors differ in length");
  if (done) return reward;
  std::size_t best = 0;
  for (std::size_t i = 1; i < q_online_next.size(); ++i)
    if (q_online_next[i] > q_online_next[best]) best = i;
  return reward + gamma * q_target_next[best];
}

struct DdqlConfig {
  double gamma = 0.95;
  double tau = 0.005;
  int batch = 64;
  int buffer = 100000;
  double lr = 1e-3;
  double eps_start = 1.0;
  double eps_min = 0.05;
  double eps_decay = 0.997;  // per episode
  int hidden = 64;
  int warmup = 500;
  int update_every = 4;  // decisions between TD steps
};

class DdqlAgent {
 public:
  DdqlAgent(int state_dim, int node_count, const DdqlConfig& cfg, Rng& rng)
      : cfg_(cfg),
        node_count_(node_count),
        q_(make_mlp({state_dim, cfg.hidden, cfg.hidden, node_count}, Act::Relu, Act::Identity, rng)),
        q_target_(q_),
        opt_(AdamState::for_mlp(q_, cfg.lr)),
        replay_(static_cast<std::size_t>(cfg.buffer)),
        epsilon_(cfg.eps_start) {}

  const DdqlConfig& config() const { return cfg_; }
  double epsilon() const { return epsilon_; }
  int node_count() const { return node_count_; }
  std::size_t replay_size() const { return replay_.size(); }
  Mlp& q_mut() { return q_; }

  // epsilon-greedy over per-node Q values; argmax ties resolve to the lowest
  // node index.
  int select_node(std::span<const double> state, double epsilon, Rng& rng) const {
    if (epsilon > 0.0 && rng.uniform01() < epsilon) return rng.uniform_index(node_count_);
    const auto q = forward(q_, state);
    int best = 0;
    for (int i = 1; i < node_count_; ++i)
      if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)]) best = i;
    return best;
  }

  void push(PlaceTransition t, bool train, Rng& rng) {
    if (!train) return;
    replay_.push(std::move(t));
    ++decisions_;
    if (decisions_ % cfg_.update_every == 0 &&
        replay_.size() >= static_cast<std::size_t>(std::max(cfg_.batch, cfg_.warmup)))
      update(rng);
  }

  double update(Rng& rng) {
    return update_batch(replay_.sample(rng, static_cast<std::size_t>(cfg_.batch)));
  }

  double update_batch(const std::vector<PlaceTransition>& batch) {
    const int n = static_cast<int>(batch.size());
    const int dim = q_.input_size();
    Matrix states(n, dim), next_states(n, dim);
    for (int i = 0; i < n; ++i) {
      const auto& t = batch[static_cast<std::size_t>(i)];
      std::copy(t.state.begin(), t.state.end(), states.row(i));
      std::copy(t.next.begin(), t.next.end(), next_states.row(i));
    }
    Matrix q_next = forward_batch(q_, next_states);
    Matrix qt_next = forward_batch(q_target_, next_states);
    BatchTrace trace;
    Matrix q = forward_batch(q_, states, &trace);
    Matrix up(n, node_count_);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& t = batch[static_cast<std::size_t>(i)];
      const double y = ddql_target(
          t.reward, t.done,
          std::span<const double>(q_next.row(i), static_cast<std::size_t>(node_count_)),
          std::span<const double>(qt_next.row(i), static_cast<std::size_t>(node_count_)),
          cfg_.gamma);
      const double e = q.row(i)[t.action] - y;
      loss += e * e;
      up.row(i)[t.action] = 2.0 * e / n;
    }
    loss /= n;
    MlpGrad grad = MlpGrad::zeros_like(q_);
    backward_batch(q_, trace, up, grad);
    adam_step(q_, grad, opt_);
    soft_update(q_target_, q_, cfg_.tau);
    return loss;
  }

  void end_episode() { epsilon_ = std::max(cfg_.eps_min, epsilon_ * cfg_.eps_decay); }

  void save(std::ostream& os) const { save_mlp(os, q_); }

  void load(std::istream& is) {
    Mlp q = load_mlp(is);
    if (!q.same_shape(q_)) throw ArchitectureMismatch("checkpoint does not match the agent");
    q_ = q;
    q_target_ = q_;
  }

 private:
  DdqlConfig cfg_;
  int node_count_;
  Mlp q_, q_target_;
  AdamState opt_;
  ReplayBuffer<PlaceTransition> replay_;
  double epsilon_;
  long decisions_ = 0;
};

// ---------------------------------------------------------------------------
// rewards

// Per-decision reward. node_quality is the chosen node's remaining-CPU
// fraction after placement, so balanced packing scores higher. The load term
// pays for placing HD services at high load and NHD at low load; it is
// zeroed in traffic-aware-less runs.
inline double local_reward(bool placed, double node_quality, double macro, double micro,
                           double reliability, double hd_flag, double load_now,
                           bool traffic_aware = true) {
  if (!placed) return -1.0;
  const double load_term = traffic_aware ? (hd_flag > 0.5 ? load_now : 1.0 - load_now) : 0.0;
  return 0.4 * node_quality + 0.2 * (macro + micro) / 2.0 + 0.2 * reliability + 0.2 * load_term;
}

inline double global_reward(bool sfc_fully_placed) { return sfc_fully_placed ? 5.0 : 0.0; }

// ---------------------------------------------------------------------------
// placement ledger

struct PlacedSegment {
  int parent_vnf = 0;
  int segment_index = 0;
  int node = 0;
  int cores = 0;     // demand cores (held via the repo row when repo_owner)
  int overhead = 0;  // decomposition overhead cores, always SFC-owned
  std::optional<SharedKind> shared;
  bool repo_owner = false;
  bool reused = false;  // no cores held; references a repo row
  int repo_row = -1;
  int reuse_demand = 0;
};

struct PlacedPath {
  Path path;
  double bw = 0.0;
  double budget_ms = 0.0;
};

// Mapping record for one accepted SFC. paths[k] connects segments[k] to
// segments[k+1]; co-located neighbors record a single-node path.
struct SfcPlacement {
  int sfc_id = 0;
  std::vector<PlacedSegment> segments;
  std::vector<PlacedPath> paths;

  std::string serialize() const {
    std::ostringstream os;
    os << "sfc " << sfc_id << '\n';
    for (const auto& s : segments) {
      os << "  seg parent=" << s.parent_vnf << " idx=" << s.segment_index << " node=" << s.node
         << " cores=" << s.cores << " overhead=" << s.overhead
         << " shared=" << (s.shared ? shared_kind_name(*s.shared) : "-")
         << " owner=" << (s.repo_owner ? 1 : 0) << " reused=" << (s.reused ? 1 : 0)
         << " row=" << s.repo_row << " reuse_demand=" << s.reuse_demand << '\n';
    }
    for (const auto& p : paths) {
      os << "  path bw=" << fmt_double(p.bw, 17) << " budget=" << fmt_double(p.budget_ms, 17)
         << " nodes=";
      for (std::size_t i = 0; i < p.path.nodes.size(); ++i)
        os << (i ? "," : "") << p.path.nodes[i];
      os << '\n';
    }
    return os.str();
  }
};

// Releases everything an accepted SFC held: direct cores, repository
// references and path bandwidth.
inline void release_placement(const SfcPlacement& m, SubstrateNetwork& net,
                              MicroVnfRepository& repo) {
  for (const auto& s : m.segments) {
    if (s.overhead > 0) net.release_cpu(s.node, s.overhead);
    if (s.reused)
      repo.release_ref(s.repo_row, s.reuse_demand, net);
    else if (s.repo_owner)
      repo.release_ref(s.repo_row, 0, net);
    else if (s.cores > 0)
      net.release_cpu(s.node, s.cores);
  }
  for (const auto& p : m.paths) net.release_path(p.path, p.bw);
}

// ---------------------------------------------------------------------------
// place_sfc

struct PlacementInputs {
  const SfcRequest* sfc = nullptr;
  PriorityLabel priority;
  DemandLabel hd = DemandLabel::NHD;
  double load_now = 0.0;  // zeroed under traffic-aware-less runs
  bool traffic_aware = true;
};

enum class PlaceStatus { Placed, RejectedResources, RejectedQos };

struct PlacementResult {
  PlaceStatus status = PlaceStatus::RejectedResources;
  std::string reason;
  SfcPlacement mapping;
  double reward_sum = 0.0;
  int decisions = 0;
};

inline std::vector<double> build_placement_state(const SubstrateNetwork& net, int cpu_demand,
                                                 double bw, const PlacementInputs& in,
                                                 double cpu_norm, double bw_norm) {
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(net.node_count()) + 6);
  s.push_back(clamp01(cpu_demand / cpu_norm));
  s.push_back(clamp01(bw / bw_norm));
  for (const auto& n : net.nodes())
    s.push_back(static_cast<double>(n.cpu_available) / n.cpu_capacity);
  s.push_back(in.priority.macro);
  s.push_back(in.priority.micro);
  s.push_back(in.hd == DemandLabel::HD ? 1.0 : 0.0);
  s.push_back(in.load_now);
  return s;
}

inline int placement_state_dim(int node_count) { return node_count + 6; }

struct PlacementPolicy {
  double beta = 0.1;     // inter-segment bandwidth fraction
  int overhead_cpu = 1;  // cores per segment beyond the first
  double cpu_norm = 24.0;
  double bw_norm = 120.0;
};

// Walks the chain, placing each VNF monolithically when possible and through
// GI-driven decomposition plus re-architecture when no node fits it whole.
// Any unrecoverable failure rolls net and repo back to the pre-call state
// (snapshot restore, byte-identical). In training mode each placement
// decision pushes one transition; the terminal one carries the global bonus.
inline PlacementResult place_sfc(DdqlAgent& agent, const PlacementInputs& in,
                                 SubstrateNetwork& net, MicroVnfRepository& repo, Rng& rng,
                                 bool train, const PlacementPolicy& pol = {}) {
  const SfcRequest& sfc = *in.sfc;
  const SubstrateNetwork net_snapshot = net;
  const MicroVnfRepository repo_snapshot = repo;

  PlacementResult res;
  res.mapping.sfc_id = sfc.id;
  const int hops = static_cast<int>(sfc.vnfs.size()) - 1;
  const double hop_budget = hops > 0 ? sfc.qos.delay_ms / hops : sfc.qos.delay_ms;
  const double eps = train ? agent.epsilon() : 0.0;

  struct Pending {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    bool live = false;
  } pending;

  auto flush_pending = [&](const std::vector<double>& next_state, bool done) {
    if (!pending.live) return;
    PlaceTransition t;
    t.state = std::move(pending.state);
    t.action = pending.action;
    t.reward = pending.reward;
    t.next = done ? std::vector<double>(t.state.size(), 0.0) : next_state;
    t.done = done;
    pending.live = false;
    agent.push(std::move(t), train, rng);
  };

  int prev_node = -1;
  bool qos_reject = false;
  std::string fail_reason;

  // Routes prev_node -> node consuming `bw`; a failure is structural when
  // even the pristine network has no feasible path for this pair.
  auto route = [&](int node, double bw) -> bool {
    if (prev_node < 0) return true;
    if (prev_node == node) {
      res.mapping.paths.push_back({Path{{node}, {}, 0.0}, bw, hop_budget});
      return true;
    }
    auto p = net.feasible_path(prev_node, node, bw, hop_budget);
    if (p && net.reserve_path(*p, bw)) {
      res.mapping.paths.push_back({*p, bw, hop_budget});
      return true;
    }
    if (!net_snapshot.feasible_path(prev_node, node, bw, hop_budget)) {
      qos_reject = true;
      fail_reason = "no latency-feasible path " + std::to_string(prev_node) + "->" +
                    std::to_string(node);
    } else {
      fail_reason =
          "bandwidth exhausted " + std::to_string(prev_node) + "->" + std::to_string(node);
    }
    return false;
  };

  // Commits one unit (whole VNF or fresh micro-segment) at the agent-chosen
  // node; on failure the decision is still recorded with reward -1.
  auto commit_unit = [&](const std::vector<double>& state, int node, int cpu_need, int parent,
                         int seg_idx, std::optional<SharedKind> shared, int overhead,
                         double link_bw, bool register_shared) -> bool {
    ++res.decisions;
    flush_pending(state, false);
    const int total = cpu_need + overhead;
    double reward = local_reward(false, 0, 0, 0, 0, 0, 0);
    bool ok = false;
    if (net.node(node).cpu_available >= total) {
      net.allocate_cpu(node, total);
      if (route(node, link_bw)) {
        const auto& nd = net.node(node);
        reward = local_reward(true, static_cast<double>(nd.cpu_available) / nd.cpu_capacity,
                              in.priority.macro, in.priority.micro, sfc.reliability,
                              in.hd == DemandLabel::HD ? 1.0 : 0.0, in.load_now, in.traffic_aware);
        PlacedSegment ps;
        ps.parent_vnf = parent;
        ps.segment_index = seg_idx;
        ps.node = node;
        ps.cores = cpu_need;
        ps.overhead = overhead;
        ps.shared = shared;
        if (shared && register_shared) {
          ps.repo_owner = true;
          ps.repo_row = repo.register_deployment(*shared, node, cpu_need);
        }
        res.mapping.segments.push_back(ps);
        prev_node = node;
        ok = true;
      } else {
        net.release_cpu(node, total);
      }
    } else if (fail_reason.empty()) {
      fail_reason = "node " + std::to_string(node) + " lacks " + std::to_string(total) + " cores";
    }
    res.reward_sum += reward;
    pending = {state, node, reward, true};
    return ok;
  };

  bool failed = false;
  for (std::size_t vi = 0; vi < sfc.vnfs.size() && !failed; ++vi) {
    const auto& vnf = sfc.vnfs[vi];
    fail_reason.clear();
    const auto state =
        build_placement_state(net, vnf.cpu_demand, sfc.qos.bandwidth, in, pol.cpu_norm, pol.bw_norm);
    const int node = agent.select_node(state, eps, rng);
    if (net.node(node).cpu_available >= vnf.cpu_demand) {
      if (!commit_unit(state, node, vnf.cpu_demand, static_cast<int>(vi), 0, std::nullopt, 0,
                       sfc.qos.bandwidth, false))
        failed = true;
      continue;
    }
    if (!identify_decomposition_candidate(vnf, net, node)) {
      // Bad pick while some node could host the VNF whole: monolithic retry
      // is preferred, so this attempt fails and the service keeps waiting.
      if (!commit_unit(state, node, vnf.cpu_demand, static_cast<int>(vi), 0, std::nullopt, 0,
                       sfc.qos.bandwidth, false))
        failed = true;
      continue;
    }
    // The probing pick above is re-planned as micro-segments; it is not
    // recorded as a transition of its own.
    const int m = granularity_index(vnf.cpu_demand, net.availability_index());
    DecompositionPlan plan =
        decompose(vnf, static_cast<int>(vi), m, sfc.qos.bandwidth, pol.beta, pol.overhead_cpu);
    rearchitect(plan, repo);
    for (std::size_t si = 0; si < plan.segments.size() && !failed; ++si) {
      const auto& seg = plan.segments[si];
      const double link_bw = si == 0 ? sfc.qos.bandwidth : plan.inter_segment_bw;
      if (plan.reuse_row[si] >= 0) {
        // Shared instance already deployed: only route the flow through it.
        const RepoRow* row = repo.row_by_id(plan.reuse_row[si]);
        if (!route(row->node, link_bw)) {
          failed = true;
          break;
        }
        PlacedSegment ps;
        ps.parent_vnf = static_cast<int>(vi);
        ps.segment_index = seg.segment_index;
        ps.node = row->node;
        ps.shared = seg.shared;
        ps.reused = true;
        ps.repo_row = row->id;
        ps.reuse_demand = seg.cpu_demand;
        res.mapping.segments.push_back(ps);
        prev_node = row->node;
        continue;
      }
      const auto seg_state = build_placement_state(net, seg.cpu_demand, sfc.qos.bandwidth, in,
                                                   pol.cpu_norm, pol.bw_norm);
      const int seg_node = agent.select_node(seg_state, eps, rng);
      if (!commit_unit(seg_state, seg_node, seg.cpu_demand, static_cast<int>(vi),
                       seg.segment_index, seg.shared, seg.overhead_cpu, link_bw, true))
        failed = true;
    }
  }

  if (!failed) {
    pending.reward += global_reward(true);
    res.reward_sum += global_reward(true);
    flush_pending({}, true);
    res.status = PlaceStatus::Placed;
    return res;
  }
  flush_pending({}, true);
  net = net_snapshot;
  repo = repo_snapshot;
  res.mapping = SfcPlacement{};
  res.mapping.sfc_id = sfc.id;
  res.status = qos_reject ? PlaceStatus::RejectedQos : PlaceStatus::RejectedResources;
  res.reason = fail_reason.empty() ? "insufficient resources" : fail_reason;
  return res;
}

// ---------------------------------------------------------------------------
// independent mapping validator

// Re-walks live placements and repository rows onto a fresh copy of the
// topology and re-checks node capacity, link bandwidth, latency budgets,
// path continuity and CPU conservation. The final re-walked state must match
// the live network byte for byte. Empty result means valid.
inline std::vector<std::string> validate_mappings(const SubstrateNetwork& pristine,
                                                  const std::vector<const SfcPlacement*>& live,
                                                  const std::vector<const SfcRequest*>& requests,
                                                  const std::vector<RepoRow>& repo_rows,
                                                  const SubstrateNetwork& observed) {
  std::vector<std::string> bad;
  SubstrateNetwork net = pristine;
  for (const auto& r : repo_rows)
    if (!net.allocate_cpu(r.node, r.cores_total))
      bad.push_back("repo row over-allocates node " + std::to_string(r.node));
  for (std::size_t i = 0; i < live.size(); ++i) {
    const auto& m = *live[i];
    const auto id = std::to_string(m.sfc_id);
    int accounted = 0;
    for (const auto& s : m.segments) {
      // repo_owner demand cores were allocated through the repository row
      const int direct = s.overhead + (s.repo_owner || s.reused ? 0 : s.cores);
      if (direct > 0 && !net.allocate_cpu(s.node, direct))
        bad.push_back("sfc " + id + " over-allocates node " + std::to_string(s.node));
      accounted += s.reused ? s.reuse_demand : s.cores;
      if ((s.reused || s.repo_owner) && !std::any_of(repo_rows.begin(), repo_rows.end(),
                                                     [&](const RepoRow& r) { return r.id == s.repo_row; }))
        bad.push_back("sfc " + id + " references a dead repository row");
    }
    if (accounted != requests[i]->total_cpu_demand())
      bad.push_back("sfc " + id + " cpu conservation violated");
    if (!m.segments.empty() && m.paths.size() != m.segments.size() - 1)
      bad.push_back("sfc " + id + " path/segment count mismatch");
    for (std::size_t k = 0; k < m.paths.size(); ++k) {
      const auto& p = m.paths[k];
      if (p.path.nodes.empty()) {
        bad.push_back("sfc " + id + " empty path record");
        continue;
      }
      if (k + 1 < m.segments.size() &&
          (p.path.nodes.front() != m.segments[k].node || p.path.nodes.back() != m.segments[k + 1].node))
        bad.push_back("sfc " + id + " path endpoints do not match segments");
      if (p.path.links.empty()) continue;  // co-located
      if (p.path.latency_ms > p.budget_ms + 1e-9)
        bad.push_back("sfc " + id + " path exceeds latency budget");
      double lat = 0.0;
      for (std::size_t li = 0; li < p.path.links.size(); ++li) {
        const auto& l = pristine.links()[static_cast<std::size_t>(p.path.links[li])];
        lat += l.latency_ms;
        const int a = p.path.nodes[li], b = p.path.nodes[li + 1];
        if (l.a != std::min(a, b) || l.b != std::max(a, b))
          bad.push_back("sfc " + id + " discontinuous path");
      }
      if (std::abs(lat - p.path.latency_ms) > 1e-9)
        bad.push_back("sfc " + id + " latency total mismatch");
      if (!net.reserve_path(p.path, p.bw))
        bad.push_back("sfc " + id + " over-reserves bandwidth");
    }
  }
  if (net.serialize() != observed.serialize())
    bad.push_back("re-walked state differs from live network state");
  return bad;
}

}  // namespace sfcsim
