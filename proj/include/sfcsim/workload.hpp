#pragma once
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sfcsim/rng.hpp"
#include "sfcsim/util.hpp"

namespace sfcsim {

struct BadConfig : Error {
  using Error::Error;
};

enum class VnfKind { WanOptimizer, EdgeFirewall, Monitor, AppFirewall, LoadBalancer };
inline constexpr int kVnfKindCount = 5;

inline const char* vnf_kind_name(VnfKind k) {
  switch (k) {
    case VnfKind::WanOptimizer: return "wan-optimizer";
    case VnfKind::EdgeFirewall: return "edge-firewall";
    case VnfKind::Monitor: return "monitor";
    case VnfKind::AppFirewall: return "app-firewall";
    case VnfKind::LoadBalancer: return "load-balancer";
  }
  return "?";
}

struct VnfSpec {
  int cpu_demand = 1;
  VnfKind kind = VnfKind::Monitor;
};

struct QosSpec {
  double delay_ms = 20.0;
  double jitter_ms = 3.0;
  double packet_loss = 0.01;
  double bandwidth = 50.0;
};

// Sinusoidal long-term load shape; instantaneous load stays in [0,1].
struct TrafficProfile {
  double base_load = 0.2;
  double amplitude = 0.1;
  double period_s = 60.0;
  double phase = 0.0;
  double noise_sigma = 0.0;
};

struct SfcRequest {
  int id = 0;
  std::vector<VnfSpec> vnfs;
  QosSpec qos;
  double arrival_time = 0.0;
  double lifetime = 1.0;
  double twt = 10.0;  // threshold waiting time before forced expiry
  double reliability = 0.99;
  double popularity = 1.0;
  TrafficProfile profile;

  int total_cpu_demand() const {
    int c = 0;
    for (const auto& v : vnfs) c += v.cpu_demand;
    return c;
  }
};

struct ChainConfig {
  int chain_min = 3;
  int chain_max = 5;
  double er_p = 0.3;                 // Erdos-Renyi edge probability
  double cpu_demand_mean = 4.0;
  double cpu_demand_sigma = 1.5;

  void validate() const {
    if (chain_min < 1 || chain_min > chain_max) throw BadConfig("chain_min/chain_max invalid");
    if (er_p < 0.0 || er_p > 1.0) throw BadConfig("er_p outside [0,1]");
    if (cpu_demand_mean < 1.0) throw BadConfig("cpu_demand_mean < 1");
  }
};

struct WorkloadConfig {
  double rate = 2.0;        // Poisson arrival rate, 1/s
  int max_services = 100;   // per-episode cap
  double horizon_s = 50.0;
  ChainConfig chain;

  // Gaussian QoS parameters (mean, sigma) with clamping ranges.
  double delay_mean = 20.0, delay_sigma = 8.0, delay_min = 8.0, delay_max = 60.0;
  double jitter_mean = 3.0, jitter_sigma = 1.0, jitter_min = 0.0, jitter_max = 10.0;
  double loss_mean = 0.01, loss_sigma = 0.005, loss_min = 0.0, loss_max = 0.05;
  double bw_mean = 50.0, bw_sigma = 15.0, bw_min = 1.0, bw_max = 120.0;

  double twt_min = 5.0, twt_max = 30.0;
  double lifetime_mean = 200.0;
  double rel_min = 0.9, rel_max = 0.999;
  double pop_sigma = 0.3;  // popularity ~ LogNormal(0, pop_sigma)

  // Two-regime traffic profiles: the heavy mode is what makes HD/NHD
  // separable for the classifier. Heavy-traffic services also demand more
  // processing (heavy_cpu_factor scales their per-VNF mean; the light mode
  // scales down so the blended mean stays at cpu_demand_mean).
  double heavy_prob = 0.3;
  double heavy_cpu_factor = 1.8;
  double heavy_base_min = 0.5, heavy_base_max = 0.7;
  double heavy_amp_min = 0.2, heavy_amp_max = 0.3;
  double light_base_min = 0.05, light_base_max = 0.2;
  double light_amp_min = 0.05, light_amp_max = 0.15;
  double period_min = 20.0, period_max = 120.0;
  double noise_max = 0.03;

  // Ground-truth HD percentile on popularity x mean-load (validation only).
  double hd_percentile = 0.70;

  void validate() const {
    if (rate <= 0.0) throw BadConfig("rate must be > 0");
    if (max_services < 1) throw BadConfig("max_services must be >= 1");
    if (horizon_s < 0.0) throw BadConfig("horizon must be >= 0");
    chain.validate();
    if (twt_min <= 0.0 || twt_min > twt_max) throw BadConfig("twt range invalid");
    if (lifetime_mean <= 0.0) throw BadConfig("lifetime_mean must be > 0");
    if (heavy_prob < 0.0 || heavy_prob > 1.0) throw BadConfig("heavy_prob outside [0,1]");
    if (heavy_cpu_factor < 1.0 || heavy_prob * heavy_cpu_factor >= 1.0)
      throw BadConfig("heavy_cpu_factor must be >= 1 with heavy_prob * factor < 1");
    if (hd_percentile <= 0.0 || hd_percentile >= 1.0) throw BadConfig("hd_percentile outside (0,1)");
  }
};

// Samples an ER graph on n vertices and linearizes it to a chain: DFS from
// vertex 0 with ascending neighbor order, unvisited vertices appended in id
// order. With p=0 this is the identity order. demand_scale shifts the
// per-VNF demand mean (heavy-traffic services need more processing).
inline std::vector<VnfSpec> generate_chain(Rng& rng, const ChainConfig& cfg,
                                           double demand_scale = 1.0) {
  cfg.validate();
  const int n = cfg.chain_min + rng.uniform_index(cfg.chain_max - cfg.chain_min + 1);
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(cfg.er_p)) {
        adj[static_cast<std::size_t>(i)].push_back(j);
        adj[static_cast<std::size_t>(j)].push_back(i);
      }
  std::vector<int> order;
  std::vector<char> vis(static_cast<std::size_t>(n), 0);
  for (int start = 0; start < n; ++start) {
    if (vis[static_cast<std::size_t>(start)]) continue;
    std::vector<int> stack{start};
    vis[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      order.push_back(u);
      auto nb = adj[static_cast<std::size_t>(u)];
      std::sort(nb.rbegin(), nb.rend());
      for (int v : nb)
        if (!vis[static_cast<std::size_t>(v)]) {
          vis[static_cast<std::size_t>(v)] = 1;
          stack.push_back(v);
        }
    }
  }
  std::vector<VnfSpec> chain;
  chain.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    VnfSpec v;
    v.kind = static_cast<VnfKind>(order[i] % kVnfKindCount);
    const double d = std::round(rng.normal(cfg.cpu_demand_mean * demand_scale, cfg.cpu_demand_sigma));
    v.cpu_demand = static_cast<int>(std::max(1.0, d));
    chain.push_back(v);
  }
  return chain;
}

// Expected (noise-free) instantaneous load, clamped to [0,1].
inline double load_at(const TrafficProfile& p, double t) {
  const double s = std::sin(6.283185307179586 * t / p.period_s + p.phase);
  return clamp01(p.base_load + p.amplitude * (1.0 + s) / 2.0);
}

// Noisy sample; the noise draw is keyed by (stream_seed, id, t-bucket) so it
// is reproducible and independent of other random streams.
inline double load_sample(const TrafficProfile& p, double t, int id, std::uint64_t stream_seed) {
  if (p.noise_sigma <= 0.0) return load_at(p, t);
  const auto bucket = static_cast<std::uint64_t>(std::llround(t * 1000.0));
  Rng r(Rng::mix(stream_seed, Rng::mix(static_cast<std::uint64_t>(id), bucket)));
  return clamp01(load_at(p, t) + r.normal(0.0, p.noise_sigma));
}

// Left-Riemann sum of the expected load; the classifier's volume feature.
inline double cumulative_load(const TrafficProfile& p, double t0, double t1, double dt) {
  if (t0 > t1) throw BadConfig("cumulative_load: t0 > t1");
  if (dt <= 0.0) throw BadConfig("cumulative_load: dt <= 0");
  double acc = 0.0;
  for (double t = t0; t < t1; t += dt) acc += load_at(p, t) * std::min(dt, t1 - t);
  return acc;
}

inline double profile_mean_load(const TrafficProfile& p) {
  return clamp01(p.base_load + p.amplitude / 2.0);
}
inline double profile_peak_load(const TrafficProfile& p) {
  return clamp01(p.base_load + p.amplitude);
}

inline SfcRequest draw_request(Rng& rng, const WorkloadConfig& cfg, int id, double arrival) {
  SfcRequest r;
  r.id = id;
  r.arrival_time = arrival;
  const bool heavy = rng.bernoulli(cfg.heavy_prob);
  const double light_factor =
      cfg.heavy_prob < 1.0
          ? (1.0 - cfg.heavy_prob * cfg.heavy_cpu_factor) / (1.0 - cfg.heavy_prob)
          : 1.0;
  r.vnfs = generate_chain(rng, cfg.chain,
                          heavy ? cfg.heavy_cpu_factor : std::max(0.2, light_factor));
  r.qos.delay_ms = clamp(rng.normal(cfg.delay_mean, cfg.delay_sigma), cfg.delay_min, cfg.delay_max);
  r.qos.jitter_ms = clamp(rng.normal(cfg.jitter_mean, cfg.jitter_sigma), cfg.jitter_min, cfg.jitter_max);
  r.qos.packet_loss = clamp(rng.normal(cfg.loss_mean, cfg.loss_sigma), cfg.loss_min, cfg.loss_max);
  r.qos.bandwidth = clamp(rng.normal(cfg.bw_mean, cfg.bw_sigma), cfg.bw_min, cfg.bw_max);
  r.twt = rng.uniform(cfg.twt_min, cfg.twt_max);
  r.lifetime = rng.exponential(1.0 / cfg.lifetime_mean);
  r.reliability = rng.uniform(cfg.rel_min, cfg.rel_max);
  r.popularity = rng.lognormal(0.0, cfg.pop_sigma);
  auto& p = r.profile;
  if (heavy) {
    p.base_load = rng.uniform(cfg.heavy_base_min, cfg.heavy_base_max);
    p.amplitude = rng.uniform(cfg.heavy_amp_min, cfg.heavy_amp_max);
  } else {
    p.base_load = rng.uniform(cfg.light_base_min, cfg.light_base_max);
    p.amplitude = rng.uniform(cfg.light_amp_min, cfg.light_amp_max);
  }
  if (p.base_load + p.amplitude > 1.0) p.amplitude = 1.0 - p.base_load;
  p.period_s = rng.uniform(cfg.period_min, cfg.period_max);
  p.phase = rng.uniform(0.0, 6.283185307179586);
  p.noise_sigma = rng.uniform(0.0, cfg.noise_max);
  return r;
}

// Poisson arrival stream truncated at min(horizon, max_services).
inline std::vector<SfcRequest> generate_arrivals(Rng& rng, const WorkloadConfig& cfg,
                                                 double horizon_s) {
  cfg.validate();
  std::vector<SfcRequest> out;
  double t = 0.0;
  int id = 0;
  while (static_cast<int>(out.size()) < cfg.max_services) {
    t += rng.exponential(cfg.rate);
    if (t > horizon_s) break;
    out.push_back(draw_request(rng, cfg, id++, t));
  }
  return out;
}

inline std::uint64_t request_stream_hash(const std::vector<SfcRequest>& reqs) {
  Fnv1a h;
  for (const auto& r : reqs) {
    h.feed_i64(r.id);
    h.feed_double(r.arrival_time);
    h.feed_i64(static_cast<std::int64_t>(r.vnfs.size()));
    for (const auto& v : r.vnfs) {
      h.feed_i64(v.cpu_demand);
      h.feed_i64(static_cast<std::int64_t>(v.kind));
    }
    h.feed_double(r.qos.delay_ms);
    h.feed_double(r.qos.jitter_ms);
    h.feed_double(r.qos.packet_loss);
    h.feed_double(r.qos.bandwidth);
    h.feed_double(r.twt);
    h.feed_double(r.lifetime);
    h.feed_double(r.reliability);
    h.feed_double(r.popularity);
    h.feed_double(r.profile.base_load);
    h.feed_double(r.profile.amplitude);
  }
  return h.h;
}

}  // namespace sfcsim
