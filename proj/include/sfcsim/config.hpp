#pragma once
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfcsim/simengine.hpp"

namespace sfcsim {

struct ExperimentConfig {
  PipelineConfig pipeline;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir;
  std::string topology_file;
  // compare variants: name -> list of dotted-key overrides
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> variants;
};

namespace detail {

struct SchemaEntry {
  std::string key;  // "section.name"
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline double parse_double(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigInvalid("bad number '" + v + "'");
    return x;
  } catch (const std::logic_error&) {
    throw ConfigInvalid("bad number '" + v + "'");
  }
}

inline int parse_int(const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw ConfigInvalid("bad integer '" + v + "'");
    return x;
  } catch (const std::logic_error&) {
    throw ConfigInvalid("bad integer '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigInvalid("bad bool '" + v + "'");
}

inline const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> s = [] {
    std::vector<SchemaEntry> e;
    auto dbl = [&e](const char* key, auto member) {
      e.push_back({key, [member](const ExperimentConfig& c) { return fmt_double(member(const_cast<ExperimentConfig&>(c)), 17); },
                   [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_double(v); }});
    };
    auto num = [&e](const char* key, auto member) {
      e.push_back({key, [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); },
                   [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_int(v); }});
    };
    auto flag = [&e](const char* key, auto member) {
      e.push_back({key, [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)) ? "true" : "false"; },
                   [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_bool(v); }});
    };

    e.push_back({"experiment.scenario",
                 [](const ExperimentConfig& c) { return c.pipeline.scenario; },
                 [](ExperimentConfig& c, const std::string& v) { c.pipeline.scenario = v; }});
    num("experiment.episodes", [](ExperimentConfig& c) -> int& { return c.pipeline.episodes; });
    num("experiment.ma_window", [](ExperimentConfig& c) -> int& { return c.pipeline.ma_window; });
    flag("experiment.train", [](ExperimentConfig& c) -> bool& { return c.pipeline.train; });
    e.push_back({"experiment.seeds",
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (auto v : c.seeds) s += (s.empty() ? "" : " ") + std::to_string(v);
                   return s;
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds.clear();
                   try {
                     for (const auto& t : split_ws(v)) c.seeds.push_back(std::stoull(t));
                   } catch (const std::logic_error&) {
                     throw ConfigInvalid("bad seed list '" + v + "'");
                   }
                   if (c.seeds.empty()) throw ConfigInvalid("seeds list empty");
                 }});
    e.push_back({"experiment.out_dir", [](const ExperimentConfig& c) { return c.out_dir; },
                 [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; }});

    e.push_back({"netmodel.topology",
                 [](const ExperimentConfig& c) { return c.pipeline.topology.name; },
                 [](ExperimentConfig& c, const std::string& v) { c.pipeline.topology.name = v; }});
    e.push_back({"netmodel.profile",
                 [](const ExperimentConfig& c) { return c.pipeline.topology.profile; },
                 [](ExperimentConfig& c, const std::string& v) { c.pipeline.topology.profile = v; }});
    num("netmodel.cpu_capacity",
        [](ExperimentConfig& c) -> int& { return c.pipeline.topology.cpu_capacity_override; });
    e.push_back({"netmodel.topology_file",
                 [](const ExperimentConfig& c) { return c.topology_file; },
                 [](ExperimentConfig& c, const std::string& v) { c.topology_file = v; }});

    auto wl = [](ExperimentConfig& c) -> WorkloadConfig& { return c.pipeline.workload; };
    dbl("workload.rate", [wl](ExperimentConfig& c) -> double& { return wl(c).rate; });
    num("workload.max_services", [wl](ExperimentConfig& c) -> int& { return wl(c).max_services; });
    dbl("workload.horizon", [wl](ExperimentConfig& c) -> double& { return wl(c).horizon_s; });
    num("workload.chain_min", [wl](ExperimentConfig& c) -> int& { return wl(c).chain.chain_min; });
    num("workload.chain_max", [wl](ExperimentConfig& c) -> int& { return wl(c).chain.chain_max; });
    dbl("workload.er_p", [wl](ExperimentConfig& c) -> double& { return wl(c).chain.er_p; });
    dbl("workload.cpu_demand_mean",
        [wl](ExperimentConfig& c) -> double& { return wl(c).chain.cpu_demand_mean; });
    dbl("workload.cpu_demand_sigma",
        [wl](ExperimentConfig& c) -> double& { return wl(c).chain.cpu_demand_sigma; });
    dbl("workload.delay_mean", [wl](ExperimentConfig& c) -> double& { return wl(c).delay_mean; });
    dbl("workload.delay_sigma", [wl](ExperimentConfig& c) -> double& { return wl(c).delay_sigma; });
    dbl("workload.delay_min", [wl](ExperimentConfig& c) -> double& { return wl(c).delay_min; });
    dbl("workload.delay_max", [wl](ExperimentConfig& c) -> double& { return wl(c).delay_max; });
    dbl("workload.jitter_mean", [wl](ExperimentConfig& c) -> double& { return wl(c).jitter_mean; });
    dbl("workload.jitter_sigma", [wl](ExperimentConfig& c) -> double& { return wl(c).jitter_sigma; });
    dbl("workload.jitter_min", [wl](ExperimentConfig& c) -> double& { return wl(c).jitter_min; });
    dbl("workload.jitter_max", [wl](ExperimentConfig& c) -> double& { return wl(c).jitter_max; });
    dbl("workload.loss_mean", [wl](ExperimentConfig& c) -> double& { return wl(c).loss_mean; });
    dbl("workload.loss_sigma", [wl](ExperimentConfig& c) -> double& { return wl(c).loss_sigma; });
    dbl("workload.loss_min", [wl](ExperimentConfig& c) -> double& { return wl(c).loss_min; });
    dbl("workload.loss_max", [wl](ExperimentConfig& c) -> double& { return wl(c).loss_max; });
    dbl("workload.bw_mean", [wl](ExperimentConfig& c) -> double& { return wl(c).bw_mean; });
    dbl("workload.bw_sigma", [wl](ExperimentConfig& c) -> double& { return wl(c).bw_sigma; });
    dbl("workload.bw_min", [wl](ExperimentConfig& c) -> double& { return wl(c).bw_min; });
    dbl("workload.bw_max", [wl](ExperimentConfig& c) -> double& { return wl(c).bw_max; });
    dbl("workload.twt_min", [wl](ExperimentConfig& c) -> double& { return wl(c).twt_min; });
    dbl("workload.twt_max", [wl](ExperimentConfig& c) -> double& { return wl(c).twt_max; });
    dbl("workload.lifetime_mean",
        [wl](ExperimentConfig& c) -> double& { return wl(c).lifetime_mean; });
    dbl("workload.rel_min", [wl](ExperimentConfig& c) -> double& { return wl(c).rel_min; });
    dbl("workload.rel_max", [wl](ExperimentConfig& c) -> double& { return wl(c).rel_max; });
    dbl("workload.pop_sigma", [wl](ExperimentConfig& c) -> double& { return wl(c).pop_sigma; });
    dbl("workload.heavy_prob", [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_prob; });
    dbl("workload.heavy_cpu_factor",
        [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_cpu_factor; });
    dbl("workload.heavy_base_min", [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_base_min; });
    dbl("workload.heavy_base_max", [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_base_max; });
    dbl("workload.heavy_amp_min", [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_amp_min; });
    dbl("workload.heavy_amp_max", [wl](ExperimentConfig& c) -> double& { return wl(c).heavy_amp_max; });
    dbl("workload.light_base_min", [wl](ExperimentConfig& c) -> double& { return wl(c).light_base_min; });
    dbl("workload.light_base_max", [wl](ExperimentConfig& c) -> double& { return wl(c).light_base_max; });
    dbl("workload.light_amp_min", [wl](ExperimentConfig& c) -> double& { return wl(c).light_amp_min; });
    dbl("workload.light_amp_max", [wl](ExperimentConfig& c) -> double& { return wl(c).light_amp_max; });
    dbl("workload.period_min", [wl](ExperimentConfig& c) -> double& { return wl(c).period_min; });
    dbl("workload.period_max", [wl](ExperimentConfig& c) -> double& { return wl(c).period_max; });
    dbl("workload.noise_max", [wl](ExperimentConfig& c) -> double& { return wl(c).noise_max; });
    dbl("workload.hd_percentile", [wl](ExperimentConfig& c) -> double& { return wl(c).hd_percentile; });

    auto dy = [](ExperimentConfig& c) -> DyPrConfig& { return c.pipeline.dypr; };
    dbl("dypr.lambda", [dy](ExperimentConfig& c) -> double& { return dy(c).lambda; });
    num("dypr.observatory", [dy](ExperimentConfig& c) -> int& { return dy(c).observatory_threshold; });
    num("dypr.batch", [dy](ExperimentConfig& c) -> int& { return dy(c).batch; });
    dbl("dypr.accuracy_threshold",
        [dy](ExperimentConfig& c) -> double& { return dy(c).accuracy_threshold; });
    num("dypr.accuracy_window", [dy](ExperimentConfig& c) -> int& { return dy(c).accuracy_window; });
    num("dypr.check_every", [dy](ExperimentConfig& c) -> int& { return dy(c).check_every; });
    num("dypr.fit_every", [dy](ExperimentConfig& c) -> int& { return dy(c).fit_every; });
    num("dypr.macro_classes", [dy](ExperimentConfig& c) -> int& { return dy(c).macro_classes; });

    e.push_back({"trafficclass.preset",
                 [](const ExperimentConfig& c) {
                   switch (c.pipeline.trafficclass.preset) {
                     case ClassifierPreset::Off: return std::string("off");
                     case ClassifierPreset::AggoDt: return std::string("aggo+dt");
                     case ClassifierPreset::KmeansLr: return std::string("kmeans+lr");
                   }
                   return std::string("off");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.pipeline.trafficclass.preset = parse_preset(v);
                 }});
    auto tc = [](ExperimentConfig& c) -> TrafficClassConfig& { return c.pipeline.trafficclass; };
    num("trafficclass.window", [tc](ExperimentConfig& c) -> int& { return tc(c).window; });
    num("trafficclass.refresh_episodes",
        [tc](ExperimentConfig& c) -> int& { return tc(c).refresh_episodes; });
    num("trafficclass.max_depth", [tc](ExperimentConfig& c) -> int& { return tc(c).max_depth; });
    num("trafficclass.min_leaf", [tc](ExperimentConfig& c) -> int& { return tc(c).min_leaf; });
    num("trafficclass.logistic_epochs",
        [tc](ExperimentConfig& c) -> int& { return tc(c).logistic_epochs; });
    dbl("trafficclass.logistic_lr",
        [tc](ExperimentConfig& c) -> double& { return tc(c).logistic_lr; });
    num("trafficclass.kmeans_iters", [tc](ExperimentConfig& c) -> int& { return tc(c).kmeans_iters; });

    auto ad = [](ExperimentConfig& c) -> DdpgConfig& { return c.pipeline.adsch; };
    dbl("adsch.gamma", [ad](ExperimentConfig& c) -> double& { return ad(c).gamma; });
    dbl("adsch.tau", [ad](ExperimentConfig& c) -> double& { return ad(c).tau; });
    num("adsch.batch", [ad](ExperimentConfig& c) -> int& { return ad(c).batch; });
    num("adsch.buffer", [ad](ExperimentConfig& c) -> int& { return ad(c).buffer; });
    dbl("adsch.actor_lr", [ad](ExperimentConfig& c) -> double& { return ad(c).actor_lr; });
    dbl("adsch.critic_lr", [ad](ExperimentConfig& c) -> double& { return ad(c).critic_lr; });
    dbl("adsch.sigma", [ad](ExperimentConfig& c) -> double& { return ad(c).sigma; });
    dbl("adsch.sigma_decay", [ad](ExperimentConfig& c) -> double& { return ad(c).sigma_decay; });
    dbl("adsch.sigma_min", [ad](ExperimentConfig& c) -> double& { return ad(c).sigma_min; });
    num("adsch.hidden", [ad](ExperimentConfig& c) -> int& { return ad(c).hidden; });
    num("adsch.warmup", [ad](ExperimentConfig& c) -> int& { return ad(c).warmup; });
    num("adsch.update_every_ticks",
        [ad](ExperimentConfig& c) -> int& { return ad(c).update_every_ticks; });
    dbl("adsch.w_p", [ad](ExperimentConfig& c) -> double& { return ad(c).reward.w_p; });
    dbl("adsch.w_r", [ad](ExperimentConfig& c) -> double& { return ad(c).reward.w_r; });
    dbl("adsch.w_h", [ad](ExperimentConfig& c) -> double& { return ad(c).reward.w_h; });
    dbl("adsch.w_s", [ad](ExperimentConfig& c) -> double& { return ad(c).reward.w_s; });
    dbl("adsch.delta", [ad](ExperimentConfig& c) -> double& { return ad(c).reward.delta; });

    auto dq = [](ExperimentConfig& c) -> DdqlConfig& { return c.pipeline.ddql; };
    dbl("placement.gamma", [dq](ExperimentConfig& c) -> double& { return dq(c).gamma; });
    dbl("placement.tau", [dq](ExperimentConfig& c) -> double& { return dq(c).tau; });
    num("placement.batch", [dq](ExperimentConfig& c) -> int& { return dq(c).batch; });
    num("placement.buffer", [dq](ExperimentConfig& c) -> int& { return dq(c).buffer; });
    dbl("placement.lr", [dq](ExperimentConfig& c) -> double& { return dq(c).lr; });
    dbl("placement.eps_start", [dq](ExperimentConfig& c) -> double& { return dq(c).eps_start; });
    dbl("placement.eps_min", [dq](ExperimentConfig& c) -> double& { return dq(c).eps_min; });
    dbl("placement.eps_decay", [dq](ExperimentConfig& c) -> double& { return dq(c).eps_decay; });
    num("placement.hidden", [dq](ExperimentConfig& c) -> int& { return dq(c).hidden; });
    num("placement.warmup", [dq](ExperimentConfig& c) -> int& { return dq(c).warmup; });
    num("placement.update_every", [dq](ExperimentConfig& c) -> int& { return dq(c).update_every; });
    auto pp = [](ExperimentConfig& c) -> PlacementPolicy& { return c.pipeline.placement; };
    dbl("placement.beta", [pp](ExperimentConfig& c) -> double& { return pp(c).beta; });
    num("placement.overhead_cpu", [pp](ExperimentConfig& c) -> int& { return pp(c).overhead_cpu; });
    dbl("placement.cpu_norm", [pp](ExperimentConfig& c) -> double& { return pp(c).cpu_norm; });
    dbl("placement.bw_norm", [pp](ExperimentConfig& c) -> double& { return pp(c).bw_norm; });

    e.push_back({"simengine.scheduler",
                 [](const ExperimentConfig& c) {
                   switch (c.pipeline.scheduler) {
                     case SchedulerKind::AdSch: return std::string("adsch");
                     case SchedulerKind::Fifo: return std::string("fifo");
                     case SchedulerKind::StrictPriority: return std::string("strict_priority");
                   }
                   return std::string("adsch");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.pipeline.scheduler = parse_scheduler(v);
                 }});
    flag("simengine.traffic_aware",
         [](ExperimentConfig& c) -> bool& { return c.pipeline.traffic_aware; });
    dbl("simengine.tick", [](ExperimentConfig& c) -> double& { return c.pipeline.tick; });
    return e;
  }();
  return s;
}

inline const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : schema())
    if (e.key == key) return &e;
  return nullptr;
}

}  // namespace detail

inline void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto* e = detail::find_entry(key);
  if (!e) throw ConfigInvalid("unknown config key '" + key + "'");
  e->set(cfg, value);
}

// Structured-text config: [section] headers with key = value lines; sections
// named "variant NAME" collect dotted overrides for cmd_compare. Unknown
// keys are rejected.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string raw, section;
  int variant = -1;
  while (std::getline(is, raw)) {
    auto cut = raw.find_first_of("#;");
    if (cut != std::string::npos) raw.resize(cut);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section.rfind("variant ", 0) == 0) {
        cfg.variants.push_back({trim(section.substr(8)), {}});
        variant = static_cast<int>(cfg.variants.size()) - 1;
      } else {
        variant = -1;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigInvalid("expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (variant >= 0) {
      if (!detail::find_entry(key)) throw ConfigInvalid("unknown config key '" + key + "'");
      cfg.variants[static_cast<std::size_t>(variant)].second.push_back({key, value});
      continue;
    }
    if (section.empty()) throw ConfigInvalid("key outside any section: " + line);
    apply_override(cfg, section + "." + key, value);
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigInvalid("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  ExperimentConfig cfg = parse_config_text(ss.str());
  if (!cfg.topology_file.empty()) {
    std::ifstream tf(cfg.topology_file);
    if (!tf) throw ConfigInvalid("cannot read topology file '" + cfg.topology_file + "'");
    std::ostringstream ts;
    ts << tf.rdbuf();
    const TopologySpec spec = parse_topology_text(ts.str());
    cfg.pipeline.topology.name = spec.name;
    cfg.pipeline.topology.nodes = spec.nodes;
    cfg.pipeline.topology.links = spec.links;
    if (!spec.profile.empty()) cfg.pipeline.topology.profile = spec.profile;
  }
  return cfg;
}

// Canonical key=value dump in schema order; basis of the config hash.
inline std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : detail::schema()) out += e.key + "=" + e.get(cfg) + "\n";
  for (const auto& [name, overrides] : cfg.variants) {
    out += "variant " + name + "\n";
    for (const auto& [k, v] : overrides) out += "  " + k + "=" + v + "\n";
  }
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  Fnv1a h;
  h.feed(canonical_config(cfg));
  return h.h;
}

inline ExperimentConfig variant_config(const ExperimentConfig& base, std::size_t index) {
  ExperimentConfig out = base;
  out.variants.clear();
  const auto& [name, overrides] = base.variants[index];
  out.pipeline.scenario = name;
  for (const auto& [k, v] : overrides) apply_override(out, k, v);
  return out;
}

}  // namespace sfcsim
