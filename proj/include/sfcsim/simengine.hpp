#pragma once
#include <algorithm>
#include <map>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "sfcsim/adsch.hpp"
#include "sfcsim/dypr.hpp"
#include "sfcsim/netmodel.hpp"
#include "sfcsim/numkernel.hpp"
#include "sfcsim/placement.hpp"
#include "sfcsim/trafficclass.hpp"
#include "sfcsim/workload.hpp"

namespace sfcsim {

struct BadWindow : Error {
  using Error::Error;
};
struct ConfigInvalid : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// event queue

enum class EventKind { Departure = 0, Arrival = 1, Tick = 2 };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Tick;
  int id = 0;
};

// Stable ordering: (time, kind with Departure < Arrival < Tick, id).
struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    return a.id > b.id;
  }
};

using EventQueue = std::priority_queue<Event, std::vector<Event>, EventAfter>;

// ---------------------------------------------------------------------------
// configuration and metrics

enum class SchedulerKind { AdSch, Fifo, StrictPriority };

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "adsch") return SchedulerKind::AdSch;
  if (s == "fifo") return SchedulerKind::Fifo;
  if (s == "strict_priority") return SchedulerKind::StrictPriority;
  throw BadConfig("unknown scheduler '" + s + "'");
}

struct PipelineConfig {
  std::string scenario = "default";
  TopologySpec topology{.name = "netrail"};
  WorkloadConfig workload;
  DyPrConfig dypr;
  TrafficClassConfig trafficclass;
  DdpgConfig adsch;
  DdqlConfig ddql;
  PlacementPolicy placement;
  SchedulerKind scheduler = SchedulerKind::AdSch;
  bool traffic_aware = true;
  double tick = 1.0;
  int episodes = 2000;
  int ma_window = 100;
  bool train = true;

  // traffic_aware=false is the "without traffic load" scenario: classifier
  // off, hd/load inputs zeroed, load term removed from the local reward.
  void normalize() {
    if (!traffic_aware) trafficclass.preset = ClassifierPreset::Off;
  }
  void validate() const {
    if (episodes < 1) throw ConfigInvalid("episodes must be >= 1");
    if (tick <= 0.0) throw ConfigInvalid("tick must be > 0");
    if (ma_window < 1) throw ConfigInvalid("ma_window must be >= 1");
    workload.validate();
    dypr.validate();
  }
};

struct EpisodeMetrics {
  int arrivals = 0, accepted = 0, rejected = 0, expired = 0;
  std::vector<int> class_arrivals, class_accepted, class_expired, class_rejected;
  int hd_arrivals = 0, hd_accepted = 0, nhd_arrivals = 0, nhd_accepted = 0;
  double sar = 0.0, sar_high = 0.0, sar_low = 0.0, sar_hd = 0.0, sar_nhd = 0.0;
  double remaining_cpu_avg = 0.0;
  int starvation_count = 0;  // expired services with macro <= 0.5
  double epsilon = 0.0, actor_sigma = 0.0;
};

// ---------------------------------------------------------------------------
// persistent models (learning carries across episodes)

struct PipelineModels {
  DyPrState dypr;
  ClassifierPipeline classifier;
  DdpgAgent adsch;
  DdqlAgent ddql;
  Rng rng_dypr, rng_adsch, rng_ddql, rng_class;
  std::uint64_t seed = 0;
  std::uint64_t noise_seed = 0;
  int node_count = 0;
};

namespace stream {
inline constexpr std::uint64_t kWorkload = 0x1001;
inline constexpr std::uint64_t kDypr = 0x2002;
inline constexpr std::uint64_t kAdsch = 0x3003;
inline constexpr std::uint64_t kDdql = 0x4004;
inline constexpr std::uint64_t kClassifier = 0x5005;
inline constexpr std::uint64_t kNoise = 0x6006;
inline constexpr std::uint64_t kInit = 0x7007;
}  // namespace stream

inline PipelineModels make_models(const PipelineConfig& cfg, std::uint64_t seed) {
  const SubstrateNetwork net = load_topology(cfg.topology);
  Rng init(Rng::mix(seed, stream::kInit));
  PipelineModels m{DyPrState(cfg.dypr),
                   ClassifierPipeline(cfg.trafficclass),
                   DdpgAgent(cfg.adsch, init),
                   DdqlAgent(placement_state_dim(net.node_count()), net.node_count(), cfg.ddql, init),
                   Rng(Rng::mix(seed, stream::kDypr)),
                   Rng(Rng::mix(seed, stream::kAdsch)),
                   Rng(Rng::mix(seed, stream::kDdql)),
                   Rng(Rng::mix(seed, stream::kClassifier)),
                   seed,
                   Rng::mix(seed, stream::kNoise),
                   net.node_count()};
  return m;
}

// ---------------------------------------------------------------------------
// baseline schedulers

inline std::vector<QueueEntry> fifo_schedule(const std::vector<WaitingView>& waiting, double now) {
  std::vector<QueueEntry> q;
  q.reserve(waiting.size());
  for (const auto& w : waiting)
    q.push_back({w.sfc->id, w.sfc->arrival_time, build_sched_state(*w.sfc, now, w.priority, w.hd), 0.0});
  std::sort(q.begin(), q.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.sfc_id < b.sfc_id;
  });
  return q;
}

inline std::vector<QueueEntry> strict_priority_schedule(const std::vector<WaitingView>& waiting,
                                                        double now) {
  std::vector<QueueEntry> q;
  q.reserve(waiting.size());
  for (const auto& w : waiting)
    q.push_back({w.sfc->id, w.sfc->arrival_time, build_sched_state(*w.sfc, now, w.priority, w.hd), 0.0});
  std::sort(q.begin(), q.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.state.macro_priority != b.state.macro_priority)
      return a.state.macro_priority > b.state.macro_priority;
    if (a.state.micro_priority != b.state.micro_priority)
      return a.state.micro_priority > b.state.micro_priority;
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.sfc_id < b.sfc_id;
  });
  return q;
}

// ---------------------------------------------------------------------------
// analysis helpers

// element i = mean of series[max(0, i-window+1) ..= i]
inline std::vector<double> moving_average(const std::vector<double>& series, int window) {
  if (window < 1) throw BadWindow("moving_average window must be >= 1");
  std::vector<double> out(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i];
    if (i >= static_cast<std::size_t>(window)) acc -= series[i - static_cast<std::size_t>(window)];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

struct StarvationSummary {
  std::vector<double> class_expiry_rate;  // expired / arrivals per macro class
  double low_class_sar = 0.0;             // accepted / arrivals, macro <= 0.5
  double high_class_sar = 0.0;
};

inline StarvationSummary starvation_report(const std::vector<EpisodeMetrics>& series,
                                           int macro_classes = 4) {
  StarvationSummary s;
  std::vector<long> arr(static_cast<std::size_t>(macro_classes), 0),
      exp(static_cast<std::size_t>(macro_classes), 0), acc(static_cast<std::size_t>(macro_classes), 0);
  for (const auto& m : series)
    for (int c = 0; c < macro_classes && c < static_cast<int>(m.class_arrivals.size()); ++c) {
      arr[static_cast<std::size_t>(c)] += m.class_arrivals[static_cast<std::size_t>(c)];
      exp[static_cast<std::size_t>(c)] += m.class_expired[static_cast<std::size_t>(c)];
      acc[static_cast<std::size_t>(c)] += m.class_accepted[static_cast<std::size_t>(c)];
    }
  long low_arr = 0, low_acc = 0, high_arr = 0, high_acc = 0;
  for (int c = 0; c < macro_classes; ++c) {
    s.class_expiry_rate.push_back(arr[static_cast<std::size_t>(c)] > 0
                                      ? static_cast<double>(exp[static_cast<std::size_t>(c)]) /
                                            arr[static_cast<std::size_t>(c)]
                                      : 0.0);
    const double macro = (c + 1) / static_cast<double>(macro_classes);
    if (macro <= 0.5) {
      low_arr += arr[static_cast<std::size_t>(c)];
      low_acc += acc[static_cast<std::size_t>(c)];
    } else {
      high_arr += arr[static_cast<std::size_t>(c)];
      high_acc += acc[static_cast<std::size_t>(c)];
    }
  }
  s.low_class_sar = low_arr > 0 ? static_cast<double>(low_acc) / low_arr : 0.0;
  s.high_class_sar = high_arr > 0 ? static_cast<double>(high_acc) / high_arr : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// episode driver

namespace detail {

struct WaitingService {
  const SfcRequest* sfc = nullptr;
  PriorityLabel prio;
  DemandLabel hd = DemandLabel::NHD;
  bool has_pending = false;  // an (state, action) pair awaiting its outcome
  SchedState pend_state;
  double pend_action = 0.0;
};

inline int macro_class_index(double macro, int classes) {
  int idx = static_cast<int>(std::lround(macro * classes)) - 1;
  return std::clamp(idx, 0, classes - 1);
}

}  // namespace detail

// Runs one episode: fresh network and repository, persistent models. Returns
// tallied metrics; optionally writes the raw event log. With flush_departures
// the event loop also drains departures after the last resolution (used by
// the no-reset invariant check).
inline EpisodeMetrics run_episode(const PipelineConfig& cfg, PipelineModels& models,
                                  int episode_index, std::ostream* event_log = nullptr,
                                  bool flush_departures = false,
                                  SubstrateNetwork* final_net = nullptr) {
  SubstrateNetwork net = load_topology(cfg.topology);
  MicroVnfRepository repo(/*share_capacity=*/4);
  Rng wl_rng(Rng::mix(Rng::mix(models.seed, stream::kWorkload), static_cast<std::uint64_t>(episode_index)));
  const std::vector<SfcRequest> arrivals =
      generate_arrivals(wl_rng, cfg.workload, cfg.workload.horizon_s);

  models.classifier.maybe_refresh(episode_index, models.rng_class);

  const int K = cfg.dypr.macro_classes;
  EpisodeMetrics em;
  em.class_arrivals.assign(static_cast<std::size_t>(K), 0);
  em.class_accepted.assign(static_cast<std::size_t>(K), 0);
  em.class_expired.assign(static_cast<std::size_t>(K), 0);
  em.class_rejected.assign(static_cast<std::size_t>(K), 0);
  em.arrivals = static_cast<int>(arrivals.size());

  auto log = [&](double t, const std::string& line) {
    if (event_log)
      (*event_log) << "ep=" << episode_index << " t=" << fmt_fixed(t, 3) << ' ' << line << '\n';
  };

  EventQueue events;
  for (const auto& a : arrivals) events.push({a.arrival_time, EventKind::Arrival, a.id});

  std::vector<detail::WaitingService> waiting;
  std::map<int, SfcPlacement> live;           // sfc id -> mapping
  std::map<int, ClassifierFeatures> feats;    // arrival features per id
  double remaining_sum = 0.0;
  long ticks = 0;
  int resolved = 0;
  const bool use_adsch = cfg.scheduler == SchedulerKind::AdSch;
  long tick_index = 0;

  if (!arrivals.empty())
    events.push({std::floor(arrivals.front().arrival_time / cfg.tick) * cfg.tick + cfg.tick,
                 EventKind::Tick, 0});

  auto finalize_sched = [&](detail::WaitingService& w, const SchedState& outcome_state,
                            bool deployed, bool expired) {
    if (!use_adsch || !cfg.train || !w.has_pending) {
      w.has_pending = false;
      return;
    }
    SchedTransition t;
    t.state = w.pend_state.as_array();
    t.action = w.pend_action;
    t.reward = scheduling_reward(outcome_state, deployed, expired, cfg.adsch.reward);
    t.next = outcome_state.as_array();
    t.done = true;
    models.adsch.push(t);
    w.has_pending = false;
  };

  while (!events.empty()) {
    if (resolved == static_cast<int>(arrivals.size()) && !flush_departures) break;
    const Event ev = events.top();
    events.pop();
    const double now = ev.time;

    if (ev.kind == EventKind::Arrival) {
      const auto& sfc = arrivals[static_cast<std::size_t>(ev.id)];
      detail::WaitingService w;
      w.sfc = &sfc;
      w.prio = models.dypr.label(sfc, models.rng_dypr);
      auto f = make_classifier_features(sfc, cfg.dypr);
      w.hd = models.classifier.classify(f);
      models.classifier.feed(f);
      feats[sfc.id] = f;
      waiting.push_back(w);
      const int ci = detail::macro_class_index(w.prio.macro, K);
      em.class_arrivals[static_cast<std::size_t>(ci)] += 1;
      (w.hd == DemandLabel::HD ? em.hd_arrivals : em.nhd_arrivals) += 1;
      log(now, "ev=arrival id=" + std::to_string(sfc.id) + " macro=" + fmt_double(w.prio.macro) +
                   " micro=" + fmt_double(w.prio.micro) +
                   " hd=" + std::to_string(w.hd == DemandLabel::HD) +
                   " vnfs=" + std::to_string(sfc.vnfs.size()) +
                   " cpu=" + std::to_string(sfc.total_cpu_demand()));
      continue;
    }

    if (ev.kind == EventKind::Departure) {
      auto it = live.find(ev.id);
      if (it != live.end()) {
        release_placement(it->second, net, repo);
        live.erase(it);
        log(now, "ev=departure id=" + std::to_string(ev.id));
      }
      continue;
    }

    // Tick: expiry sweep, scheduling, placement pass, training cadence.
    ++tick_index;
    for (auto it = waiting.begin(); it != waiting.end();) {
      if (now - it->sfc->arrival_time >= it->sfc->twt) {
        SchedState expiry_state = build_sched_state(*it->sfc, now, it->prio, it->hd);
        expiry_state.waiting_frac = 1.0;
        finalize_sched(*it, expiry_state, false, true);
        const int ci = detail::macro_class_index(it->prio.macro, K);
        em.class_expired[static_cast<std::size_t>(ci)] += 1;
        em.expired += 1;
        if (it->prio.macro <= 0.5) em.starvation_count += 1;
        ++resolved;
        log(now, "ev=expired id=" + std::to_string(it->sfc->id) +
                     " macro=" + fmt_double(it->prio.macro));
        it = waiting.erase(it);
      } else {
        ++it;
      }
    }

    // Rank or order the waiting set.
    std::vector<WaitingView> views;
    views.reserve(waiting.size());
    for (const auto& w : waiting) views.push_back({w.sfc, w.prio, w.hd});
    std::vector<QueueEntry> queue;
    switch (cfg.scheduler) {
      case SchedulerKind::AdSch:
        queue = schedule(models.adsch, views, now, cfg.train, models.rng_adsch);
        break;
      case SchedulerKind::Fifo:
        queue = fifo_schedule(views, now);
        break;
      case SchedulerKind::StrictPriority:
        queue = strict_priority_schedule(views, now);
        break;
    }

    // Close out last tick's pending transitions now that the next state is
    // known, then record this tick's (state, action) pairs.
    if (use_adsch && cfg.train) {
      for (auto& w : waiting) {
        const auto* entry = &queue.front();
        for (const auto& qe : queue)
          if (qe.sfc_id == w.sfc->id) {
            entry = &qe;
            break;
          }
        if (w.has_pending) {
          SchedTransition t;
          t.state = w.pend_state.as_array();
          t.action = w.pend_action;
          t.reward = scheduling_reward(w.pend_state, false, false, cfg.adsch.reward);
          t.next = entry->state.as_array();
          t.done = false;
          models.adsch.push(t);
        }
        w.pend_state = entry->state;
        w.pend_action = entry->rank;
        w.has_pending = true;
      }
    }

    // Placement pass in queue order; the first resource rejection ends the
    // pass (head-of-line), structural QoS rejections are terminal.
    for (const auto& qe : queue) {
      auto wit = std::find_if(waiting.begin(), waiting.end(),
                              [&](const detail::WaitingService& w) { return w.sfc->id == qe.sfc_id; });
      if (wit == waiting.end()) continue;
      const auto& sfc = *wit->sfc;
      PlacementInputs pin;
      pin.sfc = &sfc;
      pin.priority = wit->prio;
      pin.hd = cfg.traffic_aware ? wit->hd : DemandLabel::NHD;
      pin.load_now =
          cfg.traffic_aware ? load_sample(sfc.profile, now, sfc.id, models.noise_seed) : 0.0;
      pin.traffic_aware = cfg.traffic_aware;
      PlacementResult pr =
          place_sfc(models.ddql, pin, net, repo, models.rng_ddql, cfg.train, cfg.placement);
      if (pr.status == PlaceStatus::Placed) {
        finalize_sched(*wit, qe.state, true, false);
        live[sfc.id] = pr.mapping;
        events.push({now + sfc.lifetime, EventKind::Departure, sfc.id});
        const int ci = detail::macro_class_index(wit->prio.macro, K);
        em.class_accepted[static_cast<std::size_t>(ci)] += 1;
        em.accepted += 1;
        (wit->hd == DemandLabel::HD ? em.hd_accepted : em.nhd_accepted) += 1;
        ++resolved;
        log(now, "ev=accepted id=" + std::to_string(sfc.id) + " macro=" +
                     fmt_double(wit->prio.macro) + " wait=" +
                     fmt_fixed(now - sfc.arrival_time, 3));
        waiting.erase(wit);
      } else if (pr.status == PlaceStatus::RejectedQos) {
        finalize_sched(*wit, qe.state, false, false);
        const int ci = detail::macro_class_index(wit->prio.macro, K);
        em.class_rejected[static_cast<std::size_t>(ci)] += 1;
        em.rejected += 1;
        ++resolved;
        log(now, "ev=rejected id=" + std::to_string(sfc.id) + " macro=" +
                     fmt_double(wit->prio.macro) + " reason=qos");
        waiting.erase(wit);
      } else {
        log(now, "ev=blocked id=" + std::to_string(sfc.id) + " reason=resources");
        break;  // head-of-line: service keeps waiting
      }
    }

    if (use_adsch && cfg.train && tick_index % cfg.adsch.update_every_ticks == 0 &&
        models.adsch.can_update())
      models.adsch.update(models.rng_adsch);

    remaining_sum += static_cast<double>(net.total_cpu_available());
    ++ticks;

    const bool work_left = !waiting.empty() || resolved + static_cast<int>(waiting.size()) <
                                                   static_cast<int>(arrivals.size());
    if (work_left) events.push({now + cfg.tick, EventKind::Tick, 0});
  }

  em.sar = em.arrivals > 0 ? static_cast<double>(em.accepted) / em.arrivals : 0.0;
  long low_arr = 0, low_acc = 0, high_arr = 0, high_acc = 0;
  for (int c = 0; c < K; ++c) {
    const double macro = (c + 1) / static_cast<double>(K);
    (macro <= 0.5 ? low_arr : high_arr) += em.class_arrivals[static_cast<std::size_t>(c)];
    (macro <= 0.5 ? low_acc : high_acc) += em.class_accepted[static_cast<std::size_t>(c)];
  }
  em.sar_low = low_arr > 0 ? static_cast<double>(low_acc) / low_arr : 0.0;
  em.sar_high = high_arr > 0 ? static_cast<double>(high_acc) / high_arr : 0.0;
  em.sar_hd = em.hd_arrivals > 0 ? static_cast<double>(em.hd_accepted) / em.hd_arrivals : 0.0;
  em.sar_nhd = em.nhd_arrivals > 0 ? static_cast<double>(em.nhd_accepted) / em.nhd_arrivals : 0.0;
  em.remaining_cpu_avg = ticks > 0 ? remaining_sum / static_cast<double>(ticks)
                                   : static_cast<double>(net.total_cpu_capacity());
  em.epsilon = models.ddql.epsilon();
  em.actor_sigma = models.adsch.sigma();

  if (cfg.train) {
    models.adsch.end_episode();
    models.ddql.end_episode();
  }
  if (final_net) *final_net = net;
  return em;
}

struct ExperimentResult {
  std::vector<EpisodeMetrics> episodes;
  std::uint64_t stream_hash = 0;  // fingerprint of all generated arrivals
};

inline ExperimentResult run_experiment(const PipelineConfig& cfg, std::uint64_t seed,
                                       std::ostream* event_log = nullptr) {
  PipelineConfig c = cfg;
  c.normalize();
  c.validate();
  PipelineModels models = make_models(c, seed);
  ExperimentResult res;
  Fnv1a h;
  for (int ep = 0; ep < c.episodes; ++ep) {
    Rng wl_rng(Rng::mix(Rng::mix(seed, stream::kWorkload), static_cast<std::uint64_t>(ep)));
    h.feed_i64(static_cast<std::int64_t>(
        request_stream_hash(generate_arrivals(wl_rng, c.workload, c.workload.horizon_s))));
    res.episodes.push_back(run_episode(c, models, ep, event_log));
  }
  res.stream_hash = h.h;
  return res;
}

// ---------------------------------------------------------------------------
// CSV emission (stable format: '.' decimals, LF endings, fixed header)

inline const char* metrics_csv_header() {
  return "episode,sar,sar_high,sar_low,sar_hd,sar_nhd,remaining_cpu_avg,starvation_count,"
         "epsilon,actor_sigma";
}

inline void write_metrics_csv(std::ostream& os, const std::vector<EpisodeMetrics>& series) {
  os << metrics_csv_header() << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& m = series[i];
    os << i << ',' << fmt_double(m.sar) << ',' << fmt_double(m.sar_high) << ','
       << fmt_double(m.sar_low) << ',' << fmt_double(m.sar_hd) << ',' << fmt_double(m.sar_nhd)
       << ',' << fmt_double(m.remaining_cpu_avg) << ',' << m.starvation_count << ','
       << fmt_double(m.epsilon) << ',' << fmt_double(m.actor_sigma) << '\n';
  }
}

}  // namespace sfcsim
