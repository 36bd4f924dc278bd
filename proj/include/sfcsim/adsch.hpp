#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sfcsim/dypr.hpp"
#include "sfcsim/numkernel.hpp"
#include "sfcsim/trafficclass.hpp"
#include "sfcsim/workload.hpp"

namespace sfcsim {

struct InvalidOutcome : Error {
  using Error::Error;
};

inline constexpr int kSchedStateDim = 5;

struct SchedState {
  double waiting_frac = 0.0;  // elapsed wait / TWT, 1 means expiry this tick
  double reliability = 0.0;
  double macro_priority = 0.0;
  double micro_priority = 0.0;
  double hd_flag = 0.0;

  std::array<double, kSchedStateDim> as_array() const {
    return {waiting_frac, reliability, macro_priority, micro_priority, hd_flag};
  }
};

inline SchedState build_sched_state(const SfcRequest& sfc, double now, const PriorityLabel& prio,
                                    DemandLabel hd) {
  SchedState s;
  s.waiting_frac = clamp01((now - sfc.arrival_time) / sfc.twt);
  s.reliability = sfc.reliability;
  s.macro_priority = prio.macro;
  s.micro_priority = prio.micro;
  s.hd_flag = hd == DemandLabel::HD ? 1.0 : 0.0;
  return s;
}

struct SchedRewardWeights {
  double w_p = 1.0;   // priority
  double w_r = 0.5;   // reliability
  double w_h = 0.5;   // high-demand bonus
  double w_s = 1.0;   // starvation
  double delta = 0.1; // per-tick waiting drag
};

// Beneficial-cost + Starvation-cost. Deploying a nearly starving service
// earns the waiting bonus; letting one expire costs the most.
inline double scheduling_reward(const SchedState& s, bool deployed, bool expired,
                                const SchedRewardWeights& w = {}) {
  if (deployed && expired) throw InvalidOutcome("service cannot deploy and expire at once");
  double beneficial = 0.0;
  if (deployed)
    beneficial = w.w_p * (s.macro_priority + s.micro_priority) / 2.0 + w.w_r * s.reliability +
                 w.w_h * s.hd_flag;
  double starvation;
  if (expired)
    starvation = -(1.0 + s.waiting_frac);
  else if (deployed)
    starvation = w.w_s * s.waiting_frac;
  else
    starvation = -w.w_s * s.waiting_frac * w.delta;
  return beneficial + starvation;
}

struct SchedTransition {
  std::array<double, kSchedStateDim> state{};
  double action = 0.0;
  double reward = 0.0;
  std::array<double, kSchedStateDim> next{};
  bool done = false;
};

struct DdpgConfig {
  double gamma = 0.9;
  double tau = 0.01;
  int batch = 64;
  int buffer = 50000;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double sigma = 0.2;          // exploration noise
  double sigma_decay = 0.999;  // per episode
  double sigma_min = 0.01;
  int hidden = 64;
  int warmup = 500;            // transitions before updates start
  int update_every_ticks = 2;
  SchedRewardWeights reward;
};

// DDPG actor-critic over the 5-component scheduling state; the actor emits a
// rank in [0,1] through its sigmoid head.
class DdpgAgent {
 public:
  DdpgAgent(const DdpgConfig& cfg, Rng& rng)
      : cfg_(cfg),
        actor_(make_mlp({kSchedStateDim, cfg.hidden, cfg.hidden, 1}, Act::Relu, Act::Sigmoid, rng)),
        critic_(make_mlp({kSchedStateDim + 1, cfg.hidden, cfg.hidden, 1}, Act::Relu, Act::Identity, rng)),
        actor_target_(actor_),
        critic_target_(critic_),
        actor_opt_(AdamState::for_mlp(actor_, cfg.actor_lr)),
        critic_opt_(AdamState::for_mlp(critic_, cfg.critic_lr)),
        replay_(static_cast<std::size_t>(cfg.buffer)),
        sigma_(cfg.sigma) {}

  const DdpgConfig& config() const { return cfg_; }
  double sigma() const { return sigma_; }
  std::size_t replay_size() const { return replay_.size(); }
  const Mlp& actor() const { return actor_; }
  Mlp& actor_mut() { return actor_; }

  double rank(const SchedState& s, bool explore, Rng& rng) const {
    const auto arr = s.as_array();
    double a = forward(actor_, std::span<const double>(arr.data(), arr.size()))[0];
    if (explore && sigma_ > 0.0) a = clamp01(a + rng.normal(0.0, sigma_));
    return a;
  }

  void push(const SchedTransition& t) { replay_.push(t); }
  bool can_update() const {
    return replay_.size() >= static_cast<std::size_t>(std::max(cfg_.batch, cfg_.warmup));
  }

  std::pair<double, double> update(Rng& rng) {
    return update_batch(replay_.sample(rng, static_cast<std::size_t>(cfg_.batch)));
  }

  // One critic TD step against frozen targets plus one actor ascent step on
  // Q(s, actor(s)); both target nets soft-update afterwards. Returns
  // (critic_loss, actor_objective).
  std::pair<double, double> update_batch(const std::vector<SchedTransition>& batch) {
    const int n = static_cast<int>(batch.size());
    Matrix states(n, kSchedStateDim), next_states(n, kSchedStateDim), sa(n, kSchedStateDim + 1);
    for (int i = 0; i < n; ++i) {
      const auto& t = batch[static_cast<std::size_t>(i)];
      std::copy(t.state.begin(), t.state.end(), states.row(i));
      std::copy(t.next.begin(), t.next.end(), next_states.row(i));
      std::copy(t.state.begin(), t.state.end(), sa.row(i));
      sa.row(i)[kSchedStateDim] = t.action;
    }
    // targets: y = r + gamma * Q_t(s', actor_t(s')), y = r at terminals
    Matrix next_actions = forward_batch(actor_target_, next_states);
    Matrix nsa(n, kSchedStateDim + 1);
    for (int i = 0; i < n; ++i) {
      std::copy(next_states.row(i), next_states.row(i) + kSchedStateDim, nsa.row(i));
      nsa.row(i)[kSchedStateDim] = next_actions.row(i)[0];
    }
    Matrix qn = forward_batch(critic_target_, nsa);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto& t = batch[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(i)] = t.done ? t.reward : t.reward + cfg_.gamma * qn.row(i)[0];
    }
    // critic step on mean squared TD error
    BatchTrace ctrace;
    Matrix q = forward_batch(critic_, sa, &ctrace);
    double critic_loss = 0.0;
    Matrix up(n, 1);
    for (int i = 0; i < n; ++i) {
      const double e = q.row(i)[0] - y[static_cast<std::size_t>(i)];
      critic_loss += e * e;
      up.row(i)[0] = 2.0 * e / n;
    }
    critic_loss /= n;
    MlpGrad cgrad = MlpGrad::zeros_like(critic_);
    backward_batch(critic_, ctrace, up, cgrad);
    adam_step(critic_, cgrad, critic_opt_);

    // actor step: ascend mean Q(s, actor(s))
    BatchTrace atrace;
    Matrix actions = forward_batch(actor_, states, &atrace);
    Matrix sa2(n, kSchedStateDim + 1);
    for (int i = 0; i < n; ++i) {
      std::copy(states.row(i), states.row(i) + kSchedStateDim, sa2.row(i));
      sa2.row(i)[kSchedStateDim] = actions.row(i)[0];
    }
    BatchTrace qtrace;
    Matrix q2 = forward_batch(critic_, sa2, &qtrace);
    double actor_obj = 0.0;
    for (int i = 0; i < n; ++i) actor_obj += q2.row(i)[0];
    actor_obj /= n;
    Matrix qup(n, 1);
    for (int i = 0; i < n; ++i) qup.row(i)[0] = 1.0 / n;
    MlpGrad scratch = MlpGrad::zeros_like(critic_);
    Matrix dsa = backward_batch(critic_, qtrace, qup, scratch);
    Matrix dact(n, 1);
    for (int i = 0; i < n; ++i) dact.row(i)[0] = -dsa.row(i)[kSchedStateDim];  // ascent
    MlpGrad agrad = MlpGrad::zeros_like(actor_);
    backward_batch(actor_, atrace, dact, agrad);
    adam_step(actor_, agrad, actor_opt_);

    soft_update(actor_target_, actor_, cfg_.tau);
    soft_update(critic_target_, critic_, cfg_.tau);
    return {critic_loss, actor_obj};
  }

  void end_episode() { sigma_ = std::max(cfg_.sigma_min, sigma_ * cfg_.sigma_decay); }

  void save(std::ostream& os) const {
    save_mlp(os, actor_);
    save_mlp(os, critic_);
  }

  void load(std::istream& is) {
    Mlp a = load_mlp(is), c = load_mlp(is);
    if (!a.same_shape(actor_) || !c.same_shape(critic_))
      throw ArchitectureMismatch("checkpoint does not match the agent architecture");
    actor_ = a;
    critic_ = c;
    actor_target_ = actor_;
    critic_target_ = critic_;
  }

 private:
  DdpgConfig cfg_;
  Mlp actor_, critic_, actor_target_, critic_target_;
  AdamState actor_opt_, critic_opt_;
  ReplayBuffer<SchedTransition> replay_;
  double sigma_;
};

struct QueueEntry {
  int sfc_id = 0;
  double arrival_time = 0.0;
  SchedState state;
  double rank = 0.0;
};

// rank descending; ties by earlier arrival, then lower id
inline void sort_queue(std::vector<QueueEntry>& q) {
  std::sort(q.begin(), q.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
    return a.sfc_id < b.sfc_id;
  });
}

struct WaitingView {
  const SfcRequest* sfc;
  PriorityLabel priority;
  DemandLabel hd;
};

inline std::vector<QueueEntry> schedule(const DdpgAgent& agent, const std::vector<WaitingView>& waiting,
                                        double now, bool explore, Rng& rng) {
  std::vector<QueueEntry> q;
  q.reserve(waiting.size());
  for (const auto& w : waiting) {
    QueueEntry e;
    e.sfc_id = w.sfc->id;
    e.arrival_time = w.sfc->arrival_time;
    e.state = build_sched_state(*w.sfc, now, w.priority, w.hd);
    e.rank = agent.rank(e.state, explore, rng);
    q.push_back(e);
  }
  sort_queue(q);
  return q;
}

}  // namespace sfcsim
