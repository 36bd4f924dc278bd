#pragma once
#include <cmath>
#include <deque>
#include <vector>

#include "sfcsim/numkernel.hpp"
#include "sfcsim/workload.hpp"

namespace sfcsim {

struct WrongMode : Error {
  using Error::Error;
};
struct SingularSystem : Error {
  using Error::Error;
};

// Two-tier priority: macro is quantized to the class grid, micro is the raw
// score within [0,1].
struct PriorityLabel {
  double macro = 0.25;
  double micro = 0.0;
};

struct DyPrConfig {
  double lambda = 0.1;          // L2 strength, must stay > 0
  int observatory_threshold = 200;
  int batch = 32;
  int buffer_capacity = 4096;
  double accuracy_threshold = 0.05;  // MAE gate Train -> Predict; 2x back
  int accuracy_window = 50;
  int check_every = 20;  // arrivals between accuracy checks
  int fit_every = 8;     // arrivals between fits while training
  int macro_classes = 4;

  // Min-max feature ranges for [delay, jitter, loss, bandwidth, reliability,
  // chain_length]. Sized to roughly two sigma of the workload draws so the
  // normalized features, and with them the priority scores, spread over
  // [0,1] instead of bunching mid-range.
  double delay_lo = 8.0, delay_hi = 36.0;
  double jitter_lo = 0.0, jitter_hi = 6.0;
  double loss_lo = 0.0, loss_hi = 0.025;
  double bw_lo = 0.0, bw_hi = 100.0;
  double rel_lo = 0.9, rel_hi = 1.0;
  double chain_lo = 1.0, chain_hi = 8.0;

  // Pseudo-target weights: QoS stringency surrogate for the regression.
  double w_delay = 0.35, w_loss = 0.30, w_jitter = 0.15, w_rel = 0.20;

  void validate() const {
    if (lambda <= 0.0) throw BadConfig("dypr.lambda must be > 0");
    if (observatory_threshold < batch) throw BadConfig("dypr observatory threshold < batch");
    if (macro_classes < 2) throw BadConfig("dypr.macro_classes < 2");
  }
};

inline constexpr int kDyPrFeatures = 6;

inline std::vector<double> featurize(const SfcRequest& sfc, const DyPrConfig& cfg) {
  auto norm = [](double x, double lo, double hi) { return clamp01((x - lo) / (hi - lo)); };
  return {norm(sfc.qos.delay_ms, cfg.delay_lo, cfg.delay_hi),
          norm(sfc.qos.jitter_ms, cfg.jitter_lo, cfg.jitter_hi),
          norm(sfc.qos.packet_loss, cfg.loss_lo, cfg.loss_hi),
          norm(sfc.qos.bandwidth, cfg.bw_lo, cfg.bw_hi),
          norm(sfc.reliability, cfg.rel_lo, cfg.rel_hi),
          norm(static_cast<double>(sfc.vnfs.size()), cfg.chain_lo, cfg.chain_hi)};
}

// QoS-stringency score in [0,1]: tighter QoS (low delay/loss/jitter head-
// room) and higher reliability map to higher priority. This is the
// self-supervised regression target; see README for the rationale.
inline double pseudo_target(std::span<const double> features, const DyPrConfig& cfg) {
  return clamp01(cfg.w_delay * (1.0 - features[0]) + cfg.w_loss * (1.0 - features[2]) +
                 cfg.w_jitter * (1.0 - features[1]) + cfg.w_rel * features[4]);
}

// Maps a score to the macro-class grid {1/k, 2/k, ..., 1}: class c covers
// scores in (c - 1/k, c], so an exact boundary score stays in the lower
// class and 0 maps to the lowest class.
inline double macro_class_of(double s, int classes) {
  const double step = 1.0 / classes;
  int k = static_cast<int>(std::floor(s / step + 1e-12));
  if (s > 0.0 && std::abs(s - k * step) < 1e-12) k -= 1;  // boundary -> lower class
  if (k < 0) k = 0;
  if (k > classes - 1) k = classes - 1;
  return (k + 1) * step;
}

struct RidgeModel {
  int dim = 0;  // features + bias
  double lambda = 0.1;
  Matrix gram;                  // running X^T X accumulator
  std::vector<double> moment;   // running X^T y accumulator
  std::vector<double> weights;  // solved coefficients, bias last
  bool fitted = false;

  static RidgeModel make(int features, double lambda) {
    RidgeModel m;
    m.dim = features + 1;
    m.lambda = lambda;
    m.gram = Matrix(m.dim, m.dim);
    m.moment.assign(static_cast<std::size_t>(m.dim), 0.0);
    m.weights.assign(static_cast<std::size_t>(m.dim), 0.0);
    return m;
  }

  void accumulate(std::span<const double> x, double y) {
    std::vector<double> xb(x.begin(), x.end());
    xb.push_back(1.0);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) gram.at(i, j) += xb[static_cast<std::size_t>(i)] * xb[static_cast<std::size_t>(j)];
      moment[static_cast<std::size_t>(i)] += xb[static_cast<std::size_t>(i)] * y;
    }
  }

  // Solves (gram + lambda I) w = moment via Cholesky; the system is PD for
  // lambda > 0.
  void solve() {
    const int n = dim;
    Matrix a = gram;
    for (int i = 0; i < n; ++i) a.at(i, i) += lambda;
    Matrix L(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = a.at(i, j);
        for (int k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
        if (i == j) {
          if (s <= 0.0) throw SingularSystem("ridge system not positive definite");
          L.at(i, i) = std::sqrt(s);
        } else {
          L.at(i, j) = s / L.at(j, j);
        }
      }
    }
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double s = moment[static_cast<std::size_t>(i)];
      for (int k = 0; k < i; ++k) s -= L.at(i, k) * z[static_cast<std::size_t>(k)];
      z[static_cast<std::size_t>(i)] = s / L.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = z[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < n; ++k) s -= L.at(k, i) * weights[static_cast<std::size_t>(k)];
      weights[static_cast<std::size_t>(i)] = s / L.at(i, i);
    }
    fitted = true;
  }

  double score(std::span<const double> x) const {
    double s = weights[static_cast<std::size_t>(dim) - 1];  // bias
    for (int i = 0; i + 1 < dim; ++i) s += weights[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    return s;
  }

  // checkpoint dump: header then weights, gram, moment at full precision
  void save(std::ostream& os) const {
    os << "ridge " << dim << ' ' << fmt_double(lambda, 17) << ' ' << (fitted ? 1 : 0) << '\n';
    auto dump = [&os](const std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt_double(v[i], 17);
      os << '\n';
    };
    dump(weights);
    dump(gram.v);
    dump(moment);
  }

  static RidgeModel load(std::istream& is) {
    std::string tag;
    int dim = 0, fitted = 0;
    double lambda = 0.0;
    if (!(is >> tag >> dim >> lambda >> fitted) || tag != "ridge")
      throw Error("bad ridge dump header");
    RidgeModel m = RidgeModel::make(dim - 1, lambda);
    m.fitted = fitted != 0;
    for (auto& x : m.weights) is >> x;
    for (auto& x : m.gram.v) is >> x;
    for (auto& x : m.moment) is >> x;
    if (!is) throw Error("truncated ridge dump");
    return m;
  }
};

inline PriorityLabel predict(const RidgeModel& model, std::span<const double> features,
                             int classes) {
  const double s = clamp01(model.score(features));
  return {macro_class_of(s, classes), s};
}

enum class DyPrMode { Observatory, Train, Predict };

// Observatory -> Train -> Predict lifecycle; Predict falls back to Train when
// the rolling MAE degrades past 2x the threshold.
class DyPrState {
 public:
  explicit DyPrState(const DyPrConfig& cfg = {})
      : cfg_(cfg),
        buffer_(static_cast<std::size_t>(cfg.buffer_capacity)),
        model_(RidgeModel::make(kDyPrFeatures, cfg.lambda)) {
    cfg_.validate();
  }

  DyPrMode mode() const { return mode_; }
  const RidgeModel& model() const { return model_; }
  const DyPrConfig& config() const { return cfg_; }
  std::size_t buffered() const { return buffer_.size(); }

  // Observatory-phase labeling: uniform macro class, uniform micro.
  PriorityLabel observe(const SfcRequest& sfc, Rng& rng) {
    if (mode_ != DyPrMode::Observatory) throw WrongMode("observe outside observatory phase");
    PriorityLabel lab;
    lab.macro = (1 + rng.uniform_index(cfg_.macro_classes)) / static_cast<double>(cfg_.macro_classes);
    lab.micro = rng.uniform01();
    auto f = featurize(sfc, cfg_);
    buffer_.push({f, pseudo_target(f, cfg_)});
    if (static_cast<int>(buffer_.size()) >= cfg_.observatory_threshold) mode_ = DyPrMode::Train;
    return lab;
  }

  void fit(Rng& rng) {
    if (mode_ != DyPrMode::Train) throw WrongMode("fit outside train mode");
    if (buffer_.size() < static_cast<std::size_t>(cfg_.batch))
      throw BufferTooSmall("dypr: buffer below batch size");
    for (const auto& [x, y] : buffer_.sample(rng, static_cast<std::size_t>(cfg_.batch)))
      model_.accumulate(x, y);
    model_.solve();
  }

  // Mode transitions on the rolling-window MAE with 2x hysteresis.
  void check_accuracy() {
    if (mode_ == DyPrMode::Observatory) throw WrongMode("check_accuracy in observatory phase");
    if (errors_.empty()) return;
    double mae = 0.0;
    for (double e : errors_) mae += e;
    mae /= static_cast<double>(errors_.size());
    if (mode_ == DyPrMode::Train && mae <= cfg_.accuracy_threshold)
      mode_ = DyPrMode::Predict;
    else if (mode_ == DyPrMode::Predict && mae > 2.0 * cfg_.accuracy_threshold)
      mode_ = DyPrMode::Train;
  }

  void record_error(double abs_err) {
    errors_.push_back(abs_err);
    while (static_cast<int>(errors_.size()) > cfg_.accuracy_window) errors_.pop_front();
  }

  // Full per-arrival step used by the pipeline: labels the request, keeps
  // the buffer/accuracy window current and runs fit/check cadences.
  PriorityLabel label(const SfcRequest& sfc, Rng& rng) {
    ++seen_;
    if (mode_ == DyPrMode::Observatory) return observe(sfc, rng);
    auto f = featurize(sfc, cfg_);
    const double target = pseudo_target(f, cfg_);
    buffer_.push({f, target});
    if (!model_.fitted) fit(rng);
    PriorityLabel lab = predict(model_, f, cfg_.macro_classes);
    record_error(std::abs(lab.micro - target));
    if (mode_ == DyPrMode::Train && seen_ % cfg_.fit_every == 0) fit(rng);
    if (seen_ % cfg_.check_every == 0) check_accuracy();
    return lab;
  }

  // test hook
  void force_mode(DyPrMode m) { mode_ = m; }

 private:
  DyPrConfig cfg_;
  DyPrMode mode_ = DyPrMode::Observatory;
  ReplayBuffer<std::pair<std::vector<double>, double>> buffer_;
  RidgeModel model_;
  std::deque<double> errors_;
  long seen_ = 0;
};

}  // namespace sfcsim
