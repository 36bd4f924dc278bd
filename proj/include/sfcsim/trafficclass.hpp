#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sfcsim/dypr.hpp"
#include "sfcsim/rng.hpp"
#include "sfcsim/workload.hpp"

namespace sfcsim {

struct TooFewPoints : Error {
  using Error::Error;
};
struct DegenerateClusters : Error {
  using Error::Error;
};
struct SingleClassInput : Error {
  using Error::Error;
};

enum class DemandLabel { NHD = 0, HD = 1 };

struct ClassifierFeatures {
  double mean_load = 0.0;
  double peak_load = 0.0;
  double cumulative_volume = 0.0;
  double popularity = 0.0;
  double qos_stringency = 0.0;
  double lifetime = 0.0;

  std::vector<double> as_vector() const {
    return {mean_load, peak_load, cumulative_volume, popularity, qos_stringency, lifetime};
  }
};

inline constexpr int kClassifierFeatures = 6;

inline ClassifierFeatures make_classifier_features(const SfcRequest& r, const DyPrConfig& dypr_cfg) {
  ClassifierFeatures f;
  f.mean_load = profile_mean_load(r.profile);
  f.peak_load = profile_peak_load(r.profile);
  f.cumulative_volume = cumulative_load(r.profile, 0.0, std::min(r.lifetime, 600.0), 1.0);
  f.popularity = r.popularity;
  f.qos_stringency = pseudo_target(featurize(r, dypr_cfg), dypr_cfg);
  f.lifetime = r.lifetime;
  return f;
}

// ---------------------------------------------------------------------------
// clustering

struct KmeansResult {
  std::vector<int> assignments;
  std::vector<std::vector<double>> centroids;
  double wcss = 0.0;
  int iterations = 0;
};

namespace detail {
inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}
}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. WCSS is checked to be
// non-increasing every iteration.
inline KmeansResult kmeans(const std::vector<std::vector<double>>& points, int k, Rng& rng,
                           int max_iter = 100) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || n < k) throw TooFewPoints("kmeans: fewer points than clusters");
  const std::size_t dim = points[0].size();

  // k-means++ seeding
  std::vector<std::vector<double>> cent;
  cent.push_back(points[rng.uniform_index(n)]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(cent.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : cent) best = std::min(best, detail::sq_dist(points[static_cast<std::size_t>(i)], c));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      cent.push_back(points[rng.uniform_index(n)]);
      continue;
    }
    double pick = rng.uniform01() * total;
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      pick -= d2[static_cast<std::size_t>(i)];
      if (pick <= 0.0) {
        chosen = i;
        break;
      }
    }
    cent.push_back(points[static_cast<std::size_t>(chosen)]);
  }

  KmeansResult res;
  res.assignments.assign(static_cast<std::size_t>(n), 0);
  double prev_wcss = std::numeric_limits<double>::max();
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double wcss = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::max();
      for (int c = 0; c < k; ++c) {
        const double d = detail::sq_dist(points[static_cast<std::size_t>(i)], cent[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (res.assignments[static_cast<std::size_t>(i)] != best) changed = true;
      res.assignments[static_cast<std::size_t>(i)] = best;
      wcss += bd;
    }
    if (wcss > prev_wcss + 1e-9)
      throw Error("kmeans: WCSS increased between iterations");
    prev_wcss = wcss;
    res.wcss = wcss;
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    // recompute centroids; empty clusters keep their previous centroid
    std::vector<std::vector<double>> nc(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.assignments[static_cast<std::size_t>(i)];
      ++cnt[static_cast<std::size_t>(c)];
      for (std::size_t j = 0; j < dim; ++j) nc[static_cast<std::size_t>(c)][j] += points[static_cast<std::size_t>(i)][j];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[static_cast<std::size_t>(c)] == 0) {
        nc[static_cast<std::size_t>(c)] = cent[static_cast<std::size_t>(c)];
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) nc[static_cast<std::size_t>(c)][j] /= cnt[static_cast<std::size_t>(c)];
    }
    cent = std::move(nc);
  }
  res.centroids = std::move(cent);
  return res;
}

// Bottom-up Ward-linkage merging until k clusters remain. Ties resolve to the
// lowest (i, j) pair so results are deterministic in the input order.
inline std::vector<int> agglomerative(const std::vector<std::vector<double>>& points, int k) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || n < k) throw TooFewPoints("agglomerative: fewer points than clusters");
  struct Cluster {
    std::vector<double> sum;
    int count = 0;
    bool alive = false;
  };
  const std::size_t dim = points[0].size();
  std::vector<Cluster> cl(static_cast<std::size_t>(n));
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    cl[static_cast<std::size_t>(i)] = {points[static_cast<std::size_t>(i)], 1, true};
    owner[static_cast<std::size_t>(i)] = i;
  }
  auto ward_cost = [&](const Cluster& a, const Cluster& b) {
    // (|a||b| / (|a|+|b|)) * ||mean_a - mean_b||^2
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double ma = a.sum[j] / a.count, mb = b.sum[j] / b.count;
      d += (ma - mb) * (ma - mb);
    }
    return d * a.count * b.count / static_cast<double>(a.count + b.count);
  };
  int alive = n;
  while (alive > k) {
    double best = std::numeric_limits<double>::max();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!cl[static_cast<std::size_t>(i)].alive) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!cl[static_cast<std::size_t>(j)].alive) continue;
        const double c = ward_cost(cl[static_cast<std::size_t>(i)], cl[static_cast<std::size_t>(j)]);
        if (c < best - 1e-15) {
          best = c;
          bi = i;
          bj = j;
        }
      }
    }
    auto& a = cl[static_cast<std::size_t>(bi)];
    auto& b = cl[static_cast<std::size_t>(bj)];
    for (std::size_t j = 0; j < dim; ++j) a.sum[j] += b.sum[j];
    a.count += b.count;
    b.alive = false;
    for (int i = 0; i < n; ++i)
      if (owner[static_cast<std::size_t>(i)] == bj) owner[static_cast<std::size_t>(i)] = bi;
    --alive;
  }
  // renumber to 0..k-1 in order of first appearance
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  int next = 0;
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int o = owner[static_cast<std::size_t>(i)];
    if (remap[static_cast<std::size_t>(o)] < 0) remap[static_cast<std::size_t>(o)] = next++;
    out[static_cast<std::size_t>(i)] = remap[static_cast<std::size_t>(o)];
  }
  return out;
}

// The cluster with the higher mean cumulative_volume becomes HD. On an exact
// tie the cluster holding the single highest-volume point wins.
inline std::vector<DemandLabel> bootstrap_labels(const std::vector<int>& assignments,
                                                 const std::vector<ClassifierFeatures>& feats) {
  double sum[2] = {0, 0};
  int cnt[2] = {0, 0};
  double maxv[2] = {-1, -1};
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int c = assignments[i];
    if (c < 0 || c > 1) throw Error("bootstrap_labels requires exactly 2 clusters");
    sum[c] += feats[i].cumulative_volume;
    ++cnt[c];
    maxv[c] = std::max(maxv[c], feats[i].cumulative_volume);
  }
  if (cnt[0] == 0 || cnt[1] == 0) throw DegenerateClusters("bootstrap: empty cluster");
  const double m0 = sum[0] / cnt[0], m1 = sum[1] / cnt[1];
  int hd;
  if (m0 != m1)
    hd = m0 > m1 ? 0 : 1;
  else
    hd = maxv[0] >= maxv[1] ? 0 : 1;
  std::vector<DemandLabel> out(assignments.size());
  for (std::size_t i = 0; i < assignments.size(); ++i)
    out[i] = assignments[i] == hd ? DemandLabel::HD : DemandLabel::NHD;
  return out;
}

// ---------------------------------------------------------------------------
// supervised models

struct TreeNode {
  int feature = -1;        // -1 for leaves
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1, right = -1;
  DemandLabel label = DemandLabel::NHD;
};

struct TreeModel {
  std::vector<TreeNode> nodes;
  bool constant = false;  // flagged when trained on a single class

  DemandLabel classify(std::span<const double> x) const {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(cur)];
      cur = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(cur)].label;
  }

  std::string dump() const {
    std::string s;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& nd = nodes[i];
      s += std::to_string(i) + (nd.feature < 0 ? " leaf " + std::to_string(static_cast<int>(nd.label))
                                               : " f" + std::to_string(nd.feature) + "<=" +
                                                     fmt_double(nd.threshold) + " l" +
                                                     std::to_string(nd.left) + " r" +
                                                     std::to_string(nd.right)) +
           "\n";
    }
    return s;
  }
};

namespace detail {

inline double gini(int n_hd, int n) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(n_hd) / n;
  return 2.0 * p * (1.0 - p);
}

struct TreeBuilder {
  const std::vector<std::vector<double>>* xs;
  const std::vector<DemandLabel>* ys;
  int max_depth, min_leaf;
  TreeModel model;

  int build(std::vector<int> idx, int depth) {
    int n_hd = 0;
    for (int i : idx)
      if ((*ys)[static_cast<std::size_t>(i)] == DemandLabel::HD) ++n_hd;
    const int n = static_cast<int>(idx.size());
    const DemandLabel majority = n_hd * 2 >= n ? DemandLabel::HD : DemandLabel::NHD;
    if (depth >= max_depth || n_hd == 0 || n_hd == n || n < 2 * min_leaf)
      return leaf(majority);

    const std::size_t dim = (*xs)[0].size();
    double best_gain = 1e-12;
    int best_f = -1;
    double best_thr = 0.0;
    const double parent = gini(n_hd, n);
    for (std::size_t f = 0; f < dim; ++f) {
      std::vector<std::pair<double, DemandLabel>> vals;
      vals.reserve(idx.size());
      for (int i : idx) vals.push_back({(*xs)[static_cast<std::size_t>(i)][f], (*ys)[static_cast<std::size_t>(i)]});
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      int lh = 0;
      for (int i = 0; i + 1 < n; ++i) {
        if (vals[static_cast<std::size_t>(i)].second == DemandLabel::HD) ++lh;
        if (vals[static_cast<std::size_t>(i)].first == vals[static_cast<std::size_t>(i) + 1].first) continue;
        const int nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double g = parent - (nl * gini(lh, nl) + nr * gini(n_hd - lh, nr)) / n;
        if (g > best_gain) {
          best_gain = g;
          best_f = static_cast<int>(f);
          best_thr = 0.5 * (vals[static_cast<std::size_t>(i)].first + vals[static_cast<std::size_t>(i) + 1].first);
        }
      }
    }
    if (best_f < 0) return leaf(majority);
    std::vector<int> li, ri;
    for (int i : idx)
      ((*xs)[static_cast<std::size_t>(i)][static_cast<std::size_t>(best_f)] <= best_thr ? li : ri).push_back(i);
    const int me = static_cast<int>(model.nodes.size());
    model.nodes.push_back({best_f, best_thr, -1, -1, majority});
    model.nodes[static_cast<std::size_t>(me)].left = build(std::move(li), depth + 1);
    model.nodes[static_cast<std::size_t>(me)].right = build(std::move(ri), depth + 1);
    return me;
  }

  int leaf(DemandLabel lab) {
    model.nodes.push_back({-1, 0.0, -1, -1, lab});
    return static_cast<int>(model.nodes.size()) - 1;
  }
};

}  // namespace detail

// Greedy CART on Gini impurity. Single-class input yields a flagged constant
// classifier.
inline TreeModel train_tree(const std::vector<std::vector<double>>& xs,
                            const std::vector<DemandLabel>& ys, int max_depth = 4,
                            int min_leaf = 5) {
  if (xs.size() < 2) throw TooFewPoints("train_tree: need >= 2 samples");
  int n_hd = 0;
  for (auto y : ys)
    if (y == DemandLabel::HD) ++n_hd;
  if (n_hd == 0 || n_hd == static_cast<int>(ys.size())) {
    TreeModel m;
    m.constant = true;
    m.nodes.push_back({-1, 0.0, -1, -1, n_hd ? DemandLabel::HD : DemandLabel::NHD});
    return m;
  }
  // nodes are built root-first: reorder so the root sits at index 0
  detail::TreeBuilder tb{&xs, &ys, max_depth, min_leaf, {}};
  std::vector<int> idx(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) idx[i] = static_cast<int>(i);
  const int root = tb.build(std::move(idx), 0);
  if (root != 0) {
    std::swap(tb.model.nodes[0], tb.model.nodes[static_cast<std::size_t>(root)]);
    for (auto& nd : tb.model.nodes) {
      if (nd.left == 0) nd.left = root;
      else if (nd.left == root) nd.left = 0;
      if (nd.right == 0) nd.right = root;
      else if (nd.right == root) nd.right = 0;
    }
  }
  return tb.model;
}

struct LogisticModel {
  std::vector<double> w;
  double bias = 0.0;
  bool constant = false;
  DemandLabel constant_label = DemandLabel::NHD;

  double probability(std::span<const double> x) const {
    if (constant) return constant_label == DemandLabel::HD ? 1.0 : 0.0;
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
    return 1.0 / (1.0 + std::exp(-z));
  }
  // boundary rule: probability exactly 0.5 classifies as HD
  DemandLabel classify(std::span<const double> x) const {
    return probability(x) >= 0.5 ? DemandLabel::HD : DemandLabel::NHD;
  }
};

inline double logistic_loss(const LogisticModel& m, const std::vector<std::vector<double>>& xs,
                            const std::vector<DemandLabel>& ys) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double p = clamp(m.probability(xs[i]), 1e-12, 1.0 - 1e-12);
    loss -= ys[i] == DemandLabel::HD ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(xs.size());
}

// Batch gradient descent on cross-entropy; the step size halves whenever the
// loss fails to decrease.
inline LogisticModel train_logistic(const std::vector<std::vector<double>>& xs,
                                    const std::vector<DemandLabel>& ys, int epochs = 500,
                                    double lr = 0.1) {
  if (xs.size() < 2) throw TooFewPoints("train_logistic: need >= 2 samples");
  int n_hd = 0;
  for (auto y : ys)
    if (y == DemandLabel::HD) ++n_hd;
  LogisticModel m;
  m.w.assign(xs[0].size(), 0.0);
  if (n_hd == 0 || n_hd == static_cast<int>(ys.size())) {
    m.constant = true;
    m.constant_label = n_hd ? DemandLabel::HD : DemandLabel::NHD;
    return m;
  }
  const std::size_t dim = xs[0].size();
  const double n = static_cast<double>(xs.size());
  double prev = logistic_loss(m, xs, ys);
  for (int e = 0; e < epochs; ++e) {
    std::vector<double> gw(dim, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double err = m.probability(xs[i]) - (ys[i] == DemandLabel::HD ? 1.0 : 0.0);
      for (std::size_t j = 0; j < dim; ++j) gw[j] += err * xs[i][j];
      gb += err;
    }
    LogisticModel trial = m;
    for (std::size_t j = 0; j < dim; ++j) trial.w[j] -= lr * gw[j] / n;
    trial.bias -= lr * gb / n;
    const double cur = logistic_loss(trial, xs, ys);
    if (cur <= prev) {
      m = std::move(trial);
      prev = cur;
    } else {
      lr *= 0.5;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// pipeline

enum class ClassifierPreset { Off, AggoDt, KmeansLr };

inline ClassifierPreset parse_preset(const std::string& s) {
  if (s == "off") return ClassifierPreset::Off;
  if (s == "aggo+dt") return ClassifierPreset::AggoDt;
  if (s == "kmeans+lr") return ClassifierPreset::KmeansLr;
  throw BadConfig("unknown classifier preset '" + s + "'");
}

struct TrafficClassConfig {
  ClassifierPreset preset = ClassifierPreset::AggoDt;
  int window = 200;           // observatory window feeding the bootstrap
  int refresh_episodes = 50;  // re-cluster cadence
  int max_depth = 4;
  int min_leaf = 5;
  int logistic_epochs = 500;
  double logistic_lr = 0.1;
  int kmeans_iters = 100;
};

// Rolling-window bootstrap (clustering -> labels -> supervised model) with
// periodic refresh. Features are z-scored with window statistics before
// clustering and classification.
class ClassifierPipeline {
 public:
  explicit ClassifierPipeline(const TrafficClassConfig& cfg = {}) : cfg_(cfg) {}

  const TrafficClassConfig& config() const { return cfg_; }
  bool ready() const { return ready_; }

  void feed(const ClassifierFeatures& f) {
    window_.push_back(f);
    if (static_cast<int>(window_.size()) > cfg_.window) window_.erase(window_.begin());
  }

  // Called at episode boundaries; retrains on the refresh cadence.
  void maybe_refresh(int episode_index, Rng& rng) {
    if (cfg_.preset == ClassifierPreset::Off) return;
    if (static_cast<int>(window_.size()) < cfg_.window) return;
    if (ready_ && episode_index % cfg_.refresh_episodes != 0) return;
    train(rng);
  }

  void train(Rng& rng) {
    norm_mu_.assign(kClassifierFeatures, 0.0);
    norm_sigma_.assign(kClassifierFeatures, 1.0);
    std::vector<std::vector<double>> raw;
    raw.reserve(window_.size());
    for (const auto& f : window_) raw.push_back(f.as_vector());
    for (int j = 0; j < kClassifierFeatures; ++j) {
      double mu = 0.0;
      for (const auto& x : raw) mu += x[static_cast<std::size_t>(j)];
      mu /= static_cast<double>(raw.size());
      double var = 0.0;
      for (const auto& x : raw) var += (x[static_cast<std::size_t>(j)] - mu) * (x[static_cast<std::size_t>(j)] - mu);
      var /= static_cast<double>(raw.size());
      norm_mu_[static_cast<std::size_t>(j)] = mu;
      norm_sigma_[static_cast<std::size_t>(j)] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    std::vector<std::vector<double>> xs;
    xs.reserve(raw.size());
    for (const auto& x : raw) xs.push_back(normalize(x));

    std::vector<int> assign;
    if (cfg_.preset == ClassifierPreset::AggoDt)
      assign = agglomerative(xs, 2);
    else
      assign = kmeans(xs, 2, rng, cfg_.kmeans_iters).assignments;
    const auto labels = bootstrap_labels(assign, window_);
    if (cfg_.preset == ClassifierPreset::AggoDt)
      tree_ = train_tree(xs, labels, cfg_.max_depth, cfg_.min_leaf);
    else
      logistic_ = train_logistic(xs, labels, cfg_.logistic_epochs, cfg_.logistic_lr);
    ready_ = true;
  }

  // NHD until the first bootstrap completes.
  DemandLabel classify(const ClassifierFeatures& f) const {
    if (cfg_.preset == ClassifierPreset::Off || !ready_) return DemandLabel::NHD;
    const auto x = normalize(f.as_vector());
    return cfg_.preset == ClassifierPreset::AggoDt ? tree_.classify(x) : logistic_.classify(x);
  }

  std::string dump_model() const {
    if (!ready_) return "untrained\n";
    if (cfg_.preset == ClassifierPreset::AggoDt) return tree_.dump();
    std::string s = "logistic bias=" + fmt_double(logistic_.bias);
    for (double w : logistic_.w) s += " " + fmt_double(w);
    return s + "\n";
  }

  const std::vector<ClassifierFeatures>& window() const { return window_; }

 private:
  std::vector<double> normalize(const std::vector<double>& x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - norm_mu_[j]) / norm_sigma_[j];
    return out;
  }

  TrafficClassConfig cfg_;
  std::vector<ClassifierFeatures> window_;
  std::vector<double> norm_mu_, norm_sigma_;
  TreeModel tree_;
  LogisticModel logistic_;
  bool ready_ = false;
};

}  // namespace sfcsim
