#pragma once
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include "sfcsim/config.hpp"
#include "sfcsim/simengine.hpp"

namespace sfcsim {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

inline std::string hex64(std::uint64_t x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline double final_window_mean(const std::vector<double>& series, int window) {
  if (series.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(series.size(), static_cast<std::size_t>(window));
  double acc = 0.0;
  for (std::size_t i = series.size() - n; i < series.size(); ++i) acc += series[i];
  return acc / static_cast<double>(n);
}

// Distributes i = 0..n-1 over a fixed worker count; results must not depend
// on scheduling, so workers only write into their own slots.
template <typename Fn>
inline void parallel_over(std::size_t n, unsigned threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (unsigned t = 0; t < std::min<std::size_t>(threads, n); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

struct CliOptions {
  std::string config_path;
  std::string out_dir;                 // overrides config/env when set
  std::vector<std::uint64_t> seeds;    // overrides config when non-empty
  std::vector<std::pair<std::string, std::string>> sets;  // --set key=value
  unsigned threads = std::thread::hardware_concurrency();
};

inline std::string resolve_out_dir(const ExperimentConfig& cfg, const CliOptions& opt) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("SFCSIM_OUT_DIR")) return env;
  return "out";
}

inline ExperimentConfig prepare_config(const CliOptions& opt) {
  ExperimentConfig cfg = load_config_file(opt.config_path);
  for (const auto& [k, v] : opt.sets) apply_override(cfg, k, v);
  if (!opt.seeds.empty()) cfg.seeds = opt.seeds;
  cfg.pipeline.normalize();
  cfg.pipeline.validate();
  return cfg;
}

// Runs the configured experiment once per seed; emits per-seed metrics CSV
// and event log plus a run manifest. Exit 0 on success, 1 on configuration
// errors, 2 on runtime failures.
inline int cmd_run(const CliOptions& opt) {
  ExperimentConfig cfg;
  std::string out;
  try {
    cfg = prepare_config(opt);
    out = resolve_out_dir(cfg, opt);
    std::filesystem::create_directories(out);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  try {
    std::vector<std::uint64_t> stream_hashes(cfg.seeds.size(), 0);
    detail::parallel_over(cfg.seeds.size(), opt.threads, [&](std::size_t i) {
      const std::uint64_t seed = cfg.seeds[i];
      std::ofstream events(out + "/events_seed" + std::to_string(seed) + ".log");
      ExperimentResult res = run_experiment(cfg.pipeline, seed, &events);
      std::ofstream csv(out + "/metrics_seed" + std::to_string(seed) + ".csv");
      write_metrics_csv(csv, res.episodes);
      stream_hashes[i] = res.stream_hash;
    });
    std::ofstream mf(out + "/manifest.txt");
    mf << "sfcsim " << kVersion << '\n';
    mf << "scenario " << cfg.pipeline.scenario << '\n';
    mf << "config_hash " << detail::hex64(config_hash(cfg)) << '\n';
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
      mf << "seed " << cfg.seeds[i] << " stream_hash " << detail::hex64(stream_hashes[i]) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
}

// Runs every [variant X] of the config on the same seed set and writes a
// side-by-side summary of final-window SAR per class, one row per
// (variant, seed); the footer confirms arrival-stream equality across
// variants.
inline int cmd_compare(const CliOptions& opt) {
  ExperimentConfig cfg;
  std::string out;
  try {
    cfg = prepare_config(opt);
    if (cfg.variants.size() < 2)
      throw ConfigInvalid("compare needs at least two [variant X] sections");
    out = resolve_out_dir(cfg, opt);
    std::filesystem::create_directories(out);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  try {
    const std::size_t nv = cfg.variants.size(), ns = cfg.seeds.size();
    struct Cell {
      double sar, high, low, hd, nhd, remaining;
      std::uint64_t stream;
    };
    std::vector<Cell> cells(nv * ns);
    detail::parallel_over(nv * ns, opt.threads, [&](std::size_t idx) {
      const std::size_t vi = idx / ns, si = idx % ns;
      ExperimentConfig vc = variant_config(cfg, vi);
      vc.pipeline.normalize();
      vc.pipeline.validate();
      const std::uint64_t seed = cfg.seeds[si];
      ExperimentResult res = run_experiment(vc.pipeline, seed);
      std::ofstream csv(out + "/" + vc.pipeline.scenario + "_seed" + std::to_string(seed) + ".csv");
      write_metrics_csv(csv, res.episodes);
      auto col = [&](auto proj) {
        std::vector<double> v;
        v.reserve(res.episodes.size());
        for (const auto& m : res.episodes) v.push_back(proj(m));
        return detail::final_window_mean(v, vc.pipeline.ma_window);
      };
      cells[idx] = {col([](const EpisodeMetrics& m) { return m.sar; }),
                    col([](const EpisodeMetrics& m) { return m.sar_high; }),
                    col([](const EpisodeMetrics& m) { return m.sar_low; }),
                    col([](const EpisodeMetrics& m) { return m.sar_hd; }),
                    col([](const EpisodeMetrics& m) { return m.sar_nhd; }),
                    col([](const EpisodeMetrics& m) { return m.remaining_cpu_avg; }),
                    res.stream_hash};
    });
    std::ofstream sf(out + "/summary.csv");
    sf << "variant,seed,final_sar,final_sar_high,final_sar_low,final_sar_hd,final_sar_nhd,"
          "final_remaining_cpu,stream_hash\n";
    for (std::size_t vi = 0; vi < nv; ++vi)
      for (std::size_t si = 0; si < ns; ++si) {
        const auto& c = cells[vi * ns + si];
        sf << cfg.variants[vi].first << ',' << cfg.seeds[si] << ',' << fmt_double(c.sar) << ','
           << fmt_double(c.high) << ',' << fmt_double(c.low) << ',' << fmt_double(c.hd) << ','
           << fmt_double(c.nhd) << ',' << fmt_double(c.remaining) << ','
           << detail::hex64(c.stream) << '\n';
      }
    for (std::size_t si = 0; si < ns; ++si) {
      bool same = true;
      for (std::size_t vi = 1; vi < nv; ++vi)
        if (cells[vi * ns + si].stream != cells[si].stream) same = false;
      sf << "# arrival_streams_identical seed=" << cfg.seeds[si] << " " << (same ? 1 : 0) << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
}

// ---------------------------------------------------------------------------
// selftest: fast built-in oracle suite

namespace selftest {

inline double min_relu_preact(const Mlp& m, const std::vector<double>& x) {
  double min_abs = 1e300;
  std::vector<double> cur = x;
  for (int l = 0; l < m.layer_count(); ++l) {
    const auto& w = m.w[static_cast<std::size_t>(l)];
    std::vector<double> z(static_cast<std::size_t>(w.rows));
    for (int o = 0; o < w.rows; ++o) {
      double acc = m.b[static_cast<std::size_t>(l)][static_cast<std::size_t>(o)];
      for (int i = 0; i < w.cols; ++i) acc += w.row(o)[i] * cur[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = acc;
    }
    const Act a = m.layer_act(l);
    if (a == Act::Relu)
      for (double v : z) min_abs = std::min(min_abs, std::abs(v));
    for (auto& v : z) v = act_eval(a, v);
    cur = std::move(z);
  }
  return min_abs;
}

inline bool check_gradients(bool corrupt, std::ostream& os) {
  Rng rng(12345);
  bool ok = true;
  for (Act hidden : {Act::Relu, Act::Tanh}) {
    for (Act output : {Act::Identity, Act::Sigmoid, Act::Tanh}) {
      Mlp net = make_mlp({4, 8, 6, 3}, hidden, output, rng);
      std::vector<double> x(4), up(3);
      // central differences are invalid on a relu kink; sample clear of it
      do {
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      } while (hidden == Act::Relu && min_relu_preact(net, x) < 1e-3);
      for (auto& v : up) v = rng.uniform(-1.0, 1.0);
      auto res = backward(net, x, up);
      if (corrupt) res.grad.w[0].at(0, 0) += 0.05;
      const double h = 1e-5;
      double worst = 0.0;
      auto objective = [&](const Mlp& m) {
        const auto y = forward(m, x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
        return s;
      };
      for (std::size_t l = 0; l < net.w.size(); ++l)
        for (std::size_t i = 0; i < net.w[l].v.size(); ++i) {
          Mlp plus = net, minus = net;
          plus.w[l].v[i] += h;
          minus.w[l].v[i] -= h;
          const double num = (objective(plus) - objective(minus)) / (2 * h);
          const double ana = res.grad.w[l].v[i];
          const double rel = std::abs(num - ana) / std::max(1.0, std::max(std::abs(num), std::abs(ana)));
          worst = std::max(worst, rel);
        }
      if (worst > 1e-4) {
        os << "  gradient check failed (rel err " << fmt_double(worst) << ")\n";
        ok = false;
      }
    }
  }
  return ok;
}

// independent dense route: Gauss-Jordan on (gram + lambda I | moment)
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const int n = a.rows;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a.at(r, col)) > std::abs(a.at(piv, col))) piv = r;
    for (int c = 0; c < n; ++c) std::swap(a.at(col, c), a.at(piv, c));
    std::swap(b[static_cast<std::size_t>(col)], b[static_cast<std::size_t>(piv)]);
    const double d = a.at(col, col);
    for (int c = 0; c < n; ++c) a.at(col, c) /= d;
    b[static_cast<std::size_t>(col)] /= d;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a.at(r, col);
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) a.at(r, c) -= f * a.at(col, c);
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  return b;
}

inline bool check_ridge(std::ostream& os) {
  Rng rng(777);
  for (int rep = 0; rep < 5; ++rep) {
    RidgeModel m = RidgeModel::make(kDyPrFeatures, 0.1);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x(kDyPrFeatures);
      for (auto& v : x) v = rng.uniform01();
      m.accumulate(x, rng.uniform01());
    }
    m.solve();
    Matrix a = m.gram;
    for (int i = 0; i < m.dim; ++i) a.at(i, i) += m.lambda;
    const auto ref = solve_dense(a, m.moment);
    for (int i = 0; i < m.dim; ++i)
      if (std::abs(ref[static_cast<std::size_t>(i)] - m.weights[static_cast<std::size_t>(i)]) > 1e-6) {
        os << "  ridge mismatch vs dense solver\n";
        return false;
      }
  }
  return true;
}

inline bool check_gi(std::ostream& os) {
  for (int d = 1; d <= 64; ++d) {
    int prev_m = 1 << 30;
    for (int k = 1; k <= 20; ++k) {
      const double nai = k / 20.0;
      const int s_exact = std::max(1, (k * d) / 20);
      const int m_exact = (d + s_exact - 1) / s_exact;
      const int m = granularity_index(d, nai);
      if (m != m_exact) {
        os << "  GI mismatch at demand=" << d << " nai=" << fmt_double(nai) << '\n';
        return false;
      }
      if (m > prev_m) {
        os << "  GI not monotone at demand=" << d << '\n';
        return false;
      }
      prev_m = m;
    }
    if (granularity_index(d, 1.0) != 1 || granularity_index(d, 1e-9) != d) {
      os << "  GI boundary values wrong\n";
      return false;
    }
  }
  return true;
}

inline bool check_nai(std::ostream& os) {
  SubstrateNetwork net = load_topology(TopologySpec{.name = "netrail"});
  if (net.availability_index() != 1.0) {
    os << "  fresh NAI != 1\n";
    return false;
  }
  net.allocate_cpu(0, 63);
  const double nai = net.availability_index();
  if (nai <= 0.0 || nai >= 1.0) {
    os << "  NAI out of bounds\n";
    return false;
  }
  const double expect = (700.0 - 63.0) / 700.0;
  if (std::abs(nai - expect) > 1e-12) {
    os << "  NAI arithmetic wrong\n";
    return false;
  }
  return true;
}

inline bool check_kmeans(std::ostream& os) {
  Rng rng(4242);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 100; ++i) {
      const bool right = i % 2 == 0;
      pts.push_back({(right ? 10.0 : 0.0) + rng.normal(0.0, 0.5), rng.normal(0.0, 0.5)});
    }
    // WCSS monotonicity is asserted inside kmeans itself
    auto res = kmeans(pts, 2, rng, 50);
    int agree = 0;
    for (int i = 0; i < 100; ++i) {
      const bool right = i % 2 == 0;
      if ((res.assignments[static_cast<std::size_t>(i)] == res.assignments[0]) == (right == true))
        ++agree;
    }
    if (std::max(agree, 100 - agree) < 99) {
      os << "  kmeans failed to recover separated blobs\n";
      return false;
    }
  }
  return true;
}

}  // namespace selftest

// Kernel self-checks printed one per line; exit 3 on any failure. The
// corrupt_gradient hook exists for negative-control tests.
inline int cmd_selftest(bool corrupt_gradient = false, std::ostream& os = std::cout) {
  struct Check {
    const char* name;
    bool ok;
  };
  std::vector<Check> checks;
  checks.push_back({"mlp-gradient-vs-finite-differences",
                    selftest::check_gradients(corrupt_gradient, os)});
  checks.push_back({"ridge-vs-dense-normal-equations", selftest::check_ridge(os)});
  checks.push_back({"granularity-index-table", selftest::check_gi(os)});
  checks.push_back({"network-availability-index", selftest::check_nai(os)});
  checks.push_back({"kmeans-blob-recovery", selftest::check_kmeans(os)});
  bool all = true;
  for (const auto& c : checks) {
    os << (c.ok ? "[PASS] " : "[FAIL] ") << c.name << '\n';
    all = all && c.ok;
  }
  return all ? 0 : 3;
}

}  // namespace sfcsim
