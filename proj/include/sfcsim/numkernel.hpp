#pragma once
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sfcsim/rng.hpp"
#include "sfcsim/util.hpp"

namespace sfcsim {

struct DimensionMismatch : Error {
  using Error::Error;
};
struct ArchitectureMismatch : Error {
  using Error::Error;
};
struct BufferTooSmall : Error {
  using Error::Error;
};

// Row-major dense matrix.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> v;
  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

enum class Act { Relu, Tanh, Identity, Sigmoid };

inline double act_eval(Act a, double x) {
  switch (a) {
    case Act::Relu: return x > 0.0 ? x : 0.0;
    case Act::Tanh: return std::tanh(x);
    case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Act::Identity: return x;
  }
  return x;
}

// Derivative expressed through the activation output y.
inline double act_deriv_from_out(Act a, double y) {
  switch (a) {
    case Act::Relu: return y > 0.0 ? 1.0 : 0.0;
    case Act::Tanh: return 1.0 - y * y;
    case Act::Sigmoid: return y * (1.0 - y);
    case Act::Identity: return 1.0;
  }
  return 1.0;
}

struct Mlp {
  std::vector<int> sizes;          // e.g. {6, 64, 64, 1}
  std::vector<Matrix> w;           // w[l]: sizes[l+1] x sizes[l]
  std::vector<std::vector<double>> b;
  Act hidden = Act::Relu;
  Act output = Act::Identity;

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(w.size()); }
  Act layer_act(int l) const { return l + 1 == layer_count() ? output : hidden; }

  bool same_shape(const Mlp& o) const {
    return sizes == o.sizes && hidden == o.hidden && output == o.output;
  }
};

// Uniform +-1/sqrt(fan_in) initialization.
inline Mlp make_mlp(const std::vector<int>& sizes, Act hidden, Act output, Rng& rng) {
  if (sizes.size() < 2) throw ArchitectureMismatch("mlp needs at least two layers");
  Mlp m;
  m.sizes = sizes;
  m.hidden = hidden;
  m.output = output;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    Matrix w(out, in);
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& x : w.v) x = rng.uniform(-s, s);
    m.w.push_back(std::move(w));
    m.b.emplace_back(static_cast<std::size_t>(out), 0.0);
  }
  return m;
}

// Per-layer activations of a batched forward pass; act[0] is the input.
struct BatchTrace {
  std::vector<Matrix> act;
};

inline Matrix forward_batch(const Mlp& m, const Matrix& x, BatchTrace* trace = nullptr) {
  if (x.cols != m.input_size()) throw DimensionMismatch("forward: input width mismatch");
  if (trace) {
    trace->act.clear();
    trace->act.push_back(x);
  }
  Matrix cur = x;
  for (int l = 0; l < m.layer_count(); ++l) {
    const Matrix& w = m.w[static_cast<std::size_t>(l)];
    const auto& b = m.b[static_cast<std::size_t>(l)];
    Matrix next(cur.rows, w.rows);
    const Act a = m.layer_act(l);
    for (int r = 0; r < cur.rows; ++r) {
      const double* xin = cur.row(r);
      double* xo = next.row(r);
      for (int o = 0; o < w.rows; ++o) {
        const double* wr = w.row(o);
        double acc = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < w.cols; ++i) acc += wr[i] * xin[i];
        xo[o] = act_eval(a, acc);
      }
    }
    cur = std::move(next);
    if (trace) trace->act.push_back(cur);
  }
  return cur;
}

inline std::vector<double> forward(const Mlp& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.input_size())
    throw DimensionMismatch("forward: input size mismatch");
  Matrix in(1, m.input_size());
  std::copy(x.begin(), x.end(), in.v.begin());
  Matrix out = forward_batch(m, in);
  return out.v;
}

struct MlpGrad {
  std::vector<Matrix> w;
  std::vector<std::vector<double>> b;

  static MlpGrad zeros_like(const Mlp& m) {
    MlpGrad g;
    for (const auto& wl : m.w) g.w.emplace_back(wl.rows, wl.cols);
    for (const auto& bl : m.b) g.b.emplace_back(bl.size(), 0.0);
    return g;
  }
};

// Gradients of sum_batch <upstream, f(x)> w.r.t. parameters; also returns the
// gradient with respect to the input batch. Gradients accumulate over the
// batch; callers scale upstream for means.
inline Matrix backward_batch(const Mlp& m, const BatchTrace& trace, const Matrix& upstream,
                             MlpGrad& grad) {
  const int L = m.layer_count();
  if (static_cast<int>(trace.act.size()) != L + 1)
    throw DimensionMismatch("backward: trace does not match net");
  if (upstream.cols != m.output_size() || upstream.rows != trace.act[0].rows)
    throw DimensionMismatch("backward: upstream shape mismatch");

  Matrix delta = upstream;  // becomes dL/dz per layer
  for (int l = L - 1; l >= 0; --l) {
    const Matrix& y = trace.act[static_cast<std::size_t>(l) + 1];
    const Act a = m.layer_act(l);
    for (int r = 0; r < delta.rows; ++r) {
      double* dr = delta.row(r);
      const double* yr = y.row(r);
      for (int c = 0; c < delta.cols; ++c) dr[c] *= act_deriv_from_out(a, yr[c]);
    }
    const Matrix& xin = trace.act[static_cast<std::size_t>(l)];
    Matrix& gw = grad.w[static_cast<std::size_t>(l)];
    auto& gb = grad.b[static_cast<std::size_t>(l)];
    for (int r = 0; r < delta.rows; ++r) {
      const double* dr = delta.row(r);
      const double* xr = xin.row(r);
      for (int o = 0; o < gw.rows; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        double* gwr = gw.row(o);
        for (int i = 0; i < gw.cols; ++i) gwr[i] += d * xr[i];
        gb[static_cast<std::size_t>(o)] += d;
      }
    }
    const Matrix& w = m.w[static_cast<std::size_t>(l)];
    Matrix prev(delta.rows, w.cols);
    for (int r = 0; r < delta.rows; ++r) {
      const double* dr = delta.row(r);
      double* pr = prev.row(r);
      for (int o = 0; o < w.rows; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        const double* wr = w.row(o);
        for (int i = 0; i < w.cols; ++i) pr[i] += d * wr[i];
      }
    }
    delta = std::move(prev);
  }
  return delta;  // gradient w.r.t. input batch
}

struct BackwardResult {
  MlpGrad grad;
  std::vector<double> input_grad;
};

inline BackwardResult backward(const Mlp& m, std::span<const double> x,
                               std::span<const double> upstream) {
  Matrix in(1, m.input_size());
  if (static_cast<int>(x.size()) != m.input_size())
    throw DimensionMismatch("backward: input size mismatch");
  std::copy(x.begin(), x.end(), in.v.begin());
  BatchTrace tr;
  forward_batch(m, in, &tr);
  Matrix up(1, m.output_size());
  if (static_cast<int>(upstream.size()) != m.output_size())
    throw DimensionMismatch("backward: upstream size mismatch");
  std::copy(upstream.begin(), upstream.end(), up.v.begin());
  BackwardResult res{MlpGrad::zeros_like(m), {}};
  Matrix ig = backward_batch(m, tr, up, res.grad);
  res.input_grad = ig.v;
  return res;
}

struct AdamState {
  double alpha = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t step = 0;
  MlpGrad m, v;

  static AdamState for_mlp(const Mlp& net, double alpha) {
    AdamState s;
    s.alpha = alpha;
    s.m = MlpGrad::zeros_like(net);
    s.v = MlpGrad::zeros_like(net);
    return s;
  }
};

inline void adam_step(Mlp& net, const MlpGrad& grad, AdamState& st) {
  if (grad.w.size() != net.w.size()) throw DimensionMismatch("adam: grad/param mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  auto upd = [&](double& p, double g, double& m, double& v) {
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g * g;
    const double mh = m / bc1, vh = v / bc2;
    p -= st.alpha * mh / (std::sqrt(vh) + st.eps);
  };
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    auto& w = net.w[l];
    if (grad.w[l].rows != w.rows || grad.w[l].cols != w.cols)
      throw DimensionMismatch("adam: layer shape mismatch");
    for (std::size_t i = 0; i < w.v.size(); ++i)
      upd(w.v[i], grad.w[l].v[i], st.m.w[l].v[i], st.v.w[l].v[i]);
    auto& b = net.b[l];
    for (std::size_t i = 0; i < b.size(); ++i)
      upd(b[i], grad.b[l][i], st.m.b[l][i], st.v.b[l][i]);
  }
}

// target <- (1-tau)*target + tau*online
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!target.same_shape(online)) throw ArchitectureMismatch("soft_update: architecture mismatch");
  for (std::size_t l = 0; l < target.w.size(); ++l) {
    for (std::size_t i = 0; i < target.w[l].v.size(); ++i)
      target.w[l].v[i] = (1.0 - tau) * target.w[l].v[i] + tau * online.w[l].v[i];
    for (std::size_t i = 0; i < target.b[l].size(); ++i)
      target.b[l][i] = (1.0 - tau) * target.b[l][i] + tau * online.b[l][i];
  }
}

// Fixed-capacity ring buffer with uniform without-replacement sampling.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1) : capacity_(capacity) {}

  void push(T t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T> sample(Rng& rng, std::size_t batch) const {
    if (batch > data_.size()) throw BufferTooSmall("replay buffer smaller than batch");
    std::vector<std::size_t> idx(data_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<T> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j = i + rng.uniform_int(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(data_[idx[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> data_;
};

// Text tensor dump: "mlp <n_sizes> <sizes...> <hidden> <output>" header, then
// one line per tensor with row-major values at full precision.
inline void save_mlp(std::ostream& os, const Mlp& m) {
  os << "mlp " << m.sizes.size();
  for (int s : m.sizes) os << ' ' << s;
  os << ' ' << static_cast<int>(m.hidden) << ' ' << static_cast<int>(m.output) << '\n';
  auto dump = [&os](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt_double(v[i], 17);
    os << '\n';
  };
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    dump(m.w[l].v);
    dump(m.b[l]);
  }
}

inline Mlp load_mlp(std::istream& is) {
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "mlp") throw Error("bad mlp dump header");
  Mlp m;
  m.sizes.resize(n);
  for (auto& s : m.sizes) is >> s;
  int h = 0, o = 0;
  is >> h >> o;
  m.hidden = static_cast<Act>(h);
  m.output = static_cast<Act>(o);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    Matrix w(m.sizes[l + 1], m.sizes[l]);
    for (auto& x : w.v) is >> x;
    m.w.push_back(std::move(w));
    std::vector<double> b(static_cast<std::size_t>(m.sizes[l + 1]));
    for (auto& x : b) is >> x;
    m.b.push_back(std::move(b));
  }
  if (!is) throw Error("truncated mlp dump");
  return m;
}

inline void save_mlp_file(const std::string& path, const Mlp& m) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  save_mlp(f, m);
}

inline Mlp load_mlp_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  return load_mlp(f);
}

}  // namespace sfcsim
