#pragma once

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccpt/cost.hpp"
#include "ccpt/prng.hpp"
#include "ccpt/quantize.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

// ---------------------------------------------------------------------------
// graph plumbing

// Ā = D^{-1/2} (A + I) D^{-1/2}, the degree-normalized adjacency with added
// self-loops. Duplicate undirected edges collapse; listed self-edges are
// covered by the added loops.
template <class T = float>
TensorT<T> normalize_adjacency(int node_count, const std::vector<std::pair<int, int>>& edges) {
  if (node_count <= 0) throw std::invalid_argument("normalize_adjacency: need nodes");
  std::set<std::pair<int, int>> undirected;
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= node_count || v >= node_count)
      throw std::invalid_argument("normalize_adjacency: edge references invalid node id");
    if (u == v) continue;
    undirected.emplace(std::min(u, v), std::max(u, v));
  }

  std::vector<double> degree(std::size_t(node_count), 1.0);  // self-loop
  for (auto [u, v] : undirected) {
    degree[std::size_t(u)] += 1.0;
    degree[std::size_t(v)] += 1.0;
  }

  TensorT<T> adj({node_count, node_count});
  for (int i = 0; i < node_count; ++i)
    adj.at(i, i) = T(1.0 / degree[std::size_t(i)]);
  for (auto [u, v] : undirected) {
    const T w = T(1.0 / std::sqrt(degree[std::size_t(u)] * degree[std::size_t(v)]));
    adj.at(u, v) = w;
    adj.at(v, u) = w;
  }
  return adj;
}

enum class Split : unsigned char { Train, Val, Test };

template <class T = float>
struct GraphDataT {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;
  TensorT<T> features;  // [node_count x d]
  std::vector<int> labels;
  TensorT<T> norm_adj;  // [node_count x node_count]
  std::vector<Split> splits;
  int class_count = 0;
};

using GraphData = GraphDataT<float>;

// ---------------------------------------------------------------------------
// loss

template <class T>
struct LossResult {
  double loss = 0.0;
  double accuracy = 0.0;
  TensorT<T> dlogits;
};

// Mean softmax cross-entropy over the rows selected by `mask` (empty mask
// means every row). dlogits is zero on unselected rows.
template <class T>
LossResult<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels,
                                    const std::vector<char>& mask = {}) {
  const int m = logits.rows(), c = logits.cols();
  if (int(labels.size()) != m) throw std::invalid_argument("cross_entropy: label count mismatch");
  if (!mask.empty() && int(mask.size()) != m)
    throw std::invalid_argument("cross_entropy: mask size mismatch");

  LossResult<T> out;
  out.dlogits = TensorT<T>({m, c});
  long count = 0, correct = 0;
  double loss = 0.0;
  std::vector<double> p(static_cast<std::size_t>(c));
  for (int i = 0; i < m; ++i) {
    if (!mask.empty() && !mask[std::size_t(i)]) continue;
    ++count;
    const int y = labels[std::size_t(i)];
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: label out of range");

    double zmax = -1e300;
    int arg = 0;
    for (int j = 0; j < c; ++j) {
      const double z = double(logits.at(i, j));
      if (z > zmax) { zmax = z; arg = j; }
    }
    if (arg == y) ++correct;
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      p[std::size_t(j)] = std::exp(double(logits.at(i, j)) - zmax);
      sum += p[std::size_t(j)];
    }
    loss += std::log(sum) - (double(logits.at(i, y)) - zmax);
    for (int j = 0; j < c; ++j) out.dlogits.at(i, j) = T(p[std::size_t(j)] / sum);
    out.dlogits.at(i, y) = T(double(out.dlogits.at(i, y)) - 1.0);
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: empty selection");
  for (auto& v : out.dlogits.data) v = T(double(v) / double(count));
  out.loss = loss / double(count);
  out.accuracy = double(correct) / double(count);
  return out;
}

template <class T>
double accuracy(const TensorT<T>& logits, const std::vector<int>& labels,
                const std::vector<char>& mask = {}) {
  const int m = logits.rows(), c = logits.cols();
  long count = 0, correct = 0;
  for (int i = 0; i < m; ++i) {
    if (!mask.empty() && !mask[std::size_t(i)]) continue;
    ++count;
    int arg = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at(i, j) > logits.at(i, arg)) arg = j;
    if (arg == labels[std::size_t(i)]) ++correct;
  }
  return count == 0 ? 0.0 : double(correct) / double(count);
}

// ---------------------------------------------------------------------------
// multilayer perceptron

// Fully-connected ReLU classifier. Master weights stay full precision; the
// quantizer is applied on the fly inside each forward pass.
template <class T = float>
struct MlpModelT {
  std::vector<int> layer_dims;       // e.g. {2, 32, 32, 2}
  std::vector<TensorT<T>> weights;   // [in x out]
  std::vector<TensorT<T>> biases;    // [1 x out], never quantized

  int num_layers() const { return int(weights.size()); }

  static MlpModelT init(const std::vector<int>& dims, SplitMix64& rng) {
    if (dims.size() < 2) throw std::invalid_argument("mlp: need input and output dims");
    MlpModelT m;
    m.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const int fan_in = dims[l], fan_out = dims[l + 1];
      if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("mlp: dims must be positive");
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      TensorT<T> w({fan_in, fan_out});
      for (auto& v : w.data) v = T(rng.uniform(-limit, limit));
      m.weights.push_back(std::move(w));
      m.biases.push_back(TensorT<T>({1, fan_out}));
    }
    return m;
  }

  static std::string layer_id(int l) { return "fc" + std::to_string(l); }

  void register_layers(CostLedger& ledger) const {
    for (int l = 0; l < num_layers(); ++l) ledger.add_layer(layer_id(l));
  }

  // forward GEMM FLOPs per layer for a batch of `rows` examples (2 per MAC)
  std::vector<double> layer_flops(int rows) const {
    std::vector<double> f;
    for (int l = 0; l < num_layers(); ++l)
      f.push_back(2.0 * rows * layer_dims[std::size_t(l)] * layer_dims[std::size_t(l) + 1]);
    return f;
  }
};

using MlpModel = MlpModelT<float>;

// forward state kept for one backward pass
template <class T>
struct MlpForward {
  int q_t = kFullPrecisionBits;
  std::vector<TensorT<T>> act_q;    // quantized activation entering layer l
  std::vector<TensorT<T>> w_q;      // quantized weights of layer l
  std::vector<TensorT<T>> pre;      // pre-activations z_l
  TensorT<T> logits;
};

template <class T>
MlpForward<T> mlp_forward(const MlpModelT<T>& model, const TensorT<T>& batch, int q_t,
                          CostLedger* ledger = nullptr) {
  if (batch.cols() != model.layer_dims.front())
    throw std::invalid_argument("mlp_forward: batch width does not match input dim");
  MlpForward<T> f;
  f.q_t = q_t;
  TensorT<T> a = batch;
  for (int l = 0; l < model.num_layers(); ++l) {
    TensorT<T> aq = quantize(a, q_t);
    TensorT<T> wq = quantize(model.weights[std::size_t(l)], q_t);
    TensorT<T> z = matmul(aq, wq);
    add_row_vector(z, model.biases[std::size_t(l)]);
    if (ledger)
      ledger->charge_forward(MlpModelT<T>::layer_id(l),
                             2.0 * a.rows() * aq.cols() * wq.cols(), q_t);
    a = (l + 1 == model.num_layers()) ? z : relu(z);
    f.act_q.push_back(std::move(aq));
    f.w_q.push_back(std::move(wq));
    f.pre.push_back(std::move(z));
  }
  f.logits = f.pre.back();
  return f;
}

template <class T>
struct MlpGrads {
  std::vector<TensorT<T>> dweights;
  std::vector<TensorT<T>> dbiases;
};

// Reverse pass. Flowing gradients and parameter gradients are quantized at
// q_max (bias gradients excepted); the straight-through rule carries the
// weight gradient onto the master weights unchanged.
template <class T>
MlpGrads<T> mlp_backward(const MlpModelT<T>& model, const MlpForward<T>& f,
                         const TensorT<T>& dlogits, int q_max, CostLedger* ledger = nullptr) {
  const int L = model.num_layers();
  MlpGrads<T> g;
  g.dweights.resize(std::size_t(L));
  g.dbiases.resize(std::size_t(L));
  TensorT<T> dz = quantize(dlogits, q_max);
  for (int l = L - 1; l >= 0; --l) {
    TensorT<T> dw = matmul_tn(f.act_q[std::size_t(l)], dz);
    g.dweights[std::size_t(l)] =
        quantize_ste_backward(quantize(dw, q_max), model.weights[std::size_t(l)], f.q_t);
    g.dbiases[std::size_t(l)] = column_sums(dz);
    if (ledger)
      ledger->charge_backward(MlpModelT<T>::layer_id(l),
                              2.0 * dz.rows() * f.act_q[std::size_t(l)].cols() * dz.cols(),
                              q_max, f.q_t);
    if (l > 0) {
      TensorT<T> da = matmul_nt(dz, f.w_q[std::size_t(l)]);
      dz = quantize(relu_backward(da, f.pre[std::size_t(l) - 1]), q_max);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// graph convolutional network

// Whether the neighbor-aggregation product runs quantized (QAgg) or always
// at full precision (FpAgg), independent of the rest of the network.
enum class AggMode { FpAgg, QAgg };

inline AggMode parse_agg_mode(const std::string& name) {
  if (name == "q" || name == "qagg") return AggMode::QAgg;
  if (name == "fp" || name == "fpagg") return AggMode::FpAgg;
  throw std::invalid_argument("unknown aggregation mode: " + name);
}

// L-layer GCN: H_{l+1} = relu(Ā H_l Θ_l), logits from the last layer
// without the nonlinearity. No bias terms.
template <class T = float>
struct GcnModelT {
  std::vector<int> dims;  // {d, hidden..., classes}
  std::vector<TensorT<T>> thetas;
  AggMode agg_mode = AggMode::FpAgg;

  int num_layers() const { return int(thetas.size()); }

  static GcnModelT init(const std::vector<int>& dims, AggMode agg, SplitMix64& rng) {
    if (dims.size() < 2) throw std::invalid_argument("gcn: need input and output dims");
    GcnModelT m;
    m.dims = dims;
    m.agg_mode = agg;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const int fan_in = dims[l], fan_out = dims[l + 1];
      if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("gcn: dims must be positive");
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      TensorT<T> w({fan_in, fan_out});
      for (auto& v : w.data) v = T(rng.uniform(-limit, limit));
      m.thetas.push_back(std::move(w));
    }
    return m;
  }

  static std::string feat_layer_id(int l) { return "gcn" + std::to_string(l) + ".feat"; }
  static std::string agg_layer_id(int l) { return "gcn" + std::to_string(l) + ".agg"; }

  void register_layers(CostLedger& ledger) const {
    for (int l = 0; l < num_layers(); ++l) {
      ledger.add_layer(feat_layer_id(l));
      ledger.add_layer(agg_layer_id(l));
    }
  }

  // (feature GEMM, aggregation GEMM) FLOPs per layer for n nodes
  std::vector<std::pair<double, double>> layer_flops(int n) const {
    std::vector<std::pair<double, double>> f;
    for (int l = 0; l < num_layers(); ++l)
      f.push_back({2.0 * n * dims[std::size_t(l)] * dims[std::size_t(l) + 1],
                   2.0 * n * double(n) * dims[std::size_t(l) + 1]});
    return f;
  }
};

using GcnModel = GcnModelT<float>;

template <class T>
struct GcnForward {
  int q_t = kFullPrecisionBits;
  TensorT<T> adj_op;                 // the adjacency operand actually multiplied
  std::vector<TensorT<T>> h_q;       // quantized node features entering layer l
  std::vector<TensorT<T>> theta_q;
  std::vector<TensorT<T>> pre;       // pre-activations Ā (H Θ)
  TensorT<T> logits;
};

template <class T>
GcnForward<T> gcn_forward(const GcnModelT<T>& model, const GraphDataT<T>& graph, int q_t,
                          CostLedger* ledger = nullptr) {
  if (graph.features.cols() != model.dims.front())
    throw std::invalid_argument("gcn_forward: feature dim does not match model");
  if (graph.norm_adj.rows() != graph.node_count || graph.norm_adj.cols() != graph.node_count)
    throw std::invalid_argument("gcn_forward: adjacency shape mismatch");

  const bool quantized_agg = model.agg_mode == AggMode::QAgg;
  GcnForward<T> f;
  f.q_t = q_t;
  f.adj_op = quantized_agg ? quantize(graph.norm_adj, q_t) : graph.norm_adj;

  const int n = graph.node_count;
  TensorT<T> h = graph.features;
  for (int l = 0; l < model.num_layers(); ++l) {
    TensorT<T> hq = quantize(h, q_t);
    TensorT<T> tq = quantize(model.thetas[std::size_t(l)], q_t);
    TensorT<T> z = matmul(hq, tq);
    if (ledger)
      ledger->charge_forward(GcnModelT<T>::feat_layer_id(l), 2.0 * n * hq.cols() * tq.cols(), q_t);
    TensorT<T> p = quantized_agg ? matmul(f.adj_op, quantize(z, q_t)) : matmul(f.adj_op, z);
    if (ledger)
      ledger->charge_forward(GcnModelT<T>::agg_layer_id(l), 2.0 * n * double(n) * z.cols(),
                             quantized_agg ? q_t : kFullPrecisionBits);
    h = (l + 1 == model.num_layers()) ? p : relu(p);
    f.h_q.push_back(std::move(hq));
    f.theta_q.push_back(std::move(tq));
    f.pre.push_back(std::move(p));
  }
  f.logits = f.pre.back();
  return f;
}

template <class T>
std::vector<TensorT<T>> gcn_backward(const GcnModelT<T>& model, const GraphDataT<T>& graph,
                                     const GcnForward<T>& f, const TensorT<T>& dlogits, int q_max,
                                     CostLedger* ledger = nullptr) {
  const int L = model.num_layers();
  const int n = graph.node_count;
  const bool quantized_agg = model.agg_mode == AggMode::QAgg;
  std::vector<TensorT<T>> dthetas(static_cast<std::size_t>(L));
  TensorT<T> dp = quantize(dlogits, q_max);
  for (int l = L - 1; l >= 0; --l) {
    TensorT<T> dz = quantize(matmul_tn(f.adj_op, dp), q_max);
    if (ledger) {
      if (quantized_agg)
        ledger->charge_backward_gemm(GcnModelT<T>::agg_layer_id(l), 2.0 * n * double(n) * dp.cols(),
                                     q_max, f.q_t);
      else
        ledger->charge_backward_gemm(GcnModelT<T>::agg_layer_id(l), 2.0 * n * double(n) * dp.cols(),
                                     kFullPrecisionBits, kFullPrecisionBits);
    }
    TensorT<T> dth = matmul_tn(f.h_q[std::size_t(l)], dz);
    dthetas[std::size_t(l)] =
        quantize_ste_backward(quantize(dth, q_max), model.thetas[std::size_t(l)], f.q_t);
    if (ledger)
      ledger->charge_backward(GcnModelT<T>::feat_layer_id(l),
                              2.0 * n * f.h_q[std::size_t(l)].cols() * dz.cols(), q_max, f.q_t);
    if (l > 0) {
      TensorT<T> dh = matmul_nt(dz, f.theta_q[std::size_t(l)]);
      dp = quantize(relu_backward(dh, f.pre[std::size_t(l) - 1]), q_max);
    }
  }
  return dthetas;
}

// ---------------------------------------------------------------------------
// optimizers

enum class OptKind { SgdMomentum, Adam };
enum class LrDecay { None, StepHalves, CosineAnneal };

inline OptKind parse_opt_kind(const std::string& name) {
  if (name == "sgdm") return OptKind::SgdMomentum;
  if (name == "adam") return OptKind::Adam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

inline LrDecay parse_lr_decay(const std::string& name) {
  if (name == "none") return LrDecay::None;
  if (name == "step") return LrDecay::StepHalves;
  if (name == "cosine") return LrDecay::CosineAnneal;
  throw std::invalid_argument("unknown decay: " + name);
}

// SGDM (momentum 0.9) or Adam, with an optional learning-rate decay over
// the training horizon: StepHalves divides by 10 after 50% and 75% of
// total steps; CosineAnneal interpolates from lr to lr/10.
template <class T = float>
struct OptimizerT {
  OptKind kind = OptKind::SgdMomentum;
  double learning_rate = 0.1;
  LrDecay decay = LrDecay::None;
  double weight_decay = 0.0;
  double momentum = 0.9;

  double lr_at(long t, long total_steps) const {
    switch (decay) {
      case LrDecay::None:
        return learning_rate;
      case LrDecay::StepHalves:
        if (4 * t >= 3 * total_steps) return learning_rate / 100.0;
        if (2 * t >= total_steps) return learning_rate / 10.0;
        return learning_rate;
      case LrDecay::CosineAnneal: {
        if (total_steps <= 1) return learning_rate;
        const double lo = learning_rate / 10.0;
        const double frac = double(t) / double(total_steps - 1);
        return lo + (learning_rate - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
      }
    }
    return learning_rate;
  }

  void step(std::vector<TensorT<T>*> params, const std::vector<const TensorT<T>*>& grads, long t,
            long total_steps) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: arity mismatch");
    if (t < 0 || t >= total_steps) throw std::invalid_argument("optimizer: step out of range");
    if (state_.empty()) {
      for (const auto* p : params) {
        state_.push_back(TensorT<T>(p->shape));
        if (kind == OptKind::Adam) state2_.push_back(TensorT<T>(p->shape));
      }
    }
    const double lr = lr_at(t, total_steps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      TensorT<T>& w = *params[i];
      const TensorT<T>& g = *grads[i];
      if (!same_shape(w, g)) throw std::invalid_argument("optimizer: gradient shape mismatch");
      if (!all_finite(g)) throw std::runtime_error("optimizer: non-finite gradient");
      if (kind == OptKind::SgdMomentum) {
        TensorT<T>& v = state_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double vel = momentum * double(v.data[k]) + double(g.data[k]);
          v.data[k] = T(vel);
          w.data[k] = T(double(w.data[k]) - lr * (vel + weight_decay * double(w.data[k])));
        }
      } else {
        TensorT<T>& m1 = state_[i];
        TensorT<T>& m2 = state2_[i];
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double tt = double(adam_steps_ + 1);
        const double c1 = 1.0 - std::pow(b1, tt), c2 = 1.0 - std::pow(b2, tt);
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double gk = double(g.data[k]) + weight_decay * double(w.data[k]);
          const double m = b1 * double(m1.data[k]) + (1.0 - b1) * gk;
          const double v = b2 * double(m2.data[k]) + (1.0 - b2) * gk * gk;
          m1.data[k] = T(m);
          m2.data[k] = T(v);
          w.data[k] = T(double(w.data[k]) - lr * (m / c1) / (std::sqrt(v / c2) + eps));
        }
      }
    }
    if (kind == OptKind::Adam) ++adam_steps_;
  }

 private:
  std::vector<TensorT<T>> state_;   // velocity / first moment
  std::vector<TensorT<T>> state2_;  // second moment (Adam)
  long adam_steps_ = 0;
};

using Optimizer = OptimizerT<float>;

}  // namespace ccpt
