#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccpt/cost.hpp"
#include "ccpt/data.hpp"
#include "ccpt/io.hpp"
#include "ccpt/model.hpp"
#include "ccpt/quantize.hpp"
#include "ccpt/schedule.hpp"

namespace ccpt {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// run configuration

struct StaticPrecision {
  int bits = 8;
};

// A contiguous span of steps trained at a reduced forward precision while
// the rest of the run stays at outside_bits.
struct DeficitWindow {
  long start = 0;
  long end = 0;  // exclusive
  int deficit_bits = 2;
  int outside_bits = 8;
};

struct MlpSpec {
  std::vector<int> hidden{32, 32};
};

struct GcnSpec {
  std::vector<int> hidden{16};
  AggMode agg = AggMode::FpAgg;
};

struct TwoSpiralsSpec {
  int points_per_class = 100;
  double noise_std = 0.1;
};

struct SbmSpec {
  int nodes_per_block = 20;
  int blocks = 2;
  double p_in = 0.9;
  double p_out = 0.05;
  int feature_dim = 8;
};

struct IdxSpec {
  std::string images;
  std::string labels;
};

struct EdgeListSpec {
  std::string path;
};

struct OptimizerSpec {
  OptKind kind = OptKind::SgdMomentum;
  double learning_rate = 0.1;
  LrDecay decay = LrDecay::StepHalves;
  double weight_decay = 0.0;
  double momentum = 0.9;
};

struct RunConfig {
  std::variant<MlpSpec, GcnSpec> model;
  std::variant<TwoSpiralsSpec, SbmSpec, IdxSpec, EdgeListSpec> data;
  OptimizerSpec optimizer;
  std::variant<ScheduleSpec, StaticPrecision> schedule;
  long steps = 1000;
  std::optional<DeficitWindow> deficit;
  std::uint64_t seed = 1;
  int trials = 3;
};

// fixed backward bit-width of a run: the schedule's q_max, or the static level
inline int backward_bits(const RunConfig& cfg) {
  if (const auto* s = std::get_if<ScheduleSpec>(&cfg.schedule)) return s->q_max;
  return std::get<StaticPrecision>(cfg.schedule).bits;
}

// Per-step forward bit-widths: the schedule (resized to the run length),
// overridden inside the deficit window when one is present.
inline std::vector<int> forward_bits_trace(const RunConfig& cfg) {
  if (cfg.steps == 0) {
    if (cfg.deficit) throw ConfigError("deficit window does not fit an empty run");
    return {};
  }
  QuantPolicy policy;
  if (const auto* s = std::get_if<ScheduleSpec>(&cfg.schedule)) {
    ScheduleSpec spec = *s;
    spec.total_steps = cfg.steps;
    policy = QuantPolicy::from_schedule(spec);
  } else {
    policy = QuantPolicy::constant(std::get<StaticPrecision>(cfg.schedule).bits);
  }
  std::vector<int> bits(std::size_t(cfg.steps));
  for (long t = 0; t < cfg.steps; ++t) bits[std::size_t(t)] = policy.forward_bits(t);
  if (cfg.deficit) {
    const auto& w = *cfg.deficit;
    if (w.start < 0 || w.start >= w.end || w.end > cfg.steps)
      throw ConfigError("deficit window must satisfy 0 <= start < end <= steps");
    if (w.deficit_bits > w.outside_bits)
      throw ConfigError("deficit bits must not exceed outside bits");
    for (long t = w.start; t < w.end; ++t) bits[std::size_t(t)] = w.deficit_bits;
  }
  return bits;
}

// ---------------------------------------------------------------------------
// configuration <-> JSON (strict: unknown keys are rejected by name)

namespace detail {

inline void expect_keys(const json& j, const std::string& where,
                        std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("unknown key: " + where + "." + key);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for key: ") + key);
  }
}

template <class T>
T get_req(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing key: " + where + "." + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for key: " + where + "." + key);
  }
}

}  // namespace detail

inline json to_json(const RunConfig& cfg) {
  json j;
  if (const auto* m = std::get_if<MlpSpec>(&cfg.model)) {
    j["model"] = {{"type", "mlp"}, {"hidden", m->hidden}};
  } else {
    const auto& g = std::get<GcnSpec>(cfg.model);
    j["model"] = {{"type", "gcn"},
                  {"hidden", g.hidden},
                  {"agg", g.agg == AggMode::QAgg ? "q" : "fp"}};
  }
  if (const auto* s = std::get_if<TwoSpiralsSpec>(&cfg.data)) {
    j["data"] = {{"type", "two_spirals"},
                 {"points_per_class", s->points_per_class},
                 {"noise_std", s->noise_std}};
  } else if (const auto* s2 = std::get_if<SbmSpec>(&cfg.data)) {
    j["data"] = {{"type", "sbm"},          {"nodes_per_block", s2->nodes_per_block},
                 {"blocks", s2->blocks},   {"p_in", s2->p_in},
                 {"p_out", s2->p_out},     {"feature_dim", s2->feature_dim}};
  } else if (const auto* s3 = std::get_if<IdxSpec>(&cfg.data)) {
    j["data"] = {{"type", "idx"}, {"images", s3->images}, {"labels", s3->labels}};
  } else {
    j["data"] = {{"type", "edge_list"}, {"path", std::get<EdgeListSpec>(cfg.data).path}};
  }
  const auto& o = cfg.optimizer;
  j["optimizer"] = {
      {"kind", o.kind == OptKind::Adam ? "adam" : "sgdm"},
      {"lr", o.learning_rate},
      {"decay", o.decay == LrDecay::None          ? "none"
                : o.decay == LrDecay::StepHalves ? "step"
                                                  : "cosine"},
      {"weight_decay", o.weight_decay},
      {"momentum", o.momentum}};
  if (const auto* s = std::get_if<ScheduleSpec>(&cfg.schedule)) {
    std::string profile;
    switch (s->profile.kind) {
      case ProfileKind::Linear: profile = "linear"; break;
      case ProfileKind::Cosine: profile = "cosine"; break;
      case ProfileKind::Exponential: profile = "exponential"; break;
      case ProfileKind::Rex: profile = "rex"; break;
    }
    j["schedule"] = {{"type", "cpt"},
                     {"profile", profile},
                     {"steepness", s->profile.steepness},
                     {"variant", s->variant == Variant::Repeated ? "repeated"
                                 : s->variant == Variant::TriangularVertical
                                     ? "triangular-vertical"
                                     : "triangular-horizontal"},
                     {"n_cycles", s->n_cycles},
                     {"q_min", s->q_min},
                     {"q_max", s->q_max}};
  } else {
    j["schedule"] = {{"type", "static"}, {"bits", std::get<StaticPrecision>(cfg.schedule).bits}};
  }
  j["steps"] = cfg.steps;
  if (cfg.deficit) {
    j["deficit"] = {{"start", cfg.deficit->start},
                    {"end", cfg.deficit->end},
                    {"bits", cfg.deficit->deficit_bits}};
  }
  j["seed"] = cfg.seed;
  j["trials"] = cfg.trials;
  return j;
}

inline RunConfig config_from_json(const json& j) {
  detail::expect_keys(j, "config",
                      {"model", "data", "optimizer", "schedule", "steps", "deficit", "seed",
                       "trials", "range_candidates", "range_tau", "range_probe_fraction",
                       "deficit_r_fractions", "deficit_bits", "probe_window_fraction",
                       "probe_offset_fractions", "probe_bits"});
  RunConfig cfg;

  const json jm = detail::get_req<json>(j, "config", "model");
  const auto mtype = detail::get_req<std::string>(jm, "model", "type");
  if (mtype == "mlp") {
    detail::expect_keys(jm, "model", {"type", "hidden"});
    MlpSpec m;
    m.hidden = detail::get_or<std::vector<int>>(jm, "hidden", m.hidden);
    cfg.model = m;
  } else if (mtype == "gcn") {
    detail::expect_keys(jm, "model", {"type", "hidden", "agg"});
    GcnSpec g;
    g.hidden = detail::get_or<std::vector<int>>(jm, "hidden", g.hidden);
    g.agg = parse_agg_mode(detail::get_or<std::string>(jm, "agg", "fp"));
    cfg.model = g;
  } else {
    throw ConfigError("unknown model.type: " + mtype);
  }

  const json jd = detail::get_req<json>(j, "config", "data");
  const auto dtype = detail::get_req<std::string>(jd, "data", "type");
  if (dtype == "two_spirals") {
    detail::expect_keys(jd, "data", {"type", "points_per_class", "noise_std"});
    TwoSpiralsSpec s;
    s.points_per_class = detail::get_or(jd, "points_per_class", s.points_per_class);
    s.noise_std = detail::get_or(jd, "noise_std", s.noise_std);
    cfg.data = s;
  } else if (dtype == "sbm") {
    detail::expect_keys(jd, "data",
                        {"type", "nodes_per_block", "blocks", "p_in", "p_out", "feature_dim"});
    SbmSpec s;
    s.nodes_per_block = detail::get_or(jd, "nodes_per_block", s.nodes_per_block);
    s.blocks = detail::get_or(jd, "blocks", s.blocks);
    s.p_in = detail::get_or(jd, "p_in", s.p_in);
    s.p_out = detail::get_or(jd, "p_out", s.p_out);
    s.feature_dim = detail::get_or(jd, "feature_dim", s.feature_dim);
    cfg.data = s;
  } else if (dtype == "idx") {
    detail::expect_keys(jd, "data", {"type", "images", "labels"});
    IdxSpec s;
    s.images = detail::get_req<std::string>(jd, "data", "images");
    s.labels = detail::get_or<std::string>(jd, "labels", "");
    cfg.data = s;
  } else if (dtype == "edge_list") {
    detail::expect_keys(jd, "data", {"type", "path"});
    EdgeListSpec s;
    s.path = detail::get_req<std::string>(jd, "data", "path");
    cfg.data = s;
  } else {
    throw ConfigError("unknown data.type: " + dtype);
  }

  if (j.contains("optimizer")) {
    const json jo = j.at("optimizer");
    detail::expect_keys(jo, "optimizer", {"kind", "lr", "decay", "weight_decay", "momentum"});
    try {
      cfg.optimizer.kind = parse_opt_kind(detail::get_or<std::string>(jo, "kind", "sgdm"));
      cfg.optimizer.decay = parse_lr_decay(detail::get_or<std::string>(jo, "decay", "step"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("optimizer: ") + e.what());
    }
    cfg.optimizer.learning_rate = detail::get_or(jo, "lr", cfg.optimizer.learning_rate);
    cfg.optimizer.weight_decay = detail::get_or(jo, "weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.momentum = detail::get_or(jo, "momentum", cfg.optimizer.momentum);
  }

  const json js = detail::get_req<json>(j, "config", "schedule");
  const auto stype = detail::get_req<std::string>(js, "schedule", "type");
  if (stype == "cpt") {
    detail::expect_keys(js, "schedule",
                        {"type", "profile", "steepness", "variant", "n_cycles", "q_min", "q_max"});
    ScheduleSpec s;
    try {
      s.profile.kind = parse_profile_kind(detail::get_or<std::string>(js, "profile", "cosine"));
      s.variant = parse_variant(detail::get_or<std::string>(js, "variant", "repeated"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
    s.profile.steepness = detail::get_or(js, "steepness", 5.0);
    s.n_cycles = detail::get_or(js, "n_cycles", 8);
    s.q_min = detail::get_or(js, "q_min", 3);
    s.q_max = detail::get_or(js, "q_max", 8);
    cfg.schedule = s;
  } else if (stype == "static") {
    detail::expect_keys(js, "schedule", {"type", "bits"});
    StaticPrecision s;
    s.bits = detail::get_or(js, "bits", 8);
    cfg.schedule = s;
  } else {
    throw ConfigError("unknown schedule.type: " + stype);
  }

  cfg.steps = detail::get_req<long>(j, "config", "steps");
  if (cfg.steps < 0) throw ConfigError("steps must be nonnegative");
  if (j.contains("deficit")) {
    const json jw = j.at("deficit");
    detail::expect_keys(jw, "deficit", {"start", "end", "bits"});
    DeficitWindow w;
    w.start = detail::get_req<long>(jw, "deficit", "start");
    w.end = detail::get_req<long>(jw, "deficit", "end");
    w.deficit_bits = detail::get_req<int>(jw, "deficit", "bits");
    w.outside_bits = backward_bits(cfg);
    cfg.deficit = w;
  }
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
  cfg.trials = detail::get_or(j, "trials", 3);
  if (cfg.trials < 1) throw ConfigError("trials must be positive");

  // validate the schedule against the run length now that both are known
  if (cfg.steps > 0) (void)forward_bits_trace(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// reports

struct RunReport {
  json config_echo;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::vector<double> train_loss;
  std::vector<double> train_acc;
  std::vector<double> val_acc;
  double final_test_metric = 0.0;
  CostLedger ledger;
  std::string trace_digest;
  double wall_time_s = 0.0;
  std::vector<Tensor> final_params;  // for checkpointing; not serialized
};

inline json ledger_to_json(const CostLedger& ledger) {
  json per_layer = json::object();
  for (const auto& [id, c] : ledger.per_layer())
    per_layer[id] = {{"forward_gbitops", c.forward / kGigaBitOps},
                     {"backward_gbitops", c.backward / kGigaBitOps}};
  return {{"forward_gbitops", ledger.forward_gbitops()},
          {"backward_gbitops", ledger.backward_gbitops()},
          {"per_layer", per_layer}};
}

inline json report_to_json(const RunReport& r) {
  return {{"config", r.config_echo},
          {"seed", r.seed},
          {"diverged", r.diverged},
          {"metrics",
           {{"train_loss", r.train_loss}, {"train_acc", r.train_acc}, {"val_acc", r.val_acc}}},
          {"final_test_metric", r.final_test_metric},
          {"total_gbitops", r.ledger.total_gbitops()},
          {"ledger", ledger_to_json(r.ledger)},
          {"trace_digest", r.trace_digest},
          {"wall_time_s", r.wall_time_s}};
}

// ---------------------------------------------------------------------------
// single training run

namespace detail {

// deterministic sub-seeds for the independent streams of one run
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 rng(seed ^ (0x5851f42d4c957f2dULL * (stream + 1)));
  return rng.next();
}

template <class Model>
struct TrainContext;

// MLP runs train full batch on the rows tagged Train; evaluation happens at
// full precision on the master weights.
template <>
struct TrainContext<MlpModel> {
  MlpModel model;
  Optimizer opt;
  Tensor train_x, val_x, test_x;
  std::vector<int> train_y, val_y, test_y;

  TrainContext(const RunConfig& cfg, const LabeledDataset& data) {
    const auto tr = data.indices_of(Split::Train);
    const auto va = data.indices_of(Split::Val);
    const auto te = data.indices_of(Split::Test);
    train_x = gather_rows(data.features, tr);
    val_x = gather_rows(data.features, va);
    test_x = gather_rows(data.features, te);
    for (int i : tr) train_y.push_back(data.labels[std::size_t(i)]);
    for (int i : va) val_y.push_back(data.labels[std::size_t(i)]);
    for (int i : te) test_y.push_back(data.labels[std::size_t(i)]);

    std::vector<int> dims{data.features.cols()};
    for (int h : std::get<MlpSpec>(cfg.model).hidden) dims.push_back(h);
    dims.push_back(data.class_count);
    SplitMix64 init_rng(derive_seed(cfg.seed, 1));
    model = MlpModel::init(dims, init_rng);

    opt.kind = cfg.optimizer.kind;
    opt.learning_rate = cfg.optimizer.learning_rate;
    opt.decay = cfg.optimizer.decay;
    opt.weight_decay = cfg.optimizer.weight_decay;
    opt.momentum = cfg.optimizer.momentum;
  }

  void register_layers(CostLedger& ledger) const { model.register_layers(ledger); }

  // returns (train loss, train accuracy) for this step
  std::pair<double, double> train_step(int q_t, int q_max, long t, long total, CostLedger& ledger) {
    auto fwd = mlp_forward(model, train_x, q_t, &ledger);
    auto loss = softmax_cross_entropy(fwd.logits, train_y);
    if (!std::isfinite(loss.loss)) return {loss.loss, loss.accuracy};
    auto grads = mlp_backward(model, fwd, loss.dlogits, q_max, &ledger);
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gptrs;
    for (int l = 0; l < model.num_layers(); ++l) {
      params.push_back(&model.weights[std::size_t(l)]);
      gptrs.push_back(&grads.dweights[std::size_t(l)]);
      params.push_back(&model.biases[std::size_t(l)]);
      gptrs.push_back(&grads.dbiases[std::size_t(l)]);
    }
    opt.step(params, gptrs, t, total);
    return {loss.loss, loss.accuracy};
  }

  double eval_accuracy(Split which) {
    const Tensor& x = which == Split::Val ? val_x : test_x;
    const auto& y = which == Split::Val ? val_y : test_y;
    auto fwd = mlp_forward(model, x, kFullPrecisionBits, nullptr);
    return accuracy(fwd.logits, y);
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p;
    for (int l = 0; l < model.num_layers(); ++l) {
      p.push_back(model.weights[std::size_t(l)]);
      p.push_back(model.biases[std::size_t(l)]);
    }
    return p;
  }
};

template <>
struct TrainContext<GcnModel> {
  GcnModel model;
  Optimizer opt;
  GraphData graph;
  std::vector<char> train_mask, val_mask, test_mask;

  TrainContext(const RunConfig& cfg, GraphData g) : graph(std::move(g)) {
    train_mask.resize(std::size_t(graph.node_count));
    val_mask.resize(std::size_t(graph.node_count));
    test_mask.resize(std::size_t(graph.node_count));
    for (int i = 0; i < graph.node_count; ++i) {
      train_mask[std::size_t(i)] = graph.splits[std::size_t(i)] == Split::Train;
      val_mask[std::size_t(i)] = graph.splits[std::size_t(i)] == Split::Val;
      test_mask[std::size_t(i)] = graph.splits[std::size_t(i)] == Split::Test;
    }
    std::vector<int> dims{graph.features.cols()};
    for (int h : std::get<GcnSpec>(cfg.model).hidden) dims.push_back(h);
    dims.push_back(graph.class_count);
    SplitMix64 init_rng(derive_seed(cfg.seed, 1));
    model = GcnModel::init(dims, std::get<GcnSpec>(cfg.model).agg, init_rng);

    opt.kind = cfg.optimizer.kind;
    opt.learning_rate = cfg.optimizer.learning_rate;
    opt.decay = cfg.optimizer.decay;
    opt.weight_decay = cfg.optimizer.weight_decay;
    opt.momentum = cfg.optimizer.momentum;
  }

  void register_layers(CostLedger& ledger) const { model.register_layers(ledger); }

  std::pair<double, double> train_step(int q_t, int q_max, long t, long total, CostLedger& ledger) {
    auto fwd = gcn_forward(model, graph, q_t, &ledger);
    auto loss = softmax_cross_entropy(fwd.logits, graph.labels, train_mask);
    if (!std::isfinite(loss.loss)) return {loss.loss, loss.accuracy};
    auto dthetas = gcn_backward(model, graph, fwd, loss.dlogits, q_max, &ledger);
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gptrs;
    for (int l = 0; l < model.num_layers(); ++l) {
      params.push_back(&model.thetas[std::size_t(l)]);
      gptrs.push_back(&dthetas[std::size_t(l)]);
    }
    opt.step(params, gptrs, t, total);
    return {loss.loss, loss.accuracy};
  }

  double eval_accuracy(Split which) {
    auto fwd = gcn_forward(model, graph, kFullPrecisionBits, nullptr);
    return accuracy(fwd.logits, graph.labels, which == Split::Val ? val_mask : test_mask);
  }

  std::vector<Tensor> parameters() const { return model.thetas; }
};

template <class Ctx>
RunReport run_core(const RunConfig& cfg, Ctx& ctx, const std::vector<int>& bits, int bwd_bits) {
  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.config_echo = to_json(cfg);
  report.seed = cfg.seed;
  report.trace_digest = fnv1a_digest(bits);
  ctx.register_layers(report.ledger);

  const long total = long(bits.size());
  for (long t = 0; t < total; ++t) {
    double loss = 0.0, train_acc = 0.0;
    try {
      std::tie(loss, train_acc) = ctx.train_step(bits[std::size_t(t)], bwd_bits, t, total,
                                                 report.ledger);
    } catch (const std::runtime_error&) {
      report.diverged = true;  // non-finite tensors reached the quantizer/optimizer
      break;
    }
    if (!std::isfinite(loss)) {
      report.diverged = true;
      break;
    }
    report.train_loss.push_back(loss);
    report.train_acc.push_back(train_acc);
    report.val_acc.push_back(ctx.eval_accuracy(Split::Val));
  }
  report.final_test_metric = report.diverged ? 0.0 : ctx.eval_accuracy(Split::Test);
  report.final_params = ctx.parameters();
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace detail

// Runs one experiment with an explicit per-step forward bit-width sequence.
// run() is the schedule-driven entry on top of this.
inline RunReport run_with_bits(const RunConfig& cfg, const std::vector<int>& bits, int bwd_bits) {
  if (std::holds_alternative<MlpSpec>(cfg.model)) {
    LabeledDataset data;
    if (const auto* s = std::get_if<TwoSpiralsSpec>(&cfg.data)) {
      data = two_spirals(s->points_per_class, s->noise_std, detail::derive_seed(cfg.seed, 0));
    } else if (const auto* s2 = std::get_if<IdxSpec>(&cfg.data)) {
      data = load_idx(s2->images, s2->labels);
      SplitMix64 rng(detail::derive_seed(cfg.seed, 0));
      data.splits = assign_splits(data.rows(), rng);
    } else {
      throw ConfigError("mlp model requires a row dataset (two_spirals or idx)");
    }
    detail::TrainContext<MlpModel> ctx(cfg, data);
    return detail::run_core(cfg, ctx, bits, bwd_bits);
  }
  GraphData graph;
  if (const auto* s = std::get_if<SbmSpec>(&cfg.data)) {
    graph = sbm_graph(s->nodes_per_block, s->blocks, s->p_in, s->p_out, s->feature_dim,
                      detail::derive_seed(cfg.seed, 0));
  } else if (const auto* s2 = std::get_if<EdgeListSpec>(&cfg.data)) {
    graph = load_edge_list(s2->path);
    SplitMix64 rng(detail::derive_seed(cfg.seed, 0));
    graph.splits = assign_splits(graph.node_count, rng);
  } else {
    throw ConfigError("gcn model requires a graph dataset (sbm or edge_list)");
  }
  detail::TrainContext<GcnModel> ctx(cfg, std::move(graph));
  return detail::run_core(cfg, ctx, bits, bwd_bits);
}

inline RunReport run(const RunConfig& cfg) {
  return run_with_bits(cfg, forward_bits_trace(cfg), backward_bits(cfg));
}

// ---------------------------------------------------------------------------
// trial concurrency (independent runs only; results land in fixed slots)

inline int thread_cap() {
  if (const char* env = std::getenv("CCPT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

inline void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(std::size_t(thread_cap()), jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[std::size_t(w)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// protocols

// Probes each candidate precision with a short constant-precision run and
// returns the smallest one whose training-loss drop reaches tau times the
// drop achieved at q_max; q_max if none qualifies.
inline int precision_range_test(const RunConfig& base, const std::vector<int>& q_candidates,
                                double tau = 0.5, double probe_fraction = 0.1) {
  if (q_candidates.empty()) throw std::invalid_argument("range test: empty candidate list");
  const int q_max = backward_bits(base);
  for (std::size_t i = 0; i < q_candidates.size(); ++i) {
    if (q_candidates[i] < 2 || q_candidates[i] > q_max)
      throw std::invalid_argument("range test: candidates must lie in [2, q_max]");
    if (i > 0 && q_candidates[i] <= q_candidates[i - 1])
      throw std::invalid_argument("range test: candidates must be ascending");
  }
  const long probe_steps = std::max<long>(1, std::lround(probe_fraction * double(base.steps)));

  auto probe_drop = [&](int q) {
    RunConfig probe = base;
    probe.steps = probe_steps;
    probe.deficit.reset();
    const std::vector<int> bits(std::size_t(probe_steps), q);
    const RunReport r = run_with_bits(probe, bits, q_max);
    if (r.diverged || r.train_loss.empty()) return -1e300;
    return r.train_loss.front() - r.train_loss.back();
  };

  const double ref_drop = probe_drop(q_max);
  if (ref_drop <= 0.0) return q_max;  // reference probe learned nothing; cannot assess
  std::vector<double> drops(q_candidates.size());
  parallel_for(q_candidates.size(),
               [&](std::size_t i) { drops[i] = probe_drop(q_candidates[i]); });
  for (std::size_t i = 0; i < q_candidates.size(); ++i)
    if (drops[i] >= tau * ref_drop) return q_candidates[i];
  return q_max;
}

// Initial-deficit protocol: train deficit_bits for the first R steps, then
// at the normal precision for the full base duration (total R + steps).
// R = 0 reproduces the plain run exactly.
inline std::vector<RunReport> deficit_sweep(const RunConfig& base, const std::vector<long>& R_values,
                                            int deficit_bits) {
  for (long r : R_values)
    if (r < 0) throw std::invalid_argument("deficit sweep: R must be nonnegative");
  std::vector<RunReport> reports(R_values.size());
  parallel_for(R_values.size(), [&](std::size_t i) {
    RunConfig cfg = base;
    const long R = R_values[i];
    cfg.steps = base.steps + R;
    if (R > 0)
      cfg.deficit = DeficitWindow{0, R, deficit_bits, backward_bits(base)};
    else
      cfg.deficit.reset();
    reports[i] = run(cfg);
  });
  return reports;
}

// Probing protocol: slide a fixed-length deficit window across a fixed
// training horizon; one report per offset. A zero-length window reproduces
// the baseline at every offset.
inline std::vector<RunReport> probe_sweep(const RunConfig& base, long window_length,
                                          const std::vector<long>& offsets, int deficit_bits) {
  if (window_length < 0) throw std::invalid_argument("probe sweep: negative window");
  for (long off : offsets)
    if (off < 0 || off + window_length > base.steps)
      throw std::invalid_argument("probe sweep: window must fit in [0, steps]");
  std::vector<RunReport> reports(offsets.size());
  parallel_for(offsets.size(), [&](std::size_t i) {
    RunConfig cfg = base;
    if (window_length > 0)
      cfg.deficit =
          DeficitWindow{offsets[i], offsets[i] + window_length, deficit_bits, backward_bits(base)};
    else
      cfg.deficit.reset();
    reports[i] = run(cfg);
  });
  return reports;
}

// one aggregated row of a schedule sweep
struct SweepRow {
  std::string label;
  double mean_metric = 0.0;
  double sd_metric = 0.0;
  double forward_gbitops = 0.0;
  double backward_gbitops = 0.0;
  double total_gbitops = 0.0;
  int finite_trials = 0;
  std::vector<RunReport> reports;  // one per trial, diverged ones included
};

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / double(xs.size() - 1))};
}

// Runs all ten CPT schedules plus the static q_max baseline, `trials` seeds
// each (seed, seed+1, ...). The base config must carry a CPT schedule; its
// bounds and cycle count are reused across the suite. Diverged trials are
// excluded from means but remain in the row's reports.
inline std::vector<SweepRow> schedule_sweep(const RunConfig& base) {
  const auto* sched = std::get_if<ScheduleSpec>(&base.schedule);
  if (!sched) throw ConfigError("schedule sweep: base config must use a cpt schedule");

  struct Arm {
    std::string label;
    std::variant<ScheduleSpec, StaticPrecision> schedule;
  };
  std::vector<Arm> arms;
  for (const auto& [profile, variant] : schedule_suite()) {
    ScheduleSpec s = *sched;
    s.profile.kind = profile.kind;
    s.variant = variant;
    arms.push_back({schedule_name(s.profile, variant), s});
  }
  arms.push_back({"STATIC", StaticPrecision{sched->q_max}});

  const int trials = base.trials;
  std::vector<RunReport> all(arms.size() * std::size_t(trials));
  parallel_for(all.size(), [&](std::size_t i) {
    const std::size_t arm = i / std::size_t(trials);
    const int trial = int(i % std::size_t(trials));
    RunConfig cfg = base;
    cfg.schedule = arms[arm].schedule;
    cfg.seed = base.seed + std::uint64_t(trial);
    all[i] = run(cfg);
  });

  std::vector<SweepRow> rows;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    SweepRow row;
    row.label = arms[a].label;
    std::vector<double> metrics;
    for (int k = 0; k < trials; ++k) {
      RunReport& r = all[a * std::size_t(trials) + std::size_t(k)];
      if (!r.diverged) {
        metrics.push_back(r.final_test_metric);
        row.forward_gbitops = r.ledger.forward_gbitops();
        row.backward_gbitops = r.ledger.backward_gbitops();
        row.total_gbitops = r.ledger.total_gbitops();
      }
      row.reports.push_back(std::move(r));
    }
    row.finite_trials = int(metrics.size());
    std::tie(row.mean_metric, row.sd_metric) = mean_sd(metrics);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// plot-ready emission

// scatter rows for performance-vs-compute plots
inline std::string scatter_csv(const std::vector<SweepRow>& rows) {
  std::string out = "label,total_gbitops,mean_metric,sd_metric\n";
  for (const auto& r : rows)
    out += r.label + "," + fmt_double(r.total_gbitops) + "," + fmt_double(r.mean_metric) + "," +
           fmt_double(r.sd_metric) + "\n";
  return out;
}

// per-trial rows, the raw sweep table
inline std::string trials_csv(const std::vector<SweepRow>& rows) {
  std::string out = "schedule,seed,final_metric,forward_gbitops,backward_gbitops,total_gbitops\n";
  for (const auto& r : rows)
    for (const auto& rep : r.reports)
      out += r.label + "," + std::to_string(rep.seed) + "," +
             (rep.diverged ? std::string("nan") : fmt_double(rep.final_test_metric)) + "," +
             fmt_double(rep.ledger.forward_gbitops()) + "," +
             fmt_double(rep.ledger.backward_gbitops()) + "," +
             fmt_double(rep.ledger.total_gbitops()) + "\n";
  return out;
}

// mean curve over a swept integer parameter (deficit length R, probe offset)
inline std::string sweep_curve_csv(const std::string& param_name,
                                   const std::vector<std::pair<long, std::vector<double>>>& rows) {
  std::string out = param_name + ",mean_metric,sd_metric\n";
  for (const auto& [value, metrics] : rows) {
    const auto [mean, sd] = mean_sd(metrics);
    out += std::to_string(value) + "," + fmt_double(mean) + "," + fmt_double(sd) + "\n";
  }
  return out;
}

}  // namespace ccpt
