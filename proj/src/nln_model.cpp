#include "nlogic/nln_model.hpp"

#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "nlogic/errors.hpp"
#include "nlogic/kernels.hpp"

namespace nlogic {

namespace {
constexpr double kDegenerateNorm = 1e-12;

void fill_glorot(Param& p, Rng& rng) {
  double limit = std::sqrt(6.0 / (p.shape.rows + p.shape.cols));
  for (auto& x : p.value) x = (2.0 * rng.uniform() - 1.0) * limit;
}

void fill_normal(Param& p, Rng& rng, double sd) {
  for (auto& x : p.value) x = rng.normal(0.0, sd);
}
}  // namespace

NlnModel init_model(const NlnConfig& cfg, int vocab, uint64_t seed) {
  if (cfg.dim < 2) throw ConfigError("embedding dimension must be >= 2");
  if (cfg.alpha <= 0) throw ConfigError("similarity scale alpha must be > 0");
  if (vocab < 1) throw ConfigError("vocabulary must be non-empty");

  NlnModel m;
  m.cfg = cfg;
  m.vocab = vocab;
  m.init_seed = seed;
  int d = cfg.dim;

  m.p_and_h1 = m.ps.add("and.h1", Shape{d, 2 * d});
  m.p_and_h2 = m.ps.add("and.h2", Shape{d, d});
  m.p_and_b = m.ps.add("and.b", Shape{d, 1});
  m.p_or_h1 = m.ps.add("or.h1", Shape{d, 2 * d});
  m.p_or_h2 = m.ps.add("or.h2", Shape{d, d});
  m.p_or_b = m.ps.add("or.b", Shape{d, 1});
  m.p_not_h1 = m.ps.add("not.h1", Shape{d, d});
  m.p_not_h2 = m.ps.add("not.h2", Shape{d, d});
  m.p_not_b = m.ps.add("not.b", Shape{d, 1});
  m.p_emb = m.ps.add("embeddings", Shape{vocab, d});
  m.p_anchor = m.ps.add("anchor", Shape{d, 1}, /*trainable=*/false);

  Rng rng = Rng::stream(seed, "init");
  for (int id : {m.p_and_h1, m.p_and_h2, m.p_or_h1, m.p_or_h2, m.p_not_h1,
                 m.p_not_h2})
    fill_glorot(m.ps[id], rng);
  // biases stay zero
  fill_normal(m.ps[m.p_emb], rng, 0.1);
  fill_normal(m.ps[m.p_anchor], rng, 1.0 / std::sqrt(static_cast<double>(d)));
  return m;
}

// ---------------------------------------------------------------------------
// GraphContext
// ---------------------------------------------------------------------------

void GraphContext::bind(const NlnModel& model, bool training) {
  model_ = &model;
  training_ = training;
  tape_.clear();
  param_nodes_.clear();
  emb_lookup_.clear();
  emb_order_.clear();
  has_example_mark_ = false;

  n_and_h1_ = bind_param(model.p_and_h1);
  n_and_h2_ = bind_param(model.p_and_h2);
  n_and_b_ = bind_param(model.p_and_b);
  n_or_h1_ = bind_param(model.p_or_h1);
  n_or_h2_ = bind_param(model.p_or_h2);
  n_or_b_ = bind_param(model.p_or_b);
  n_not_h1_ = bind_param(model.p_not_h1);
  n_not_h2_ = bind_param(model.p_not_h2);
  n_not_b_ = bind_param(model.p_not_b);
  n_anchor_ = bind_param(model.p_anchor);
}

NodeId GraphContext::bind_param(int param_id) {
  const Param& p = model_->ps[param_id];
  NodeId id = tape_.leaf(p.shape, p.value.data());
  param_nodes_[param_id] = id;
  return id;
}

NodeId GraphContext::param_node(int param_id) const {
  auto it = param_nodes_.find(param_id);
  if (it == param_nodes_.end())
    throw ContractError("parameter not bound to this graph context");
  return it->second;
}

void GraphContext::bind_vars(const std::vector<int>& vars) {
  for (int v : vars) var_leaf(v);
}

NodeId GraphContext::var_leaf(int var) {
  if (var < 0 || var >= model_->vocab)
    throw DataError("variable v" + std::to_string(var) +
                    " outside vocabulary of size " +
                    std::to_string(model_->vocab));
  auto it = emb_lookup_.find(var);
  if (it != emb_lookup_.end()) return it->second;
  NodeId id = tape_.leaf(Shape{model_->cfg.dim, 1}, model_->embedding_row(var));
  emb_lookup_[var] = id;
  emb_order_.emplace_back(var, id);
  return id;
}

NodeId GraphContext::apply_not(NodeId w) {
  NodeId h = tape_.affine(n_not_h1_, w, n_not_b_);
  NodeId r = tape_.relu(h);
  if (training_ && model_->cfg.dropout > 0.0)
    r = tape_.dropout(r, model_->cfg.dropout, *dropout_rng_);
  return tape_.matvec(n_not_h2_, r);
}

NodeId GraphContext::apply_and(NodeId a, NodeId b) {
  NodeId cc = tape_.concat(a, b);
  NodeId h = tape_.affine(n_and_h1_, cc, n_and_b_);
  NodeId r = tape_.relu(h);
  if (training_ && model_->cfg.dropout > 0.0)
    r = tape_.dropout(r, model_->cfg.dropout, *dropout_rng_);
  return tape_.matvec(n_and_h2_, r);
}

NodeId GraphContext::apply_or(NodeId a, NodeId b) {
  NodeId cc = tape_.concat(a, b);
  NodeId h = tape_.affine(n_or_h1_, cc, n_or_b_);
  NodeId r = tape_.relu(h);
  if (training_ && model_->cfg.dropout > 0.0)
    r = tape_.dropout(r, model_->cfg.dropout, *dropout_rng_);
  return tape_.matvec(n_or_h2_, r);
}

NodeId GraphContext::sim(NodeId a, NodeId b) {
  NodeId c = tape_.cosine(a, b);
  return tape_.sigmoid(tape_.scale(c, model_->cfg.alpha));
}

std::pair<NodeId, bool> GraphContext::sim_guarded(NodeId a, NodeId b) {
  int n = tape_.shape(a).size();
  double na = std::sqrt(kern::norm_sq(tape_.data(a), n));
  double nb = std::sqrt(kern::norm_sq(tape_.data(b), n));
  if (na < kDegenerateNorm || nb < kDegenerateNorm)
    return {tape_.constant(0.5), true};
  return {sim(a, b), false};
}

NodeId GraphContext::false_vec() { return apply_not(n_anchor_); }

void GraphContext::set_example_mark() {
  example_mark_ = tape_.mark();
  emb_count_at_mark_ = emb_order_.size();
  has_example_mark_ = true;
}

void GraphContext::rewind_example() {
  if (!has_example_mark_) throw ContractError("no example mark set");
  tape_.rewind(example_mark_);
  while (emb_order_.size() > emb_count_at_mark_) {
    emb_lookup_.erase(emb_order_.back().first);
    emb_order_.pop_back();
  }
}

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

namespace {

NodeId build_rec(GraphContext& ctx, const ExprNode& e, GraphBuild& gb,
                 std::vector<uint8_t>& leaf_seen) {
  switch (e.kind) {
    case ExprKind::Var: {
      NodeId id = ctx.var_leaf(e.var);
      if (!leaf_seen[static_cast<size_t>(e.var)]) {
        leaf_seen[static_cast<size_t>(e.var)] = 1;
        gb.leaf_vars.push_back(e.var);
      }
      return id;
    }
    case ExprKind::Not: {
      NodeId c = build_rec(ctx, e.kids[0], gb, leaf_seen);
      NodeId id = ctx.apply_not(c);
      gb.w_set.push_back(id);
      return id;
    }
    case ExprKind::And:
    case ExprKind::Or: {
      NodeId acc = build_rec(ctx, e.kids[0], gb, leaf_seen);
      for (size_t i = 1; i < e.kids.size(); ++i) {
        NodeId rhs = build_rec(ctx, e.kids[i], gb, leaf_seen);
        acc = e.kind == ExprKind::And ? ctx.apply_and(acc, rhs)
                                      : ctx.apply_or(acc, rhs);
        gb.w_set.push_back(acc);
      }
      return acc;
    }
  }
  throw ContractError("build_graph: corrupt node");
}

}  // namespace

GraphBuild build_graph(GraphContext& ctx, const ExprNode& expr) {
  GraphBuild gb;
  thread_local std::vector<uint8_t> leaf_seen;
  leaf_seen.assign(static_cast<size_t>(ctx.model().vocab), 0);
  gb.root = build_rec(ctx, expr, gb, leaf_seen);

  // leaves first (first-touch order), then module outputs in creation order
  std::vector<NodeId> internals = std::move(gb.w_set);
  gb.w_set.clear();
  gb.w_set.reserve(gb.leaf_vars.size() + internals.size());
  for (int v : gb.leaf_vars) gb.w_set.push_back(ctx.var_leaf(v));
  gb.leaf_count = static_cast<int>(gb.leaf_vars.size());
  gb.w_set.insert(gb.w_set.end(), internals.begin(), internals.end());
  return gb;
}

void count_graph_nodes(const ExprNode& expr, std::vector<int>& distinct_vars,
                       long& internal_nodes) {
  switch (expr.kind) {
    case ExprKind::Var:
      distinct_vars.push_back(expr.var);
      return;
    case ExprKind::Not:
      count_graph_nodes(expr.kids[0], distinct_vars, internal_nodes);
      internal_nodes += 1;
      return;
    case ExprKind::And:
    case ExprKind::Or:
      for (const auto& k : expr.kids)
        count_graph_nodes(k, distinct_vars, internal_nodes);
      internal_nodes += static_cast<long>(expr.kids.size()) - 1;
      return;
  }
}

double predict(const NlnModel& model, const ExprNode& expr) {
  GraphContext ctx;
  ctx.bind(model, /*training=*/false);
  GraphBuild gb = build_graph(ctx, expr);
  NodeId p = ctx.sim(gb.root, ctx.anchor_node());
  return ctx.tape().value(p);
}

std::vector<double> predict_all_serial(const NlnModel& model,
                                       const std::vector<const ExprNode*>& exprs,
                                       long* degenerate) {
  std::vector<double> out(exprs.size(), 0.0);
  GraphContext ctx;
  ctx.bind(model, /*training=*/false);
  ctx.set_example_mark();
  for (size_t i = 0; i < exprs.size(); ++i) {
    GraphBuild gb = build_graph(ctx, *exprs[i]);
    auto [p, guarded] = ctx.sim_guarded(gb.root, ctx.anchor_node());
    if (guarded && degenerate) ++*degenerate;
    out[i] = ctx.tape().value(p);
    ctx.rewind_example();
  }
  return out;
}

std::vector<double> predict_all(const NlnModel& model,
                                const std::vector<const ExprNode*>& exprs,
                                int threads, long* degenerate) {
#ifdef _OPENMP
  if (threads != 1 && exprs.size() > 1) {
    int nt = threads > 0 ? threads : omp_get_max_threads();
    std::vector<double> out(exprs.size(), 0.0);
    std::exception_ptr error;
    long guarded_total = 0;
#pragma omp parallel num_threads(nt) reduction(+ : guarded_total)
    {
      GraphContext ctx;
      ctx.bind(model, /*training=*/false);
      ctx.set_example_mark();
#pragma omp for schedule(static)
      for (long i = 0; i < static_cast<long>(exprs.size()); ++i) {
        try {
          GraphBuild gb = build_graph(ctx, *exprs[static_cast<size_t>(i)]);
          auto [p, guarded] = ctx.sim_guarded(gb.root, ctx.anchor_node());
          if (guarded) ++guarded_total;
          out[static_cast<size_t>(i)] = ctx.tape().value(p);
          ctx.rewind_example();
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
    }
    if (error) std::rethrow_exception(error);
    if (degenerate) *degenerate += guarded_total;
    return out;
  }
#else
  (void)threads;
#endif
  return predict_all_serial(model, exprs, degenerate);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using nlohmann::json;

void save_checkpoint(const NlnModel& model, int epoch,
                     const std::string& config_hash, const std::string& path) {
  json j;
  j["format"] = "nlogic-checkpoint";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["epoch"] = epoch;
  j["seed"] = model.init_seed;
  j["vocab"] = model.vocab;
  j["cfg"] = {{"dim", model.cfg.dim},
              {"alpha", model.cfg.alpha},
              {"dropout", model.cfg.dropout}};
  j["adam"] = {{"beta1", model.adam.beta1},
               {"beta2", model.adam.beta2},
               {"eps", model.adam.eps},
               {"t", model.adam.t}};
  json params = json::array();
  for (const auto& p : model.ps.items()) {
    params.push_back({{"name", p.name},
                      {"rows", p.shape.rows},
                      {"cols", p.shape.cols},
                      {"trainable", p.trainable},
                      {"value", p.value},
                      {"m", p.m},
                      {"v", p.v}});
  }
  j["params"] = std::move(params);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f << j.dump();
}

NlnModel load_checkpoint(const std::string& path, int* epoch_out,
                         std::string* config_hash_out) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw DataError("corrupt checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "nlogic-checkpoint")
    throw DataError("not a checkpoint file: " + path);

  NlnConfig cfg;
  cfg.dim = j["cfg"]["dim"].get<int>();
  cfg.alpha = j["cfg"]["alpha"].get<double>();
  cfg.dropout = j["cfg"]["dropout"].get<double>();
  NlnModel m = init_model(cfg, j["vocab"].get<int>(), j["seed"].get<uint64_t>());
  m.adam.beta1 = j["adam"]["beta1"].get<double>();
  m.adam.beta2 = j["adam"]["beta2"].get<double>();
  m.adam.eps = j["adam"]["eps"].get<double>();
  m.adam.t = j["adam"]["t"].get<long>();

  for (const auto& pj : j["params"]) {
    std::string name = pj["name"].get<std::string>();
    bool found = false;
    for (auto& p : m.ps.items()) {
      if (p.name != name) continue;
      found = true;
      if (p.shape.rows != pj["rows"].get<int>() ||
          p.shape.cols != pj["cols"].get<int>())
        throw DataError("checkpoint shape mismatch for " + name);
      p.value = pj["value"].get<std::vector<double>>();
      p.m = pj["m"].get<std::vector<double>>();
      p.v = pj["v"].get<std::vector<double>>();
      if (p.value.size() != static_cast<size_t>(p.shape.size()))
        throw DataError("checkpoint size mismatch for " + name);
    }
    if (!found) throw DataError("unknown parameter in checkpoint: " + name);
  }
  if (epoch_out) *epoch_out = j["epoch"].get<int>();
  if (config_hash_out) *config_hash_out = j["config_hash"].get<std::string>();
  return m;
}

}  // namespace nlogic
