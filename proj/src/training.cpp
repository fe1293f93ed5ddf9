#include "nlogic/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nlogic/errors.hpp"
#include "nlogic/io.hpp"
#include "nlogic/kernels.hpp"

namespace nlogic {

namespace {
constexpr double kProbClamp = 1e-7;

int resolve_threads(int threads) {
  if (threads > 0) return threads;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

const char* metric_name(EvalMetric m) {
  switch (m) {
    case EvalMetric::accuracy: return "accuracy";
    case EvalMetric::rmse: return "rmse";
    case EvalMetric::auc: return "auc";
    case EvalMetric::ndcg10: return "ndcg@10";
  }
  return "?";
}

bool metric_maximizes(EvalMetric m) { return m != EvalMetric::rmse; }

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

NodeId cross_entropy(Tape& tape, NodeId p, bool y) {
  NodeId q = y ? p : tape.add_const(tape.scale(p, -1.0), 1.0);
  NodeId c = tape.clamp(q, kProbClamp, 1.0 - kProbClamp);
  return tape.scale(tape.ln(c), -1.0);
}

NodeId pairwise_loss(Tape& tape, NodeId p_pos, NodeId p_neg) {
  NodeId s = tape.sigmoid(tape.sub(p_pos, p_neg));
  NodeId c = tape.clamp(s, kProbClamp, 1.0 - kProbClamp);
  return tape.scale(tape.ln(c), -1.0);
}

double cross_entropy_value(double p, bool y) {
  double q = y ? p : 1.0 - p;
  q = std::min(std::max(q, kProbClamp), 1.0 - kProbClamp);
  return -std::log(q);
}

double pairwise_loss_value(double p_pos, double p_neg) {
  double s = kern::sigmoid(p_pos - p_neg);
  s = std::min(std::max(s, kProbClamp), 1.0 - kProbClamp);
  return -std::log(s);
}

// ---------------------------------------------------------------------------
// Batch planning
// ---------------------------------------------------------------------------

struct PlanItem {
  ExprNode shuffled;  // pointwise: whole expression; pairwise: history part
  bool label = false;
  int pos_item = -1, neg_item = -1;
  bool or_pos_swap = false, or_neg_swap = false;
  std::vector<int> vars;   // distinct vars of this item
  std::vector<int> owned;  // vars first seen at this item within the batch
  long pos = 0;            // absolute epoch position (rng stream index)
};

struct BatchPlan {
  std::vector<PlanItem> items;
  long w_total = 0;
  int nchunks = 1;
  std::vector<std::pair<size_t, size_t>> ranges;
  std::vector<std::vector<int>> chunk_vars;
};

namespace {

void dedup_in_place(std::vector<int>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  std::unordered_set<int> seen;
  for (int x : v)
    if (seen.insert(x).second) out.push_back(x);
  v = std::move(out);
}

void finalize_plan(BatchPlan& plan, long internals_total, int threads) {
  std::unordered_set<int> seen;
  for (auto& it : plan.items)
    for (int v : it.vars)
      if (seen.insert(v).second) it.owned.push_back(v);
  plan.w_total = static_cast<long>(seen.size()) + internals_total;

  size_t n = plan.items.size();
  plan.nchunks = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  size_t base = n / static_cast<size_t>(plan.nchunks);
  size_t rem = n % static_cast<size_t>(plan.nchunks);
  size_t at = 0;
  for (int t = 0; t < plan.nchunks; ++t) {
    size_t len = base + (static_cast<size_t>(t) < rem ? 1 : 0);
    plan.ranges.emplace_back(at, at + len);
    at += len;
  }
  plan.chunk_vars.resize(static_cast<size_t>(plan.nchunks));
  for (int t = 0; t < plan.nchunks; ++t) {
    auto [b, e] = plan.ranges[static_cast<size_t>(t)];
    auto& cv = plan.chunk_vars[static_cast<size_t>(t)];
    std::unordered_set<int> cseen;
    for (size_t i = b; i < e; ++i)
      for (int v : plan.items[i].vars)
        if (cseen.insert(v).second) cv.push_back(v);
  }
}

struct ChunkStats {
  double task_sum = 0;
  std::array<double, 10> reg_sum{};
  double len_sum = 0;
  long degenerate = 0;
};

}  // namespace

// ---------------------------------------------------------------------------
// BatchEngine
// ---------------------------------------------------------------------------

BatchEngine::BatchEngine(int threads) : threads_(resolve_threads(threads)) {
  ctxs_.resize(static_cast<size_t>(threads_));
}

namespace {

// Per-example regularizer assembly: appends the ten law terms plus length
// terms for `elems` to the contribution parts, weighted with the batch-global
// counts so the summed per-example contributions equal the mean-aggregated
// regularizers.
// The loss applies the regularizer term sums at lambda / batch_size: summed
// over the batch W-set like the reference formulation, normalized by the
// example count alongside the mean task loss so the learning rate stays
// batch-size-stable. The per-law means in RegReport stay on the W-set scale.
void append_reg_parts(GraphContext& ctx, const std::vector<NodeId>& elems,
                      NodeId f_node, const RegWeights& rw, long batch_n,
                      std::vector<NodeId>& parts, ChunkStats& cs) {
  Tape& tape = ctx.tape();
  if (rw.lambda_l > 0 && !elems.empty()) {
    std::array<std::vector<NodeId>, 10> law_terms;
    for (NodeId w : elems) {
      RegTerms rt = build_reg_terms(ctx, w, f_node);
      cs.degenerate += rt.degenerate;
      for (int i = 0; i < 10; ++i)
        law_terms[static_cast<size_t>(i)].push_back(rt.t[static_cast<size_t>(i)]);
    }
    for (int i = 0; i < 10; ++i) {
      NodeId s = tape.sum_list(law_terms[static_cast<size_t>(i)]);
      cs.reg_sum[static_cast<size_t>(i)] += tape.value(s);
      parts.push_back(tape.scale(s, rw.lambda_l / static_cast<double>(batch_n)));
    }
  }
  if (rw.lambda_len > 0 && !elems.empty()) {
    std::vector<NodeId> lens;
    lens.reserve(elems.size());
    for (NodeId w : elems) lens.push_back(tape.l2_norm_sq(w));
    NodeId s = tape.sum_list(lens);
    cs.len_sum += tape.value(s);
    parts.push_back(tape.scale(s, rw.lambda_len / static_cast<double>(batch_n)));
  }
}

void collect_elems(GraphContext& ctx, const GraphBuild& gb,
                   const std::vector<int>& owned, std::vector<NodeId>& elems) {
  for (int v : owned) elems.push_back(ctx.var_leaf(v));
  elems.insert(elems.end(), gb.w_set.begin() + gb.leaf_count, gb.w_set.end());
}

}  // namespace

BatchStats BatchEngine::run_pointwise(NlnModel& model,
                                      const std::vector<const LabeledExpr*>& batch,
                                      int epoch, long base_pos,
                                      const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("empty batch");
  BatchPlan plan;
  plan.items.resize(batch.size());
  long internals_total = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    PlanItem& it = plan.items[i];
    it.pos = base_pos + static_cast<long>(i);
    it.label = batch[i]->label;
    Rng ops = Rng::stream(cfg.seed, "shuffle-ops", static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(it.pos));
    it.shuffled = shuffle_operands(batch[i]->expr, ops);
    count_graph_nodes(it.shuffled, it.vars, internals_total);
    dedup_in_place(it.vars);
  }
  finalize_plan(plan, internals_total, threads_);

  return run_planned(model, plan, epoch, base_pos, cfg, /*pairwise=*/false);
}

BatchStats BatchEngine::run_pairwise(NlnModel& model,
                                     const std::vector<PairItem>& batch,
                                     int epoch, long base_pos,
                                     const TrainConfig& cfg) {
  if (batch.empty()) throw ContractError("empty batch");
  BatchPlan plan;
  plan.items.resize(batch.size());
  long internals_total = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    PlanItem& it = plan.items[i];
    const RecTrainExample& ex = *batch[i].ex;
    it.pos = batch[i].pos;
    it.pos_item = ex.pos_item;
    it.neg_item = batch[i].neg_item;
    Rng ops = Rng::stream(cfg.seed, "shuffle-ops", static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(it.pos));
    it.shuffled = shuffle_operands(history_expr(ex.history), ops);
    it.or_pos_swap = ops.coin();
    it.or_neg_swap = ops.coin();
    count_graph_nodes(it.shuffled, it.vars, internals_total);
    it.vars.push_back(it.pos_item);
    it.vars.push_back(it.neg_item);
    dedup_in_place(it.vars);
    internals_total += 2;  // the two Or applications
  }
  finalize_plan(plan, internals_total, threads_);

  return run_planned(model, plan, epoch, base_pos, cfg, /*pairwise=*/true);
}

ExprNode history_expr(const std::vector<std::pair<int, bool>>& history) {
  if (history.empty()) throw ContractError("empty interaction history");
  std::vector<ExprNode> lits;
  lits.reserve(history.size());
  for (const auto& [item, liked] : history) {
    ExprNode lit = make_var(item);
    if (!liked) lit = make_not(std::move(lit));
    lits.push_back(std::move(lit));
  }
  ExprNode conj =
      lits.size() == 1 ? std::move(lits[0]) : make_and(std::move(lits));
  return make_not(std::move(conj));
}

BatchStats BatchEngine::run_planned(NlnModel& model, const BatchPlan& plan,
                                    int epoch, long batch_id,
                                    const TrainConfig& cfg, bool pairwise) {
  model.ps.zero_grad();
  const RegWeights& rw = cfg.reg;
  double inv_b = 1.0 / static_cast<double>(plan.items.size());
  std::vector<ChunkStats> chunk_stats(static_cast<size_t>(plan.nchunks));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(plan.nchunks));

  auto work = [&](int t) {
    try {
      GraphContext& ctx = ctxs_[static_cast<size_t>(t)];
      ChunkStats& cs = chunk_stats[static_cast<size_t>(t)];
      auto [b, e] = plan.ranges[static_cast<size_t>(t)];
      ctx.bind(model, /*training=*/true);
      ctx.bind_vars(plan.chunk_vars[static_cast<size_t>(t)]);
      NodeId f_node = -1;
      if (rw.lambda_l > 0) {
        Rng frng = Rng::stream(cfg.seed, "fvec", static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(batch_id));
        ctx.set_dropout_rng(&frng);
        f_node = ctx.false_vec();
      }
      ctx.set_example_mark();
      NodeId stop = static_cast<NodeId>(ctx.tape().mark().nodes);

      for (size_t i = b; i < e; ++i) {
        const PlanItem& it = plan.items[i];
        Rng drng = Rng::stream(cfg.seed, "dropout", static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(it.pos));
        ctx.set_dropout_rng(&drng);
        Tape& tape = ctx.tape();

        NodeId task = -1;
        std::vector<NodeId> elems;
        if (!pairwise) {
          GraphBuild gb = build_graph(ctx, it.shuffled);
          auto [p, guarded] = ctx.sim_guarded(gb.root, ctx.anchor_node());
          if (guarded) cs.degenerate += 1;
          task = cross_entropy(tape, p, it.label);
          collect_elems(ctx, gb, it.owned, elems);
        } else {
          GraphBuild gb = build_graph(ctx, it.shuffled);
          NodeId pos_leaf = ctx.var_leaf(it.pos_item);
          NodeId neg_leaf = ctx.var_leaf(it.neg_item);
          NodeId or_pos = it.or_pos_swap ? ctx.apply_or(pos_leaf, gb.root)
                                         : ctx.apply_or(gb.root, pos_leaf);
          NodeId or_neg = it.or_neg_swap ? ctx.apply_or(neg_leaf, gb.root)
                                         : ctx.apply_or(gb.root, neg_leaf);
          auto [p_pos, g_pos] = ctx.sim_guarded(or_pos, ctx.anchor_node());
          auto [p_neg, g_neg] = ctx.sim_guarded(or_neg, ctx.anchor_node());
          cs.degenerate += (g_pos ? 1 : 0) + (g_neg ? 1 : 0);
          task = pairwise_loss(tape, p_pos, p_neg);
          collect_elems(ctx, gb, it.owned, elems);
          elems.push_back(or_pos);
          elems.push_back(or_neg);
        }

        std::vector<NodeId> parts;
        parts.push_back(tape.scale(task, inv_b));
        append_reg_parts(ctx, elems, f_node, rw,
                         static_cast<long>(plan.items.size()), parts, cs);
        NodeId contrib = parts.size() == 1 ? parts[0] : tape.sum_list(parts);
        tape.backward(contrib, stop);
        cs.task_sum += tape.value(task);
        ctx.rewind_example();
      }
      // push the per-batch F subgraph's accumulated gradient into NOT
      ctx.tape().propagate_pending(stop - 1, 0);
    } catch (...) {
      errors[static_cast<size_t>(t)] = std::current_exception();
    }
  };

  if (plan.nchunks == 1) {
    work(0);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1) num_threads(plan.nchunks)
    for (int t = 0; t < plan.nchunks; ++t) work(t);
#else
    for (int t = 0; t < plan.nchunks; ++t) work(t);
#endif
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // batch-global extras on chunk 0's context: the r1 anchor term and the
  // parameter l2 penalty
  BatchStats stats;
  {
    GraphContext& ctx0 = ctxs_[0];
    Tape& tape0 = ctx0.tape();
    NodeId stop0 = static_cast<NodeId>(tape0.mark().nodes);
    std::vector<NodeId> parts;
    Rng arng = Rng::stream(cfg.seed, "reg-anchor", static_cast<uint64_t>(epoch),
                           static_cast<uint64_t>(batch_id));
    if (rw.lambda_l > 0) {
      ctx0.set_dropout_rng(&arng);
      NodeId tA = build_reg_term_anchor(ctx0, &chunk_stats[0].degenerate);
      chunk_stats[0].reg_sum[0] += tape0.value(tA);
      parts.push_back(tape0.scale(
          tA, rw.lambda_l / static_cast<double>(plan.items.size())));
    }
    if (rw.lambda_theta > 0) {
      std::vector<NodeId> pls;
      for (int pid : model.module_param_ids())
        pls.push_back(ctx0.param_node(pid));
      NodeId pr = param_reg(tape0, pls);
      stats.param_reg_value = tape0.value(pr);
      parts.push_back(tape0.scale(
          pr, rw.lambda_theta / static_cast<double>(plan.items.size())));
    } else {
      double acc = 0.0;
      for (int pid : model.module_param_ids()) {
        const Param& p = model.ps[pid];
        acc += kern::norm_sq(p.value.data(), static_cast<int>(p.value.size()));
      }
      stats.param_reg_value = acc;
    }
    if (!parts.empty()) {
      NodeId extras = parts.size() == 1 ? parts[0] : tape0.sum_list(parts);
      tape0.backward(extras, stop0);
    }
  }

  // deterministic reduction, chunk order then creation order
  for (int t = 0; t < plan.nchunks; ++t) {
    GraphContext& ctx = ctxs_[static_cast<size_t>(t)];
    const Tape& tape = ctx.tape();
    for (int pid : model.module_param_ids()) {
      Param& p = model.ps[pid];
      kern::acc(p.grad.data(), tape.grad(ctx.param_node(pid)),
                static_cast<int>(p.grad.size()));
    }
    Param& emb = model.ps[model.p_emb];
    int d = model.cfg.dim;
    for (const auto& [var, node] : ctx.bound_vars()) {
      kern::acc(emb.grad.data() + static_cast<size_t>(var) * d,
                tape.grad(node), d);
    }
  }

  // assemble stats
  stats.task_count = static_cast<long>(plan.items.size());
  for (const auto& cs : chunk_stats) {
    stats.task_sum += cs.task_sum;
    stats.len_sum += cs.len_sum;
    stats.degenerate += cs.degenerate;
    for (int i = 0; i < 10; ++i) stats.reg_sum[static_cast<size_t>(i)] += cs.reg_sum[static_cast<size_t>(i)];
  }
  stats.has_reg = rw.lambda_l > 0;
  stats.total_loss = stats.task_sum * inv_b;
  if (rw.lambda_l > 0) {
    for (int i = 0; i < 10; ++i) {
      // counts carry the per-law index-set sizes for the mean REPORT
      stats.reg_count[static_cast<size_t>(i)] =
          i == 0 ? plan.w_total + 1 : plan.w_total;
      stats.total_loss += rw.lambda_l * stats.reg_sum[static_cast<size_t>(i)] *
                          inv_b;
    }
  }
  if (rw.lambda_len > 0) {
    stats.len_count = plan.w_total;
    stats.total_loss += rw.lambda_len * stats.len_sum * inv_b;
  }
  if (rw.lambda_theta > 0)
    stats.total_loss += rw.lambda_theta * stats.param_reg_value * inv_b;
  return stats;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

SplitEval evaluate_pointwise(const NlnModel& model,
                             const std::vector<const LabeledExpr*>& exprs,
                             EvalMetric metric, int threads) {
  if (exprs.empty()) throw ConfigError("empty evaluation split");
  std::vector<const ExprNode*> nodes;
  nodes.reserve(exprs.size());
  std::vector<uint8_t> labels;
  labels.reserve(exprs.size());
  for (const auto* e : exprs) {
    nodes.push_back(&e->expr);
    labels.push_back(e->label ? 1 : 0);
  }
  std::vector<double> p = predict_all(model, nodes, threads);
  SplitEval ev;
  double loss = 0;
  for (size_t i = 0; i < p.size(); ++i)
    loss += cross_entropy_value(p[i], labels[i] != 0);
  ev.loss = loss / static_cast<double>(p.size());
  switch (metric) {
    case EvalMetric::accuracy: ev.metric = accuracy(p, labels); break;
    case EvalMetric::rmse: ev.metric = rmse(p, labels); break;
    case EvalMetric::auc: ev.metric = auc(p, labels); break;
    case EvalMetric::ndcg10:
      throw ConfigError("ndcg@10 needs rank tasks, not labeled expressions");
  }
  return ev;
}

RankEval evaluate_rank_tasks(const NlnModel& model,
                             const std::vector<RankTask>& tasks, int threads) {
  if (tasks.empty()) throw ConfigError("empty rank-task set");
  size_t n = tasks.size();
  std::vector<double> ndcgs(n, 0.0), losses(n, 0.0);
  std::vector<int> ranks(n, 0);
  int nt = resolve_threads(threads);

  auto eval_task = [&](GraphContext& ctx, size_t i) {
    const RankTask& task = tasks[i];
    GraphBuild gb = build_graph(ctx, history_expr(task.history));
    std::vector<double> scores;
    scores.reserve(task.negatives.size() + 1);
    auto score_of = [&](int item) {
      NodeId o = ctx.apply_or(gb.root, ctx.var_leaf(item));
      return ctx.tape().value(ctx.sim_guarded(o, ctx.anchor_node()).first);
    };
    scores.push_back(score_of(task.pos_item));
    for (int v : task.negatives) scores.push_back(score_of(v));
    RankResult r = rank_candidates(scores, 0);
    ranks[i] = r.rank;
    ndcgs[i] = ndcg_at_k(r, 10);
    double loss = 0;
    for (size_t j = 1; j < scores.size(); ++j)
      loss += pairwise_loss_value(scores[0], scores[j]);
    losses[i] = loss / static_cast<double>(scores.size() - 1);
    ctx.rewind_example();
  };

#ifdef _OPENMP
  if (nt > 1 && n > 1) {
    std::exception_ptr error;
    std::mutex error_mu;
#pragma omp parallel num_threads(nt)
    {
      GraphContext ctx;
      ctx.bind(model, /*training=*/false);
      ctx.set_example_mark();
#pragma omp for schedule(static)
      for (long i = 0; i < static_cast<long>(n); ++i) {
        try {
          eval_task(ctx, static_cast<size_t>(i));
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    }
    if (error) std::rethrow_exception(error);
  } else
#endif
  {
    GraphContext ctx;
    ctx.bind(model, /*training=*/false);
    ctx.set_example_mark();
    for (size_t i = 0; i < n; ++i) eval_task(ctx, i);
  }

  RankEval out;
  out.ranks = std::move(ranks);
  for (size_t i = 0; i < n; ++i) {
    out.ndcg += ndcgs[i];
    out.loss += losses[i];
  }
  out.ndcg /= static_cast<double>(n);
  out.loss /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

struct BestState {
  std::vector<Param> params;
  AdamState adam;
  int epoch = -1;
  double metric = 0;
};

void snapshot(const NlnModel& model, BestState& best, int epoch, double metric) {
  best.params = model.ps.items();
  best.adam = model.adam;
  best.epoch = epoch;
  best.metric = metric;
}

void restore(NlnModel& model, const BestState& best) {
  model.ps.items() = best.params;
  model.adam = best.adam;
}

struct EpochRegAccum {
  std::array<double, 10> sum{};
  std::array<long, 10> count{};
  double len_sum = 0;
  long len_count = 0;
  double param_value = 0;
  long degenerate = 0;
  bool any = false;

  void add(const BatchStats& b) {
    any = any || b.has_reg;
    for (int i = 0; i < 10; ++i) {
      sum[static_cast<size_t>(i)] += b.reg_sum[static_cast<size_t>(i)];
      count[static_cast<size_t>(i)] += b.reg_count[static_cast<size_t>(i)];
    }
    len_sum += b.len_sum;
    len_count += b.len_count;
    param_value = b.param_reg_value;
    degenerate += b.degenerate;
  }

  RegReport report() const {
    RegReport r;
    for (int i = 0; i < 10; ++i)
      if (count[static_cast<size_t>(i)] > 0)
        r.r[static_cast<size_t>(i)] =
            sum[static_cast<size_t>(i)] / static_cast<double>(count[static_cast<size_t>(i)]);
    if (len_count > 0) r.length = len_sum / static_cast<double>(len_count);
    r.param = param_value;
    r.degenerate = degenerate;
    return r;
  }
};

void maybe_write_checkpoint(const NlnModel& model, const TrainConfig& cfg,
                            int epoch) {
  if (!cfg.write_checkpoints || cfg.out_dir.empty()) return;
  save_checkpoint(model, epoch, cfg.config_hash,
                  cfg.out_dir + "/ckpt-" + std::to_string(epoch) + ".json");
}

bool improves(double value, double best, bool maximize) {
  return maximize ? value > best + 1e-12 : value < best - 1e-12;
}

}  // namespace

TrainResult train_pointwise(NlnModel& model,
                            const std::vector<LabeledExpr>& train,
                            const std::vector<LabeledExpr>& valid,
                            const std::vector<LabeledExpr>& test,
                            const TrainConfig& cfg, int start_epoch) {
  if (train.empty() || valid.empty() || test.empty())
    throw ConfigError("train/valid/test splits must all be non-empty");
  if (cfg.batch_size < 1 || cfg.patience < 1)
    throw ConfigError("batch_size and patience must be >= 1");

  BatchEngine engine(cfg.threads);
  std::vector<const LabeledExpr*> train_ptr, valid_ptr, test_ptr;
  for (const auto& e : train) train_ptr.push_back(&e);
  for (const auto& e : valid) valid_ptr.push_back(&e);
  for (const auto& e : test) test_ptr.push_back(&e);

  bool maximize = metric_maximizes(cfg.eval_metric);
  TrainResult res;
  BestState best;
  best.metric = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    EpochRegAccum reg_accum;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<const LabeledExpr*> batch;
      batch.reserve(end - at);
      for (size_t i = at; i < end; ++i) batch.push_back(train_ptr[order[i]]);
      BatchStats bs = engine.run_pointwise(model, batch, epoch,
                                           static_cast<long>(at), cfg);
      adam_step(model.ps, model.adam, cfg.lr);
      reg_accum.add(bs);
    }

    EpochStats es;
    es.epoch = epoch;
    SplitEval tr = evaluate_pointwise(model, train_ptr, cfg.eval_metric, cfg.threads);
    SplitEval va = evaluate_pointwise(model, valid_ptr, cfg.eval_metric, cfg.threads);
    SplitEval te = evaluate_pointwise(model, test_ptr, cfg.eval_metric, cfg.threads);
    es.train_loss = tr.loss;
    es.valid_loss = va.loss;
    es.test_loss = te.loss;
    es.train_metric = tr.metric;
    es.valid_metric = va.metric;
    es.test_metric = te.metric;
    es.reg = reg_accum.report();
    es.has_reg = reg_accum.any;
    res.stats.push_back(es);

    if (improves(es.valid_metric, best.metric, maximize)) {
      snapshot(model, best, epoch, es.valid_metric);
      maybe_write_checkpoint(model, cfg, epoch);
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  if (best.epoch >= 0) restore(model, best);
  res.best_epoch = best.epoch;
  res.best_valid_metric = best.metric;
  if (!cfg.out_dir.empty())
    write_curves_csv(cfg.out_dir + "/curves.csv", res.stats, cfg.config_hash,
                     cfg.seed);
  return res;
}

TrainResult train_pairwise(NlnModel& model,
                           const std::vector<RecTrainExample>& train,
                           const std::vector<RankTask>& valid,
                           const std::vector<RankTask>& test,
                           const NegSampleFn& sampler, const TrainConfig& cfg) {
  if (train.empty() || valid.empty() || test.empty())
    throw ConfigError("train/valid/test sets must all be non-empty");

  BatchEngine engine(cfg.threads);
  TrainResult res;
  BestState best;
  best.metric = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  std::vector<size_t> order(train.size());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    EpochRegAccum reg_accum;
    double train_loss_sum = 0;
    long train_loss_count = 0;

    std::vector<BatchEngine::PairItem> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    auto flush = [&](long batch_id) {
      if (batch.empty()) return;
      BatchStats bs = engine.run_pairwise(model, batch, epoch, batch_id, cfg);
      adam_step(model.ps, model.adam, cfg.lr);
      reg_accum.add(bs);
      train_loss_sum += bs.task_sum;
      train_loss_count += bs.task_count;
      batch.clear();
    };

    long batch_id = 0;
    for (size_t i = 0; i < order.size(); ++i) {
      const RecTrainExample& ex = train[order[i]];
      Rng nrng = Rng::stream(cfg.seed, "negative-sampling",
                             static_cast<uint64_t>(epoch), static_cast<uint64_t>(i));
      int neg = sampler(ex.user, nrng);
      if (neg < 0) {
        ++res.skipped_examples;
        continue;
      }
      batch.push_back({&ex, neg, static_cast<long>(i)});
      if (static_cast<int>(batch.size()) == cfg.batch_size) flush(batch_id++);
    }
    flush(batch_id);

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = train_loss_count > 0
                        ? train_loss_sum / static_cast<double>(train_loss_count)
                        : 0.0;
    es.train_metric = std::numeric_limits<double>::quiet_NaN();
    RankEval va = evaluate_rank_tasks(model, valid, cfg.threads);
    RankEval te = evaluate_rank_tasks(model, test, cfg.threads);
    es.valid_loss = va.loss;
    es.test_loss = te.loss;
    es.valid_metric = va.ndcg;
    es.test_metric = te.ndcg;
    es.reg = reg_accum.report();
    es.has_reg = reg_accum.any;
    res.stats.push_back(es);

    if (improves(es.valid_metric, best.metric, /*maximize=*/true)) {
      snapshot(model, best, epoch, es.valid_metric);
      maybe_write_checkpoint(model, cfg, epoch);
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  if (best.epoch >= 0) restore(model, best);
  res.best_epoch = best.epoch;
  res.best_valid_metric = best.metric;
  if (!cfg.out_dir.empty())
    write_curves_csv(cfg.out_dir + "/curves.csv", res.stats, cfg.config_hash,
                     cfg.seed);
  return res;
}

// ---------------------------------------------------------------------------
// Multi-seed orchestration
// ---------------------------------------------------------------------------

MultiSeedResult run_seeds(
    const std::vector<uint64_t>& seeds, int jobs,
    const std::function<std::map<std::string, double>(uint64_t)>& runner) {
  if (seeds.size() < 1) throw ConfigError("need at least one seed");
  MultiSeedResult out;
  out.per_seed.resize(seeds.size());

  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        out.per_seed[i] = {seeds[i], runner(seeds[i])};
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };

  int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (const auto& [name, _] : out.per_seed[0].metrics) {
    std::vector<double> vals;
    for (const auto& so : out.per_seed) {
      auto it = so.metrics.find(name);
      if (it == so.metrics.end())
        throw ContractError("seed runs returned inconsistent metric sets");
      vals.push_back(it->second);
    }
    out.agg[name] = aggregate(vals);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

void write_curves_csv(const std::string& path,
                      const std::vector<EpochStats>& stats,
                      const std::string& config_hash, uint64_t seed) {
  std::ofstream f = open_out(path);
  f << header_comment(config_hash, {seed}) << "\n";
  f << "epoch,split,loss,metric";
  for (int i = 1; i <= 10; ++i) f << ",r" << i;
  f << ",length,param\n";
  char buf[64];
  auto num = [&](double v) -> std::string {
    if (std::isnan(v)) return "";
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
  };
  for (const auto& es : stats) {
    const char* splits[3] = {"train", "valid", "test"};
    double losses[3] = {es.train_loss, es.valid_loss, es.test_loss};
    double metrics[3] = {es.train_metric, es.valid_metric, es.test_metric};
    for (int s = 0; s < 3; ++s) {
      f << es.epoch << ',' << splits[s] << ',' << num(losses[s]) << ','
        << num(metrics[s]);
      if (s == 0 && es.has_reg) {
        for (int i = 0; i < 10; ++i) f << ',' << num(es.reg.r[static_cast<size_t>(i)]);
        f << ',' << num(es.reg.length) << ',' << num(es.reg.param);
      } else {
        for (int i = 0; i < 12; ++i) f << ',';
      }
      f << '\n';
    }
  }
}

}  // namespace nlogic
