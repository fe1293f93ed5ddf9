#include "nlogic/baseline_mf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "nlogic/errors.hpp"
#include "nlogic/kernels.hpp"
#include "nlogic/metrics.hpp"
#include "nlogic/tape.hpp"

namespace nlogic {

MfModel init_mf(int n_users, int n_items, int dim, uint64_t seed) {
  if (n_users < 1 || n_items < 1 || dim < 1)
    throw ConfigError("mf: need users, items, dim >= 1");
  MfModel m;
  m.dim = dim;
  m.n_users = n_users;
  m.n_items = n_items;
  m.init_seed = seed;
  m.p_mu = m.ps.add("mf.mu", Shape{1, 1});
  m.p_bu = m.ps.add("mf.bu", Shape{n_users, 1});
  m.p_bi = m.ps.add("mf.bi", Shape{n_items, 1});
  m.p_user = m.ps.add("mf.p", Shape{n_users, dim});
  m.p_item = m.ps.add("mf.q", Shape{n_items, dim});
  Rng rng = Rng::stream(seed, "init");
  for (auto& x : m.ps[m.p_user].value) x = rng.normal(0.0, 0.01);
  for (auto& x : m.ps[m.p_item].value) x = rng.normal(0.0, 0.01);
  return m;
}

double mf_score(const MfModel& m, int user, int item) {
  if (user < 0 || user >= m.n_users || item < 0 || item >= m.n_items)
    throw DataError("mf: id out of range");
  const double* pu = m.ps[m.p_user].value.data() + static_cast<size_t>(user) * m.dim;
  const double* qi = m.ps[m.p_item].value.data() + static_cast<size_t>(item) * m.dim;
  return m.ps[m.p_mu].value[0] + m.ps[m.p_bu].value[static_cast<size_t>(user)] +
         m.ps[m.p_bi].value[static_cast<size_t>(item)] +
         kern::dot(pu, qi, m.dim);
}

namespace {

// Per-batch tape for MF: leaves only for the rows a batch touches, with the
// full-matrix l2 handled analytically after backward.
struct MfBatchCtx {
  Tape tape;
  MfModel* model = nullptr;
  NodeId n_mu = -1;
  std::unordered_map<int, NodeId> bu, bi, pu, qi;

  void reset(MfModel& m) {
    model = &m;
    tape.clear();
    bu.clear();
    bi.clear();
    pu.clear();
    qi.clear();
    n_mu = tape.leaf(Shape{1, 1}, m.ps[m.p_mu].value.data());
  }

  NodeId row(std::unordered_map<int, NodeId>& cache, int pid, int idx, int len) {
    auto it = cache.find(idx);
    if (it != cache.end()) return it->second;
    const double* src =
        model->ps[pid].value.data() + static_cast<size_t>(idx) * len;
    NodeId id = tape.leaf(Shape{len, 1}, src);
    cache[idx] = id;
    return id;
  }

  NodeId score(int user, int item) {
    NodeId s = tape.add(n_mu, row(bu, model->p_bu, user, 1));
    s = tape.add(s, row(bi, model->p_bi, item, 1));
    NodeId d = tape.dot(row(pu, model->p_user, user, model->dim),
                        row(qi, model->p_item, item, model->dim));
    return tape.add(s, d);
  }

  void reduce_grads() {
    MfModel& m = *model;
    kern::acc(m.ps[m.p_mu].grad.data(), tape.grad(n_mu), 1);
    auto scatter = [&](std::unordered_map<int, NodeId>& cache, int pid, int len) {
      Param& p = m.ps[pid];
      // deterministic order: touched rows sorted by index
      std::vector<std::pair<int, NodeId>> rows(cache.begin(), cache.end());
      std::sort(rows.begin(), rows.end());
      for (auto& [idx, node] : rows)
        kern::acc(p.grad.data() + static_cast<size_t>(idx) * len,
                  tape.grad(node), len);
    };
    scatter(bu, m.p_bu, 1);
    scatter(bi, m.p_bi, 1);
    scatter(pu, m.p_user, m.dim);
    scatter(qi, m.p_item, m.dim);
  }
};

// same normalized-by-batch semantics as the NLN trainer
void add_l2_grads(MfModel& m, double lambda_theta, size_t batch_n) {
  if (lambda_theta <= 0) return;
  double w = lambda_theta / static_cast<double>(batch_n);
  for (auto& p : m.ps.items())
    for (size_t i = 0; i < p.value.size(); ++i)
      p.grad[i] += 2.0 * w * p.value[i];
}

struct MfBest {
  std::vector<Param> params;
  AdamState adam;
  int epoch = -1;
  double metric = -std::numeric_limits<double>::infinity();
};

}  // namespace

SplitEval evaluate_mf_preference(const MfModel& model,
                                 const std::vector<RecExpr>& exprs) {
  if (exprs.empty()) throw ConfigError("empty evaluation split");
  std::vector<double> p;
  std::vector<uint8_t> labels;
  p.reserve(exprs.size());
  for (const auto& e : exprs) {
    p.push_back(kern::sigmoid(mf_score(model, e.user, e.target)));
    labels.push_back(e.label ? 1 : 0);
  }
  SplitEval ev;
  double loss = 0;
  for (size_t i = 0; i < p.size(); ++i)
    loss += cross_entropy_value(p[i], labels[i] != 0);
  ev.loss = loss / static_cast<double>(p.size());
  ev.metric = auc(p, labels);
  return ev;
}

RankEval evaluate_mf_rank(const MfModel& model,
                          const std::vector<RankTask>& tasks) {
  if (tasks.empty()) throw ConfigError("empty rank-task set");
  RankEval out;
  out.ranks.resize(tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    const RankTask& t = tasks[i];
    std::vector<double> scores;
    scores.reserve(t.negatives.size() + 1);
    scores.push_back(mf_score(model, t.user, t.pos_item));
    for (int item : t.negatives) scores.push_back(mf_score(model, t.user, item));
    RankResult r = rank_candidates(scores, 0);
    out.ranks[i] = r.rank;
    out.ndcg += ndcg_at_k(r, 10);
    double loss = 0;
    for (size_t j = 1; j < scores.size(); ++j)
      loss += pairwise_loss_value(scores[0], scores[j]);
    out.loss += loss / static_cast<double>(scores.size() - 1);
  }
  out.ndcg /= static_cast<double>(tasks.size());
  out.loss /= static_cast<double>(tasks.size());
  return out;
}

TrainResult train_mf_preference(MfModel& model,
                                const std::vector<RecExpr>& train,
                                const std::vector<RecExpr>& valid,
                                const std::vector<RecExpr>& test,
                                const TrainConfig& cfg) {
  if (train.empty() || valid.empty() || test.empty())
    throw ConfigError("train/valid/test splits must all be non-empty");

  MfBatchCtx ctx;
  TrainResult res;
  MfBest best;
  int bad_epochs = 0;
  std::vector<size_t> order(train.size());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      model.ps.zero_grad();
      ctx.reset(model);
      double inv_b = 1.0 / static_cast<double>(end - at);
      std::vector<NodeId> parts;
      for (size_t i = at; i < end; ++i) {
        const RecExpr& e = train[order[i]];
        NodeId p = ctx.tape.sigmoid(ctx.score(e.user, e.target));
        parts.push_back(ctx.tape.scale(cross_entropy(ctx.tape, p, e.label), inv_b));
      }
      NodeId loss = parts.size() == 1 ? parts[0] : ctx.tape.sum_list(parts);
      ctx.tape.backward(loss);
      ctx.reduce_grads();
      add_l2_grads(model, cfg.reg.lambda_theta, end - at);
      adam_step(model.ps, model.adam, cfg.lr);
    }

    EpochStats es;
    es.epoch = epoch;
    SplitEval tr = evaluate_mf_preference(model, train);
    SplitEval va = evaluate_mf_preference(model, valid);
    SplitEval te = evaluate_mf_preference(model, test);
    es.train_loss = tr.loss;
    es.valid_loss = va.loss;
    es.test_loss = te.loss;
    es.train_metric = tr.metric;
    es.valid_metric = va.metric;
    es.test_metric = te.metric;
    res.stats.push_back(es);

    if (es.valid_metric > best.metric + 1e-12) {
      best.params = model.ps.items();
      best.adam = model.adam;
      best.epoch = epoch;
      best.metric = es.valid_metric;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  if (best.epoch >= 0) {
    model.ps.items() = best.params;
    model.adam = best.adam;
  }
  res.best_epoch = best.epoch;
  res.best_valid_metric = best.metric;
  return res;
}

TrainResult train_mf_topk(MfModel& model,
                          const std::vector<RecTrainExample>& train,
                          const std::vector<RankTask>& valid,
                          const std::vector<RankTask>& test,
                          const NegSampleFn& sampler, const TrainConfig& cfg) {
  if (train.empty() || valid.empty() || test.empty())
    throw ConfigError("train/valid/test sets must all be non-empty");

  MfBatchCtx ctx;
  TrainResult res;
  MfBest best;
  int bad_epochs = 0;
  std::vector<size_t> order(train.size());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    std::vector<std::pair<const RecTrainExample*, int>> batch;
    auto flush = [&]() {
      if (batch.empty()) return;
      model.ps.zero_grad();
      ctx.reset(model);
      double inv_b = 1.0 / static_cast<double>(batch.size());
      std::vector<NodeId> parts;
      for (auto& [ex, neg] : batch) {
        NodeId sp = ctx.score(ex->user, ex->pos_item);
        NodeId sn = ctx.score(ex->user, neg);
        parts.push_back(ctx.tape.scale(pairwise_loss(ctx.tape, sp, sn), inv_b));
      }
      NodeId loss = parts.size() == 1 ? parts[0] : ctx.tape.sum_list(parts);
      ctx.tape.backward(loss);
      ctx.reduce_grads();
      add_l2_grads(model, cfg.reg.lambda_theta, batch.size());
      adam_step(model.ps, model.adam, cfg.lr);
      batch.clear();
    };

    for (size_t i = 0; i < order.size(); ++i) {
      const RecTrainExample& ex = train[order[i]];
      Rng nrng = Rng::stream(cfg.seed, "negative-sampling",
                             static_cast<uint64_t>(epoch), static_cast<uint64_t>(i));
      int neg = sampler(ex.user, nrng);
      if (neg < 0) {
        ++res.skipped_examples;
        continue;
      }
      batch.emplace_back(&ex, neg);
      if (static_cast<int>(batch.size()) == cfg.batch_size) flush();
    }
    flush();

    EpochStats es;
    es.epoch = epoch;
    es.train_metric = std::numeric_limits<double>::quiet_NaN();
    RankEval va = evaluate_mf_rank(model, valid);
    RankEval te = evaluate_mf_rank(model, test);
    es.valid_loss = va.loss;
    es.test_loss = te.loss;
    es.valid_metric = va.ndcg;
    es.test_metric = te.ndcg;
    res.stats.push_back(es);

    if (es.valid_metric > best.metric + 1e-12) {
      best.params = model.ps.items();
      best.adam = model.adam;
      best.epoch = epoch;
      best.metric = es.valid_metric;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      break;
    }
  }

  if (best.epoch >= 0) {
    model.ps.items() = best.params;
    model.adam = best.adam;
  }
  res.best_epoch = best.epoch;
  res.best_valid_metric = best.metric;
  return res;
}

}  // namespace nlogic
