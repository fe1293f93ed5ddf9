// Acceptance suite: one pass/fail line per criterion, run at the desk-scale
// settings. Dataset-dependent criteria (ML-100k, Amazon) run when the files
// are present (NLOGIC_ML100K / NLOGIC_AMAZON or the default data/ paths) and
// report SKIP otherwise.

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nlogic/baseline_mf.hpp"
#include "nlogic/experiments.hpp"
#include "nlogic/training.hpp"
#include "testutil.hpp"

using namespace nlogic;
using namespace nlogic::testutil;
namespace fs = std::filesystem;

namespace {

int g_pass = 0, g_fail = 0, g_skip = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%d] %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  (pass ? g_pass : g_fail) += 1;
}

void report_skip(int criterion, const std::string& detail) {
  std::printf("[%d] SKIP  %s\n", criterion, detail.c_str());
  std::fflush(stdout);
  g_skip += 1;
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

std::string dataset_path(const char* env, const char* fallback) {
  if (const char* p = std::getenv(env); p && *p) return p;
  if (fs::exists(fallback)) return fallback;
  return {};
}

// ---------------------------------------------------------------------------
// Criteria 1-4: the simulated small setting and its lambda sweep
// ---------------------------------------------------------------------------

struct SimStudy {
  std::vector<double> grid;
  std::vector<MultiSeedResult> by_grid;  // parallel to grid
  int idx_of(double v) const {
    for (size_t i = 0; i < grid.size(); ++i)
      if (grid[i] == v) return static_cast<int>(i);
    return -1;
  }
};

SimStudy run_sim_study(int jobs, int threads) {
  SimExperiment base;
  base.gen.n = 1000;
  base.gen.m = 5000;
  base.gen.seed = 2024;
  base.nln.dim = 64;
  base.nln.alpha = 10.0;
  base.nln.dropout = 0.2;
  base.train.lr = 1e-3;
  base.train.batch_size = 128;
  base.train.max_epochs = 100;
  base.train.patience = 10;
  base.train.threads = threads;
  base.train.reg.lambda_len = 1e-4;
  base.train.reg.lambda_theta = 1e-5;
  base.train.eval_metric = EvalMetric::accuracy;
  base.seeds = {1, 2, 3, 4, 5};
  base.jobs = jobs;

  SimStudy study;
  study.grid = {0.0, 1e-3, 1e-2, 1e-1, 10.0};
  for (double lambda_l : study.grid) {
    SimExperiment exp = base;
    exp.train.reg.lambda_l = lambda_l;
    std::printf("    ... lambda_l = %g (5 seeds)\n", lambda_l);
    std::fflush(stdout);
    study.by_grid.push_back(run_sim_experiment(exp));
  }
  return study;
}

void criterion_1(const SimStudy& study) {
  const MultiSeedResult& res =
      study.by_grid[static_cast<size_t>(study.idx_of(1e-2))];
  double acc = res.agg.at("accuracy").mean;
  double acc_se = res.agg.at("accuracy").stderr_;
  double rm = res.agg.at("rmse").mean;
  double rm_se = res.agg.at("rmse").stderr_;
  bool pass = acc >= 0.93 && rm <= 0.23;
  report(1, pass,
         fmt("sim n=1000 m=5000: accuracy %.4f+-%.4f (>= 0.93), rmse "
             "%.4f+-%.4f (<= 0.23)",
             acc, acc_se, rm, rm_se));
}

void criterion_2(const SimStudy& study) {
  double nln =
      study.by_grid[static_cast<size_t>(study.idx_of(1e-2))].agg.at("accuracy").mean;
  double ablation =
      study.by_grid[static_cast<size_t>(study.idx_of(0.0))].agg.at("accuracy").mean;
  bool pass = nln - ablation >= 0.02;
  report(2, pass,
         fmt("ablation: NLN %.4f vs NLN-R_l %.4f (margin %.4f >= 0.02)", nln,
             ablation, nln - ablation));
}

void criterion_3(const SimStudy& study) {
  double at_zero =
      study.by_grid[static_cast<size_t>(study.idx_of(0.0))].agg.at("accuracy").mean;
  double at_max = study.by_grid.back().agg.at("accuracy").mean;
  double best_interior = -1, best_lambda = 0;
  for (size_t i = 1; i + 1 < study.grid.size(); ++i) {
    double acc = study.by_grid[i].agg.at("accuracy").mean;
    if (acc > best_interior) {
      best_interior = acc;
      best_lambda = study.grid[i];
    }
  }
  bool pass = best_interior > at_zero && best_interior > at_max;
  report(3, pass,
         fmt("lambda sweep: interior best %.4f at lambda_l=%g beats "
             "lambda_l=0 (%.4f) and lambda_l=10 (%.4f)",
             best_interior, best_lambda, at_zero, at_max));
}

void criterion_4(const SimStudy& study) {
  const MultiSeedResult& res =
      study.by_grid[static_cast<size_t>(study.idx_of(1e-2))];
  double purity = res.agg.at("purity").mean;
  double se = res.agg.at("purity").stderr_;
  bool pass = purity >= 0.90;
  report(4, pass,
         fmt("variable clustering: 2-means purity %.4f+-%.4f (>= 0.90)", purity,
             se));
}

// ---------------------------------------------------------------------------
// Criteria 5-6: ML-100k tiers (dataset-gated) + Amazon loader gate
// ---------------------------------------------------------------------------

void criterion_5(int jobs, int threads) {
  std::string path = dataset_path("NLOGIC_ML100K", "data/ml-100k/u.data");
  if (path.empty()) {
    report_skip(5,
                "ML-100k preference: dataset not present (set NLOGIC_ML100K or "
                "place data/ml-100k/u.data)");
    return;
  }
  RecData data = prepare_rec(path, "ml100k", /*max_users=*/200);
  RecExperiment exp;
  exp.nln.dim = 64;
  exp.train.reg.lambda_l = 1e-5;
  exp.train.reg.lambda_len = 1e-5;
  exp.train.reg.lambda_theta = 1e-6;
  exp.train.patience = 10;
  exp.train.threads = threads;
  exp.train.eval_metric = EvalMetric::auc;
  exp.seeds = {1, 2};
  exp.jobs = jobs;
  std::printf("    ... ML-100k CI tier: first 200 users, %zu/%zu/%zu "
              "train/valid/test expressions\n",
              data.splits.train.size(), data.splits.valid.size(),
              data.splits.test.size());
  std::fflush(stdout);
  MultiSeedResult res = run_rec_preference(data, exp);
  double nln = res.agg.at("auc_nln").mean;
  double mf = res.agg.at("auc_mf").mean;
  bool pass = nln > mf && nln >= 0.70;
  report(5, pass,
         fmt("ML-100k preference (CI tier, 200 users): NLN AUC %.4f (>= 0.70) "
             "vs BiasedMF %.4f",
             nln, mf));
}

void criterion_6(int jobs, int threads) {
  std::string path = dataset_path("NLOGIC_ML100K", "data/ml-100k/u.data");
  bool topk_done = false;
  if (!path.empty()) {
    RecData data = prepare_rec(path, "ml100k", /*max_users=*/200);
    RecExperiment exp;
    exp.nln.dim = 64;
    exp.train.reg.lambda_l = 1e-5;
    exp.train.reg.lambda_len = 1e-5;
    exp.train.reg.lambda_theta = 1e-6;
    exp.train.patience = 10;
    exp.train.threads = threads;
    exp.train.eval_metric = EvalMetric::ndcg10;
    exp.seeds = {1, 2};
    exp.jobs = jobs;
    std::printf("    ... ML-100k top-K CI tier\n");
    std::fflush(stdout);
    MultiSeedResult res = run_rec_topk(data, exp);
    double nln = res.agg.at("ndcg_nln").mean;
    double mf = res.agg.at("ndcg_mf").mean;
    bool pass = nln > mf;
    report(6, pass,
           fmt("ML-100k top-K (CI tier): NLN nDCG@10 %.4f vs BiasedMF %.4f on "
               "shared candidate sets (absolutes reported, not gated)",
               nln, mf));
    topk_done = true;
  }

  std::string amazon =
      dataset_path("NLOGIC_AMAZON", "data/amazon-electronics.csv");
  if (!amazon.empty()) {
    RatingsData d = load_ratings(amazon, "amazon-csv");
    bool pass = d.interactions.size() == 1689188;
    report(6, pass, fmt("Amazon Electronics loader: %zu rows (expect 1689188)",
                        d.interactions.size()));
  } else if (!topk_done) {
    report_skip(6, "ML-100k top-K + Amazon loader: datasets not present");
  } else {
    std::printf("    (Amazon Electronics file not present; loader row-count "
                "gate not run)\n");
  }
}

// ---------------------------------------------------------------------------
// Criterion 7: always-on property suite
// ---------------------------------------------------------------------------

bool prop_fd_primitives() {
  Rng trial_rng(90);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(6);
    for (auto& v : x) v = trial_rng.normal(0, 1.5);
    auto build = [&](Tape& t) {
      NodeId vx = t.leaf(Shape{6, 1}, x.data());
      NodeId r = t.relu(t.add_const(vx, 0.6));
      NodeId safe = t.add_const(r, 0.05);
      NodeId c = t.cosine(safe, vx);
      NodeId s = t.sigmoid(t.scale(c, 3.0));
      NodeId l = t.l2_norm_sq(t.concat(vx, safe));
      return t.mul(s, t.ln(t.add_const(l, 1.0)));
    };
    Tape t;
    NodeId root = build(t);
    t.backward(root);
    NodeId vx = 0;
    std::vector<double> gx(t.grad(vx), t.grad(vx) + 6);
    auto eval = [&]() {
      Tape t2;
      return t2.value(build(t2));
    };
    Rng pick(static_cast<uint64_t>(trial));
    if (fd_check(eval, {{x.data(), gx.data(), 6}}, pick, 6).failed > 0)
      return false;
  }
  return true;
}

bool prop_fd_full_nln() {
  NlnConfig cfg;
  cfg.dim = 8;
  cfg.dropout = 0.0;
  NlnModel m = init_model(cfg, 3, 6);
  ExprNode e = parse("(v0 & v1) | ~v2");

  auto eval = [&]() {
    GraphContext c;
    c.bind(m, false);
    GraphBuild gb = build_graph(c, e);
    NodeId p = c.sim(gb.root, c.anchor_node());
    return c.tape().value(cross_entropy(c.tape(), p, true));
  };

  GraphContext ctx;
  ctx.bind(m, false);
  GraphBuild gb = build_graph(ctx, e);
  NodeId p = ctx.sim(gb.root, ctx.anchor_node());
  NodeId loss = cross_entropy(ctx.tape(), p, true);
  ctx.tape().backward(loss);

  std::vector<int> pids = m.module_param_ids();
  std::vector<std::vector<double>> grads;
  for (int pid : pids) {
    const double* g = ctx.tape().grad(ctx.param_node(pid));
    grads.emplace_back(g, g + m.ps[pid].value.size());
  }
  std::vector<double> emb_grad(m.ps[m.p_emb].value.size(), 0.0);
  for (const auto& [var, node] : ctx.bound_vars()) {
    const double* lg = ctx.tape().grad(node);
    for (int j = 0; j < 8; ++j)
      emb_grad[static_cast<size_t>(var) * 8 + j] = lg[j];
  }

  std::vector<FdSpan> spans;
  for (size_t i = 0; i < pids.size(); ++i) {
    Param& param = m.ps[pids[i]];
    spans.push_back({param.value.data(), grads[i].data(), param.value.size()});
  }
  spans.push_back({m.ps[m.p_emb].value.data(), emb_grad.data(), emb_grad.size()});
  Rng pick(8);
  FdOutcome fd = fd_check(eval, spans, pick, 10);
  return fd.failed == 0 && fd.max_rel < 1e-4;
}

bool prop_parser_roundtrip() {
  GenConfig cfg;
  cfg.n = 150;
  cfg.m = 10000;
  cfg.seed = 4242;
  Dataset ds = generate_dataset(cfg);
  for (const auto& ex : ds.examples)
    if (!(parse(render(ex.expr)) == ex.expr)) return false;
  return true;
}

bool prop_truth_oracle() {
  Rng rng(777);
  for (int trial = 0; trial < 1500; ++trial) {
    ExprNode e = random_expr(rng, 4, 3);
    uint64_t oracle = truth_table(e, 4);
    for (unsigned a = 0; a < 16u; ++a) {
      Assignment asg;
      asg.values = {static_cast<uint8_t>(a & 1),
                    static_cast<uint8_t>((a >> 1) & 1),
                    static_cast<uint8_t>((a >> 2) & 1),
                    static_cast<uint8_t>((a >> 3) & 1)};
      if (eval_truth(e, asg) != (((oracle >> a) & 1) != 0)) return false;
    }
  }
  return true;
}

bool prop_shuffle_invariance() {
  Rng rng(778);
  Rng shuffle_rng = Rng::stream(778, "shuffle-ops");
  for (int i = 0; i < 1000; ++i) {
    ExprNode e = random_expr(rng, 5, 3);
    Assignment a = random_assignment(rng, 5);
    if (eval_truth(e, a) != eval_truth(shuffle_operands(e, shuffle_rng), a))
      return false;
  }
  return true;
}

bool prop_reg_ranges_and_closed_forms() {
  NlnConfig cfg;
  cfg.dim = 16;
  cfg.dropout = 0.0;
  NlnModel m = init_model(cfg, 10, 12);
  GraphContext ctx;
  ctx.bind(m, false);
  GraphBuild gb =
      build_graph(ctx, parse("(v0 & v1 & v2) | (~v3 & v4) | v5"));
  LogicRegBuild lr = logic_reg(ctx, gb.w_set);
  for (double r : lr.report.r)
    if (!(r > 0.0 && r < 1.0)) return false;

  // trivial-module closed forms: exact NOT/AND collapse the r2/r5 terms to
  // 1 - sigmoid(alpha)
  Tape& t = ctx.tape();
  Rng rng(5);
  std::vector<double> w(16);
  for (auto& v : w) v = rng.normal();
  NodeId nw = t.leaf(Shape{16, 1}, w.data());
  double term = 1.0 - t.value(ctx.sim(nw, nw));
  return std::abs(term - 4.5397868702434395e-05) < 1e-9;
}

bool prop_split_protocol() {
  // the canonical 4-interaction example yields exactly 3 expressions
  std::vector<Interaction> stream = {
      {0, 10, 5, 100}, {0, 11, 2, 101}, {0, 12, 1, 102}, {0, 13, 4, 103}};
  std::vector<RecExpr> exprs = build_expressions(stream);
  if (exprs.size() != 3) return false;
  if (render(to_expr_node(exprs[0])) != "~v10 | v11" || exprs[0].label)
    return false;
  if (render(to_expr_node(exprs[1])) != "~(v10 & ~v11) | v12" || exprs[1].label)
    return false;
  if (render(to_expr_node(exprs[2])) != "~(v10 & ~v11 & ~v12) | v13" ||
      !exprs[2].label)
    return false;

  Rng rng(31);
  std::vector<std::vector<RecExpr>> per_user;
  size_t total = 0;
  for (int u = 0; u < 50; ++u) {
    int len = 1 + static_cast<int>(rng.below(12));
    std::vector<Interaction> s;
    for (int i = 0; i < len; ++i)
      s.push_back(
          {u, i, 1 + static_cast<int>(rng.below(5)), static_cast<int64_t>(i)});
    per_user.push_back(build_expressions(s));
    total += per_user.back().size();
  }
  RecSplits splits = split_rec(per_user);
  if (splits.train.size() + splits.valid.size() + splits.test.size() != total)
    return false;
  for (const auto& e : splits.valid)
    if (e.target_pos <= 5) return false;
  for (const auto& e : splits.test)
    if (e.target_pos <= 5) return false;
  return true;
}

bool prop_loo_101() {
  std::vector<Interaction> inters;
  for (int i = 0; i < 40; ++i) inters.push_back({0, i, i < 15 ? 5 : 2, i});
  NegSampler sampler(500, inters);
  RecExpr pos;
  pos.user = 0;
  pos.history = {{2, true}};
  pos.target = 3;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    RankTask t = leave_one_out_candidates(pos, sampler, 100, rng);
    if (t.negatives.size() != 100) return false;
    std::set<int> distinct(t.negatives.begin(), t.negatives.end());
    if (distinct.size() != 100) return false;  // + positive = 101 candidates
  }
  return true;
}

bool prop_bit_determinism() {
  GenConfig g;
  g.n = 200;
  g.m = 1000;
  g.seed = 55;
  Dataset ds = generate_dataset(g);
  Splits sp = split_dataset(ds.examples, 0.8, 0.1, 0.1, 55);
  auto run = [&]() {
    NlnConfig nc;
    nc.dim = 16;
    NlnModel model = init_model(nc, 200, 3);
    TrainConfig tc;
    tc.seed = 3;
    tc.max_epochs = 5;
    tc.patience = 5;
    tc.threads = 2;  // fixed thread count is part of the determinism contract
    tc.reg.lambda_l = 1e-2;
    tc.reg.lambda_len = 1e-4;
    tc.reg.lambda_theta = 1e-5;
    return train_pointwise(model, sp.train, sp.valid, sp.test, tc);
  };
  TrainResult a = run();
  TrainResult b = run();
  if (a.stats.size() != b.stats.size()) return false;
  for (size_t i = 0; i < a.stats.size(); ++i) {
    if (a.stats[i].train_loss != b.stats[i].train_loss) return false;
    if (a.stats[i].valid_metric != b.stats[i].valid_metric) return false;
    if (a.stats[i].test_loss != b.stats[i].test_loss) return false;
  }
  return true;
}

void criterion_7() {
  struct Item {
    const char* name;
    bool (*fn)();
  };
  Item items[] = {
      {"finite-difference gradients, primitives", prop_fd_primitives},
      {"finite-difference gradients, full NLN forward", prop_fd_full_nln},
      {"parser round-trip, 10^4 DNF expressions", prop_parser_roundtrip},
      {"truth oracle vs bitmask enumeration", prop_truth_oracle},
      {"shuffle truth-invariance", prop_shuffle_invariance},
      {"regularizer ranges and closed forms", prop_reg_ranges_and_closed_forms},
      {"rec split protocol + worked example", prop_split_protocol},
      {"leave-one-out 101 candidates", prop_loo_101},
      {"5-epoch bit determinism", prop_bit_determinism},
  };
  bool all = true;
  std::string failed;
  for (const auto& item : items) {
    bool ok = item.fn();
    if (!ok) {
      all = false;
      failed += std::string(failed.empty() ? "" : ", ") + item.name;
    }
  }
  report(7, all,
         all ? "property suite: 9/9 checks green"
             : "property suite failed: " + failed);
}

}  // namespace

int main() {
  int hw = 2;
#ifdef _OPENMP
  hw = omp_get_max_threads();
#endif
  int jobs = hw >= 2 ? 2 : 1;
  int threads = std::max(1, hw / jobs);
  if (const char* j = std::getenv("NLOGIC_ACCEPT_JOBS")) jobs = std::atoi(j);
  if (const char* t = std::getenv("NLOGIC_ACCEPT_THREADS")) threads = std::atoi(t);

  std::printf("acceptance suite: %d seed jobs x %d threads each\n", jobs, threads);
  std::printf("running criterion 7 (always-on property suite) first...\n");
  std::fflush(stdout);
  criterion_7();

  std::printf("running the simulated study (criteria 1-4)...\n");
  std::fflush(stdout);
  SimStudy study = run_sim_study(jobs, threads);
  criterion_1(study);
  criterion_2(study);
  criterion_3(study);
  criterion_4(study);

  criterion_5(jobs, threads);
  criterion_6(jobs, threads);

  std::printf("summary: %d pass, %d fail, %d skip\n", g_pass, g_fail, g_skip);
  return g_fail == 0 ? 0 : 1;
}
