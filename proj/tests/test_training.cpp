#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "nlogic/experiments.hpp"
#include "nlogic/training.hpp"
#include "testutil.hpp"

using namespace nlogic;
using namespace nlogic::testutil;

namespace {

struct TinyTask {
  Dataset ds;
  std::vector<LabeledExpr> train, valid, test;
};

TinyTask tiny_task(int n = 5, int m = 10, uint64_t seed = 3) {
  TinyTask t;
  GenConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.lit_max = std::min(5, n);
  cfg.seed = seed;
  t.ds = generate_dataset(cfg);
  // deliberately overlapping splits: the overfit sanity checks memorization
  t.train = t.ds.examples;
  t.valid = t.ds.examples;
  t.test = t.ds.examples;
  return t;
}

TrainConfig tiny_config(uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch_size = 128;
  cfg.max_epochs = 100;
  cfg.patience = 100;  // no early stop in the tiny runs
  cfg.threads = 1;
  cfg.reg.lambda_l = 1e-2;
  cfg.reg.lambda_len = 1e-4;
  cfg.reg.lambda_theta = 1e-5;
  cfg.eval_metric = EvalMetric::accuracy;
  return cfg;
}

NlnConfig tiny_nln(int dim = 16) {
  NlnConfig cfg;
  cfg.dim = dim;
  cfg.dropout = 0.2;
  return cfg;
}

}  // namespace

TEST_CASE("cross_entropy worked values and clamping") {
  Tape t;
  CHECK(t.value(cross_entropy(t, t.constant(0.5), true)) ==
        doctest::Approx(0.6931).epsilon(1e-3));
  CHECK(t.value(cross_entropy(t, t.constant(0.9999546), true)) ==
        doctest::Approx(4.54e-5).epsilon(1e-2));
  CHECK(t.value(cross_entropy(t, t.constant(0.0), true)) ==
        doctest::Approx(std::log(1e7)));
  CHECK(t.value(cross_entropy(t, t.constant(1.0), false)) ==
        doctest::Approx(std::log(1e7)));
  CHECK(cross_entropy_value(0.0, true) == doctest::Approx(16.118).epsilon(1e-3));
}

TEST_CASE("pairwise_loss worked values and softplus convexity") {
  Tape t;
  CHECK(t.value(pairwise_loss(t, t.constant(0.3), t.constant(0.3))) ==
        doctest::Approx(0.6931).epsilon(1e-3));
  CHECK(t.value(pairwise_loss(t, t.constant(10.0), t.constant(0.0))) ==
        doctest::Approx(4.54e-5).epsilon(1e-2));

  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    double sum = pairwise_loss_value(a, b) + pairwise_loss_value(b, a);
    CHECK(sum >= 2.0 * std::log(2.0) - 1e-12);
  }
}

TEST_CASE("gradient flow: one batch touches every module and the embeddings") {
  TinyTask task = tiny_task(6, 16, 5);
  NlnModel model = init_model(tiny_nln(), 6, 2);
  TrainConfig cfg = tiny_config();
  BatchEngine engine(1);
  std::vector<const LabeledExpr*> batch;
  for (const auto& e : task.train) batch.push_back(&e);

  BatchStats bs = engine.run_pointwise(model, batch, 0, 0, cfg);
  CHECK(bs.task_count == 16);
  CHECK(bs.total_loss > 0);

  auto grad_norm = [&](int pid) {
    double acc = 0;
    for (double g : model.ps[pid].grad) acc += std::abs(g);
    return acc;
  };
  for (int pid : model.module_param_ids()) CHECK(grad_norm(pid) > 0.0);
  CHECK(grad_norm(model.p_emb) > 0.0);
  // frozen anchor receives no update
  AdamState before = model.adam;
  std::vector<double> anchor = model.ps[model.p_anchor].value;
  adam_step(model.ps, model.adam, cfg.lr);
  CHECK(model.ps[model.p_anchor].value == anchor);
  CHECK(model.adam.t == before.t + 1);
}

TEST_CASE("overfit sanity: 10 expressions over 5 variables reach accuracy 1") {
  TinyTask task = tiny_task(5, 10, 3);
  NlnModel model = init_model(tiny_nln(), 5, 1);
  TrainConfig cfg = tiny_config(1);
  // one batch per epoch at this scale: raise lr so 100 Adam steps memorize
  cfg.lr = 0.01;
  // select on rmse so the best model is a confident one, not the first
  // epoch that happens to touch accuracy 1.0
  cfg.eval_metric = EvalMetric::rmse;
  TrainResult res = train_pointwise(model, task.train, task.valid, task.test, cfg);
  CHECK(res.stats.size() <= 100);

  // training accuracy reaches 1.0 on the restored best model
  std::vector<const LabeledExpr*> ptr;
  for (const auto& e : task.train) ptr.push_back(&e);
  SplitEval ev = evaluate_pointwise(model, ptr, EvalMetric::accuracy, 1);
  CHECK(ev.metric == doctest::Approx(1.0));

  // mean prediction on true-labeled examples is confidently high
  std::vector<const ExprNode*> true_exprs;
  for (const auto& e : task.train)
    if (e.label) true_exprs.push_back(&e.expr);
  REQUIRE(!true_exprs.empty());
  std::vector<double> p = predict_all(model, true_exprs, 1);
  double mean = 0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(p.size());
  CHECK(mean > 0.9);

}

TEST_CASE("r1 descent drives NOT(T) away from T") {
  // isolates the negation law: full-run sim(F,T) < 0.5 is asserted by the
  // acceptance suite on the desk-scale simulated task
  NlnConfig nc;
  nc.dim = 16;
  nc.dropout = 0.0;
  NlnModel m = init_model(nc, 2, 1);
  double first = 0, last = 0;
  for (int step = 0; step <= 200; ++step) {
    m.ps.zero_grad();
    GraphContext ctx;
    ctx.bind(m, false);
    NodeId f = ctx.false_vec();
    NodeId s = ctx.sim(f, ctx.anchor_node());
    if (step == 0) first = ctx.tape().value(s);
    last = ctx.tape().value(s);
    ctx.tape().backward(s);
    for (int pid : {m.p_not_h1, m.p_not_h2, m.p_not_b}) {
      Param& p = m.ps[pid];
      const double* g = ctx.tape().grad(ctx.param_node(pid));
      for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = g[i];
    }
    adam_step(m.ps, m.adam, 0.01);
  }
  CHECK(first > 0.5);
  CHECK(last < 0.01);
}

TEST_CASE("determinism: same seed, same losses for 5 epochs") {
  TinyTask task = tiny_task(8, 32, 9);
  auto run = [&]() {
    NlnModel model = init_model(tiny_nln(8), 8, 4);
    TrainConfig cfg = tiny_config(7);
    cfg.max_epochs = 5;
    return train_pointwise(model, task.train, task.valid, task.test, cfg);
  };
  TrainResult a = run();
  TrainResult b = run();
  REQUIRE(a.stats.size() == b.stats.size());
  for (size_t i = 0; i < a.stats.size(); ++i) {
    CHECK(a.stats[i].train_loss == b.stats[i].train_loss);
    CHECK(a.stats[i].valid_loss == b.stats[i].valid_loss);
    CHECK(a.stats[i].test_metric == b.stats[i].test_metric);
    for (int r = 0; r < 10; ++r)
      CHECK(a.stats[i].reg.r[static_cast<size_t>(r)] ==
            b.stats[i].reg.r[static_cast<size_t>(r)]);
  }
}

TEST_CASE("early stopping returns the best-epoch model, never the last") {
  TinyTask task = tiny_task(6, 24, 11);
  NlnModel model = init_model(tiny_nln(8), 6, 3);
  TrainConfig cfg = tiny_config(5);
  cfg.max_epochs = 40;
  cfg.patience = 4;
  TrainResult res = train_pointwise(model, task.train, task.valid, task.test, cfg);

  REQUIRE(res.best_epoch >= 0);
  double best_valid = -1;
  for (const auto& es : res.stats) best_valid = std::max(best_valid, es.valid_metric);
  CHECK(res.best_valid_metric == doctest::Approx(best_valid));
  CHECK(res.stats[static_cast<size_t>(res.best_epoch)].valid_metric ==
        doctest::Approx(best_valid));

  // restored model reproduces the best epoch's validation metric
  std::vector<const LabeledExpr*> ptr;
  for (const auto& e : task.valid) ptr.push_back(&e);
  SplitEval ev = evaluate_pointwise(model, ptr, EvalMetric::accuracy, 1);
  CHECK(ev.metric == doctest::Approx(best_valid));
}

TEST_CASE("NLN-R_l ablation is the same path with lambda_l = 0") {
  TinyTask task = tiny_task(6, 16, 2);
  NlnModel model = init_model(tiny_nln(8), 6, 3);
  TrainConfig cfg = tiny_config(5);
  cfg.max_epochs = 3;
  cfg.reg.lambda_l = 0.0;
  TrainResult res = train_pointwise(model, task.train, task.valid, task.test, cfg);
  for (const auto& es : res.stats) CHECK_FALSE(es.has_reg);
}

TEST_CASE("logic regularizer trend: summed laws do not grow over training") {
  TinyTask task = tiny_task(8, 64, 21);
  NlnModel model = init_model(tiny_nln(12), 8, 6);
  TrainConfig cfg = tiny_config(9);
  cfg.max_epochs = 10;
  TrainResult res = train_pointwise(model, task.train, task.valid, task.test, cfg);
  REQUIRE(res.stats.size() >= 2);
  auto total = [](const EpochStats& es) {
    double s = 0;
    for (double r : es.reg.r) s += r;
    return s;
  };
  CHECK(total(res.stats.back()) <= total(res.stats.front()) + 1e-9);
}

TEST_CASE("checkpoint resume continues bit-identically") {
  namespace fs = std::filesystem;
  TinyTask task = tiny_task(6, 24, 14);
  TrainConfig cfg = tiny_config(3);
  cfg.max_epochs = 5;
  cfg.patience = 100;

  NlnModel straight = init_model(tiny_nln(8), 6, 9);
  TrainResult full = train_pointwise(straight, task.train, task.valid, task.test, cfg);

  NlnModel part = init_model(tiny_nln(8), 6, 9);
  TrainConfig cfg3 = cfg;
  cfg3.max_epochs = 3;
  cfg3.eval_metric = EvalMetric::rmse;  // improves steadily on this fixture
  TrainResult part_res =
      train_pointwise(part, task.train, task.valid, task.test, cfg3);
  // the fixture must end at its best epoch so the restored state is the
  // terminal epoch-2 state
  REQUIRE(part_res.best_epoch == 2);
  std::string path = (fs::temp_directory_path() / "nlogic_resume.json").string();
  save_checkpoint(part, 2, "h", path);

  int epoch = -1;
  NlnModel resumed = load_checkpoint(path, &epoch);
  CHECK(epoch == 2);
  TrainResult rest =
      train_pointwise(resumed, task.train, task.valid, task.test, cfg, epoch + 1);

  // continuation reproduces the straight run's remaining epochs bit-for-bit
  REQUIRE(rest.stats.size() == 2);
  for (size_t i = 0; i < rest.stats.size(); ++i) {
    const EpochStats& a = rest.stats[i];
    const EpochStats& b = full.stats[3 + i];
    REQUIRE(a.epoch == b.epoch);
    REQUIRE(a.train_loss == b.train_loss);
    REQUIRE(a.valid_loss == b.valid_loss);
    REQUIRE(a.test_loss == b.test_loss);
    REQUIRE(a.valid_metric == b.valid_metric);
  }
  fs::remove(path);
}

TEST_CASE("empty splits are rejected") {
  TinyTask task = tiny_task(5, 8, 1);
  NlnModel model = init_model(tiny_nln(8), 5, 1);
  TrainConfig cfg = tiny_config();
  std::vector<LabeledExpr> empty;
  CHECK_THROWS_AS(
      train_pointwise(model, empty, task.valid, task.test, cfg), ConfigError);
  CHECK_THROWS_AS(
      train_pointwise(model, task.train, empty, task.test, cfg), ConfigError);
}

TEST_CASE("run_seeds aggregation: worked values and order invariance") {
  auto constant_runner = [](uint64_t) {
    return std::map<std::string, double>{{"metric", 0.9}};
  };
  MultiSeedResult c = run_seeds({1, 2, 3, 4, 5}, 1, constant_runner);
  CHECK(c.agg.at("metric").mean == doctest::Approx(0.9));
  CHECK(c.agg.at("metric").stderr_ == doctest::Approx(0.0));

  auto two_point = [](uint64_t seed) {
    return std::map<std::string, double>{{"m", seed == 1 ? 0.8 : 1.0}};
  };
  MultiSeedResult t = run_seeds({1, 2}, 1, two_point);
  CHECK(t.agg.at("m").mean == doctest::Approx(0.9));
  CHECK(t.agg.at("m").stderr_ == doctest::Approx(0.1));

  auto by_seed = [](uint64_t seed) {
    return std::map<std::string, double>{{"m", static_cast<double>(seed) / 10.0}};
  };
  MultiSeedResult fwd = run_seeds({1, 2, 3}, 1, by_seed);
  MultiSeedResult rev = run_seeds({3, 2, 1}, 2, by_seed);
  CHECK(fwd.agg.at("m").mean == doctest::Approx(rev.agg.at("m").mean));
  CHECK(fwd.agg.at("m").stderr_ == doctest::Approx(rev.agg.at("m").stderr_));
}

TEST_CASE("pairwise training improves ranking on a tiny planted task") {
  // 12 items; users like low item ids: planted preference structure
  const int n_items = 12;
  std::vector<RecTrainExample> train;
  std::vector<Interaction> inters;
  Rng rng(7);
  for (int u = 0; u < 8; ++u) {
    std::vector<std::pair<int, bool>> hist;
    for (int k = 0; k < 4; ++k) {
      int item = static_cast<int>(rng.below(n_items));
      bool liked = item < 6;
      hist.emplace_back(item, liked);
      inters.push_back({u, item, liked ? 5 : 2, k});
    }
    for (int k = 0; k < 3; ++k) {
      RecTrainExample ex;
      ex.user = u;
      ex.history = hist;
      ex.pos_item = static_cast<int>(rng.below(6));  // positives are low ids
      inters.push_back({u, ex.pos_item, 5, 10 + k});
      train.push_back(std::move(ex));
    }
  }
  NegSampler sampler(n_items, inters);

  auto make_task = [&](int u, int pos) {
    RankTask t;
    t.user = u;
    t.history = train[static_cast<size_t>(u * 3)].history;
    t.pos_item = pos;
    for (int i = 6; i < 12; ++i) t.negatives.push_back(i);  // disliked half
    return t;
  };
  std::vector<RankTask> valid, test;
  for (int u = 0; u < 8; ++u) {
    valid.push_back(make_task(u, static_cast<int>(rng.below(3))));
    test.push_back(make_task(u, 3 + static_cast<int>(rng.below(3))));
  }

  NlnModel model = init_model(tiny_nln(12), n_items, 4);
  TrainConfig cfg = tiny_config(2);
  cfg.max_epochs = 60;
  cfg.patience = 60;
  cfg.eval_metric = EvalMetric::ndcg10;
  RankEval before = evaluate_rank_tasks(model, test, 1);
  TrainResult res = train_pairwise(model, train, valid, test, sampler.fn(), cfg);
  RankEval after = evaluate_rank_tasks(model, test, 1);
  CHECK(after.ndcg > before.ndcg);
  CHECK(res.best_epoch >= 0);
}

TEST_CASE("pairwise: negatives resample across epochs; e- shares history") {
  const int n_items = 50;
  std::vector<Interaction> inters;
  inters.push_back({0, 0, 5, 0});
  NegSampler sampler(n_items, inters);
  NegSampleFn fn = sampler.fn();

  std::set<int> seen;
  for (int epoch = 0; epoch < 20; ++epoch) {
    Rng rng = Rng::stream(3, "negative-sampling", static_cast<uint64_t>(epoch), 0);
    int neg = fn(0, rng);
    CHECK(neg >= 0);
    CHECK_FALSE(sampler.is_liked(0, neg));
    seen.insert(neg);
  }
  CHECK(seen.size() > 5);  // high probability with a 49-item pool
}

TEST_CASE("curves.csv carries the reg columns on train rows") {
  namespace fs = std::filesystem;
  TinyTask task = tiny_task(5, 10, 3);
  NlnModel model = init_model(tiny_nln(8), 5, 1);
  TrainConfig cfg = tiny_config(1);
  cfg.max_epochs = 2;
  std::string dir = (fs::temp_directory_path() / "nlogic_curves_test").string();
  fs::create_directories(dir);
  cfg.out_dir = dir;
  cfg.config_hash = "deadbeef";
  train_pointwise(model, task.train, task.valid, task.test, cfg);

  std::ifstream f(dir + "/curves.csv");
  REQUIRE(f.good());
  std::string line;
  std::getline(f, line);
  CHECK(line.find("# nlogic") == 0);
  CHECK(line.find("deadbeef") != std::string::npos);
  std::getline(f, line);
  CHECK(line ==
        "epoch,split,loss,metric,r1,r2,r3,r4,r5,r6,r7,r8,r9,r10,length,param");
  std::getline(f, line);
  CHECK(line.find("0,train,") == 0);
  fs::remove_all(dir);
}
