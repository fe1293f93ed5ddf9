#include "nlogic/experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <sstream>

#include "nlogic/errors.hpp"
#include "nlogic/io.hpp"

namespace nlogic {

namespace fs = std::filesystem;

namespace {

std::string seed_dir(const std::string& out_dir, uint64_t seed) {
  if (out_dir.empty()) return {};
  std::string d = out_dir + "/seed_" + std::to_string(seed);
  fs::create_directories(d);
  return d;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

MultiSeedResult run_sim_experiment(const SimExperiment& exp) {
  std::vector<LabeledExpr> data;
  std::optional<Assignment> truth = exp.truth;
  int vocab;
  if (!exp.dataset_path.empty()) {
    data = read_expr_file(exp.dataset_path);
    vocab = 0;
    for (const auto& e : data) vocab = std::max(vocab, max_var_id(e.expr) + 1);
    if (exp.gen.n > vocab) vocab = exp.gen.n;
  } else {
    Dataset ds = generate_dataset(exp.gen);
    data = std::move(ds.examples);
    truth = std::move(ds.assignment);
    vocab = exp.gen.n;
  }

  auto runner = [&](uint64_t seed) {
    Splits sp = split_dataset(data, 0.8, 0.1, 0.1, seed);
    NlnModel model = init_model(exp.nln, vocab, seed);
    TrainConfig tc = exp.train;
    tc.seed = seed;
    tc.out_dir = seed_dir(exp.out_dir, seed);
    tc.config_hash = exp.config_hash;
    TrainResult tr = train_pointwise(model, sp.train, sp.valid, sp.test, tc);

    std::vector<const LabeledExpr*> test_ptr;
    for (const auto& e : sp.test) test_ptr.push_back(&e);
    SplitEval acc = evaluate_pointwise(model, test_ptr, EvalMetric::accuracy, tc.threads);
    SplitEval rm = evaluate_pointwise(model, test_ptr, EvalMetric::rmse, tc.threads);

    std::map<std::string, double> metrics;
    metrics["accuracy"] = acc.metric;
    metrics["rmse"] = rm.metric;
    metrics["best_epoch"] = static_cast<double>(tr.best_epoch);
    metrics["epochs_ran"] = static_cast<double>(tr.stats.size());
    if (truth) {
      std::vector<std::vector<double>> emb(static_cast<size_t>(vocab));
      for (int v = 0; v < vocab; ++v)
        emb[static_cast<size_t>(v)].assign(
            model.embedding_row(v), model.embedding_row(v) + model.cfg.dim);
      metrics["purity"] = cluster_variables(emb, *truth, seed).purity;
    }
    return metrics;
  };

  MultiSeedResult res = run_seeds(exp.seeds, exp.jobs, runner);
  if (!exp.out_dir.empty()) {
    fs::create_directories(exp.out_dir);
    write_results_csv(exp.out_dir + "/results.csv", "sim", res, exp.config_hash);
  }
  return res;
}

RecData prepare_rec(const std::string& path, const std::string& format,
                    int max_users) {
  RatingsData ratings = load_ratings(path, format);
  if (max_users > 0) ratings = subsample_users(ratings, max_users);
  auto streams = user_streams(ratings);
  std::vector<std::vector<RecExpr>> per_user;
  per_user.reserve(streams.size());
  for (const auto& s : streams) per_user.push_back(build_expressions(s));
  RecSplits splits = split_rec(per_user);
  NegSampler sampler(ratings.n_items, ratings.interactions);
  ColdItemStats cold = cold_item_stats(splits, ratings.n_items);
  return RecData{std::move(ratings), std::move(splits), std::move(sampler), cold};
}

MultiSeedResult run_rec_preference(const RecData& data, const RecExperiment& exp) {
  std::vector<LabeledExpr> train, valid, test;
  for (const auto& e : data.splits.train) train.push_back(to_labeled_expr(e));
  for (const auto& e : data.splits.valid) valid.push_back(to_labeled_expr(e));
  for (const auto& e : data.splits.test) test.push_back(to_labeled_expr(e));

  auto runner = [&](uint64_t seed) {
    std::map<std::string, double> metrics;
    TrainConfig tc = exp.train;
    tc.seed = seed;
    tc.eval_metric = EvalMetric::auc;
    tc.config_hash = exp.config_hash;
    if (exp.run_nln) {
      tc.out_dir = seed_dir(exp.out_dir, seed);
      NlnModel model = init_model(exp.nln, data.ratings.n_items, seed);
      TrainResult tr = train_pointwise(model, train, valid, test, tc);
      std::vector<const LabeledExpr*> test_ptr;
      for (const auto& e : test) test_ptr.push_back(&e);
      metrics["auc_nln"] =
          evaluate_pointwise(model, test_ptr, EvalMetric::auc, tc.threads).metric;
      metrics["best_epoch_nln"] = static_cast<double>(tr.best_epoch);
    }
    if (exp.run_mf) {
      MfModel mf = init_mf(data.ratings.n_users, data.ratings.n_items,
                           exp.nln.dim, seed);
      TrainConfig mc = exp.train;
      mc.seed = seed;
      mc.eval_metric = EvalMetric::auc;
      train_mf_preference(mf, data.splits.train, data.splits.valid,
                          data.splits.test, mc);
      metrics["auc_mf"] =
          evaluate_mf_preference(mf, data.splits.test).metric;
    }
    return metrics;
  };

  MultiSeedResult res = run_seeds(exp.seeds, exp.jobs, runner);
  if (!exp.out_dir.empty()) {
    fs::create_directories(exp.out_dir);
    write_results_csv(exp.out_dir + "/results.csv", "rec-preference", res,
                      exp.config_hash);
  }
  return res;
}

MultiSeedResult run_rec_topk(const RecData& data, const RecExperiment& exp,
                             int loo_negatives) {
  std::vector<RecTrainExample> train;
  for (const auto& e : data.splits.train)
    if (e.label) train.push_back(to_train_example(e));

  auto runner = [&](uint64_t seed) {
    // leave-one-out candidate sets: fixed per seed, shared by both models
    auto make_tasks = [&](const std::vector<RecExpr>& exprs, const char* tag) {
      std::vector<RankTask> tasks;
      Rng rng = Rng::stream(seed, std::string("loo-") + tag);
      for (const auto& e : exprs)
        if (e.label)
          tasks.push_back(
              leave_one_out_candidates(e, data.sampler, loo_negatives, rng));
      return tasks;
    };
    std::vector<RankTask> valid_tasks = make_tasks(data.splits.valid, "valid");
    std::vector<RankTask> test_tasks = make_tasks(data.splits.test, "test");

    std::map<std::string, double> metrics;
    TrainConfig tc = exp.train;
    tc.seed = seed;
    tc.eval_metric = EvalMetric::ndcg10;
    tc.config_hash = exp.config_hash;
    if (exp.run_nln) {
      tc.out_dir = seed_dir(exp.out_dir, seed);
      NlnModel model = init_model(exp.nln, data.ratings.n_items, seed);
      TrainResult tr = train_pairwise(model, train, valid_tasks, test_tasks,
                                      data.sampler.fn(), tc);
      metrics["ndcg_nln"] =
          evaluate_rank_tasks(model, test_tasks, tc.threads).ndcg;
      metrics["skipped_nln"] = static_cast<double>(tr.skipped_examples);
    }
    if (exp.run_mf) {
      MfModel mf = init_mf(data.ratings.n_users, data.ratings.n_items,
                           exp.nln.dim, seed);
      TrainConfig mc = exp.train;
      mc.seed = seed;
      mc.eval_metric = EvalMetric::ndcg10;
      train_mf_topk(mf, train, valid_tasks, test_tasks, data.sampler.fn(), mc);
      metrics["ndcg_mf"] = evaluate_mf_rank(mf, test_tasks).ndcg;
    }
    return metrics;
  };

  MultiSeedResult res = run_seeds(exp.seeds, exp.jobs, runner);
  if (!exp.out_dir.empty()) {
    fs::create_directories(exp.out_dir);
    write_results_csv(exp.out_dir + "/results.csv", "rec-topk", res,
                      exp.config_hash);
  }
  return res;
}

SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.grid.empty()) throw ConfigError("sweep grid must be non-empty");
  if (spec.parameter != "lambda_l" && spec.parameter != "lambda_len")
    throw ConfigError("sweep parameter must be lambda_l or lambda_len");
  if (spec.task != "sim" && !spec.rec_data)
    throw ConfigError("rec sweeps need loaded ratings data");

  SweepResult out;
  out.headline_metric = spec.task == "sim" ? "accuracy"
                        : spec.task == "rec-preference" ? "auc_nln"
                                                        : "ndcg_nln";
  for (double v : spec.grid) {
    MultiSeedResult res;
    std::vector<std::string> keep;
    if (spec.task == "sim") {
      SimExperiment exp = spec.base;
      exp.out_dir.clear();
      (spec.parameter == "lambda_l" ? exp.train.reg.lambda_l
                                    : exp.train.reg.lambda_len) = v;
      res = run_sim_experiment(exp);
      keep = {"accuracy", "rmse"};
    } else {
      RecExperiment exp = spec.rec;
      exp.out_dir.clear();
      exp.run_mf = false;  // the sweep varies NLN's regularizer only
      (spec.parameter == "lambda_l" ? exp.train.reg.lambda_l
                                    : exp.train.reg.lambda_len) = v;
      res = spec.task == "rec-preference"
                ? run_rec_preference(*spec.rec_data, exp)
                : run_rec_topk(*spec.rec_data, exp);
      keep = {out.headline_metric};
    }
    for (const auto& so : res.per_seed)
      for (const auto& [name, value] : so.metrics)
        if (std::find(keep.begin(), keep.end(), name) != keep.end())
          out.rows.push_back(SweepRow{v, so.seed, name, value});
    out.headline_by_value.emplace_back(v, res.agg.at(out.headline_metric));
  }
  return out;
}

void write_results_csv(const std::string& path, const std::string& experiment_id,
                       const MultiSeedResult& res, const std::string& config_hash) {
  std::ofstream f = open_out(path);
  std::vector<uint64_t> seeds;
  for (const auto& so : res.per_seed) seeds.push_back(so.seed);
  f << header_comment(config_hash, seeds) << "\n";
  f << "experiment,seed,metric,value\n";
  for (const auto& so : res.per_seed)
    for (const auto& [name, value] : so.metrics)
      f << experiment_id << ',' << so.seed << ',' << name << ',' << fmt(value)
        << '\n';
  for (const auto& [name, agg] : res.agg) {
    f << experiment_id << ",mean," << name << ',' << fmt(agg.mean) << '\n';
    f << experiment_id << ",stderr," << name << ',' << fmt(agg.stderr_) << '\n';
  }
}

void write_sweep_csv(const std::string& path, const SweepSpec& spec,
                     const SweepResult& res, const std::string& config_hash) {
  std::ofstream f = open_out(path);
  f << header_comment(config_hash, spec.base.seeds) << "\n";
  f << "parameter,value,seed,metric,metric_value\n";
  for (const auto& row : res.rows)
    f << spec.parameter << ',' << fmt(row.value) << ',' << row.seed << ','
      << row.metric << ',' << fmt(row.metric_value) << '\n';
  for (const auto& [v, agg] : res.headline_by_value) {
    f << spec.parameter << ',' << fmt(v) << ",mean," << res.headline_metric
      << ',' << fmt(agg.mean) << '\n';
    f << spec.parameter << ',' << fmt(v) << ",stderr," << res.headline_metric
      << ',' << fmt(agg.stderr_) << '\n';
  }
}

std::optional<ClusterDiag> export_embeddings(
    const NlnModel& model, const std::optional<Assignment>& truth,
    const std::string& path, const std::string& config_hash) {
  std::ofstream f = open_out(path);
  f << header_comment(config_hash, {model.init_seed}) << "\n";
  f << "var_id,truth";
  for (int j = 1; j <= model.cfg.dim; ++j) f << ",x_" << j;
  f << "\n";
  f.precision(17);
  for (int v = 0; v < model.vocab; ++v) {
    f << v << ',';
    if (truth) f << (truth->value(v) ? 1 : 0);
    const double* row = model.embedding_row(v);
    for (int j = 0; j < model.cfg.dim; ++j) f << ',' << row[j];
    f << '\n';
  }
  if (!truth) return std::nullopt;
  std::vector<std::vector<double>> emb(static_cast<size_t>(model.vocab));
  for (int v = 0; v < model.vocab; ++v)
    emb[static_cast<size_t>(v)].assign(model.embedding_row(v),
                                       model.embedding_row(v) + model.cfg.dim);
  ClusterDiag diag = cluster_variables(emb, *truth, model.init_seed);
  f << "# cluster purity=" << fmt(diag.purity) << " sizes=" << diag.sizes[0]
    << '/' << diag.sizes[1] << " iterations=" << diag.iterations << "\n";
  return diag;
}

std::vector<std::vector<double>> read_embeddings_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open: " + path);
  std::vector<std::vector<double>> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string col;
    int idx = 0;
    while (std::getline(ss, col, ',')) {
      if (idx >= 2) row.push_back(std::stod(col));
      ++idx;
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_assignment_file(const std::string& path, const Assignment& a) {
  std::ofstream f = open_out(path);
  f << "# nlogic " << version() << " hidden assignment (diagnostics only)\n";
  for (size_t v = 0; v < a.size(); ++v)
    f << v << '\t' << (a.values[v] ? 1 : 0) << '\n';
}

Assignment read_assignment_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open: " + path);
  Assignment a;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    long var;
    int val;
    if (!(ss >> var >> val) || (val != 0 && val != 1))
      throw DataError("bad assignment line: " + line);
    if (static_cast<size_t>(var) >= a.values.size())
      a.values.resize(static_cast<size_t>(var) + 1, 0);
    a.values[static_cast<size_t>(var)] = static_cast<uint8_t>(val);
  }
  return a;
}

}  // namespace nlogic
