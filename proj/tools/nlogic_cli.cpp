// Experiment front door: dataset generation, training, lambda sweeps, and
// embedding export, all driven by a JSON config with flag overrides.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlogic/experiments.hpp"
#include "nlogic/io.hpp"

using namespace nlogic;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const std::exception& e) {
    throw ConfigError("bad config JSON: " + std::string(e.what()));
  }
}

template <class T>
T get_or(const json& j, const char* section, const char* key, T fallback) {
  if (j.contains(section) && j[section].contains(key))
    return j[section][key].get<T>();
  return fallback;
}

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> seeds;
  size_t at = 0;
  while (at < s.size()) {
    size_t comma = s.find(',', at);
    if (comma == std::string::npos) comma = s.size();
    seeds.push_back(std::stoull(s.substr(at, comma - at)));
    at = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string seeds_flag;
  int jobs = 0;
  int threads = 0;
};

struct ResolvedRun {
  SimExperiment sim;
  RecExperiment rec;
  std::string task = "sim";
  std::string data_path;
  std::string data_format = "ml100k";
  int max_users = 0;
  std::string model = "both";
  json merged;
};

// precedence: flags > NLOGIC_SEED > config JSON > defaults
ResolvedRun resolve(const json& cfg, const CommonOpts& common,
                    const std::map<std::string, std::optional<double>>& num_flags,
                    const std::string& task_flag, const std::string& data_flag,
                    const std::string& format_flag, int max_users_flag,
                    const std::string& model_flag, bool write_ckpts) {
  ResolvedRun r;
  r.task = task_flag.empty() ? cfg.value("task", "sim") : task_flag;
  r.data_path = data_flag.empty() && cfg.contains("data")
                    ? cfg["data"].value("path", "")
                    : data_flag;
  r.data_format = format_flag.empty() && cfg.contains("data")
                      ? cfg["data"].value("format", "ml100k")
                      : (format_flag.empty() ? "ml100k" : format_flag);
  r.max_users = max_users_flag > 0
                    ? max_users_flag
                    : (cfg.contains("data") ? cfg["data"].value("max_users", 0) : 0);
  r.model = model_flag.empty() ? cfg.value("model", "both") : model_flag;

  GenConfig gen;
  gen.n = get_or(cfg, "gen", "n", gen.n);
  gen.m = get_or(cfg, "gen", "m", gen.m);
  gen.seed = get_or<uint64_t>(cfg, "gen", "seed", gen.seed);
  gen.clause_min = get_or(cfg, "gen", "clause_min", gen.clause_min);
  gen.clause_max = get_or(cfg, "gen", "clause_max", gen.clause_max);
  gen.lit_min = get_or(cfg, "gen", "lit_min", gen.lit_min);
  gen.lit_max = get_or(cfg, "gen", "lit_max", gen.lit_max);

  NlnConfig nln;
  nln.dim = get_or(cfg, "nln", "dim", nln.dim);
  nln.alpha = get_or(cfg, "nln", "alpha", nln.alpha);
  nln.dropout = get_or(cfg, "nln", "dropout", nln.dropout);

  TrainConfig train;
  train.lr = get_or(cfg, "train", "lr", train.lr);
  train.batch_size = get_or(cfg, "train", "batch_size", train.batch_size);
  train.max_epochs = get_or(cfg, "train", "max_epochs", train.max_epochs);
  train.patience = get_or(cfg, "train", "patience", train.patience);
  train.threads = get_or(cfg, "train", "threads", train.threads);
  // defaults per experiment family; lambda_theta default follows the task
  double def_theta = r.task == "sim" ? 1e-5 : 1e-6;
  train.reg.lambda_l = get_or(cfg, "train", "lambda_l",
                              r.task == "sim" ? 1e-2 : 1e-5);
  train.reg.lambda_len = get_or(cfg, "train", "lambda_len",
                                r.task == "sim" ? 1e-4 : 1e-5);
  train.reg.lambda_theta = get_or(cfg, "train", "lambda_theta", def_theta);
  train.write_checkpoints = write_ckpts || get_or(cfg, "train", "write_checkpoints", false);

  auto flag = [&](const char* name) { return num_flags.at(name); };
  if (flag("lambda-l")) train.reg.lambda_l = *flag("lambda-l");
  if (flag("lambda-len")) train.reg.lambda_len = *flag("lambda-len");
  if (flag("lambda-theta")) train.reg.lambda_theta = *flag("lambda-theta");
  if (flag("lr")) train.lr = *flag("lr");
  if (flag("epochs")) train.max_epochs = static_cast<int>(*flag("epochs"));
  if (flag("patience")) train.patience = static_cast<int>(*flag("patience"));
  if (flag("batch")) train.batch_size = static_cast<int>(*flag("batch"));
  if (flag("dim")) nln.dim = static_cast<int>(*flag("dim"));
  if (flag("n")) gen.n = static_cast<int>(*flag("n"));
  if (flag("m")) gen.m = static_cast<int>(*flag("m"));
  if (common.threads > 0) train.threads = common.threads;

  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  if (cfg.contains("seeds")) seeds = cfg["seeds"].get<std::vector<uint64_t>>();
  if (const char* env = std::getenv("NLOGIC_SEED"))
    seeds = parse_seed_list(env);
  if (!common.seeds_flag.empty()) seeds = parse_seed_list(common.seeds_flag);

  int jobs = common.jobs > 0 ? common.jobs : cfg.value("jobs", 1);
  std::string out_dir =
      !common.out_dir.empty() ? common.out_dir : cfg.value("out_dir", "out");
  std::string dataset_path =
      cfg.contains("gen") ? cfg["gen"].value("dataset_path", "") : "";

  r.sim.gen = gen;
  r.sim.dataset_path = dataset_path;
  r.sim.nln = nln;
  r.sim.train = train;
  r.sim.seeds = seeds;
  r.sim.jobs = jobs;
  r.sim.out_dir = out_dir;

  r.rec.nln = nln;
  r.rec.train = train;
  r.rec.seeds = seeds;
  r.rec.jobs = jobs;
  r.rec.out_dir = out_dir;
  r.rec.run_nln = r.model == "nln" || r.model == "both";
  r.rec.run_mf = r.model == "mf" || r.model == "both";

  // canonical merged config: the hash embedded in every output header
  json merged;
  merged["task"] = r.task;
  merged["data"] = {{"path", r.data_path},
                    {"format", r.data_format},
                    {"max_users", r.max_users}};
  merged["gen"] = {{"n", gen.n},       {"m", gen.m},
                   {"seed", gen.seed}, {"clause_min", gen.clause_min},
                   {"clause_max", gen.clause_max}, {"lit_min", gen.lit_min},
                   {"lit_max", gen.lit_max}, {"dataset_path", dataset_path}};
  merged["nln"] = {{"dim", nln.dim}, {"alpha", nln.alpha}, {"dropout", nln.dropout}};
  merged["train"] = {{"lr", train.lr},
                     {"batch_size", train.batch_size},
                     {"max_epochs", train.max_epochs},
                     {"patience", train.patience},
                     {"lambda_l", train.reg.lambda_l},
                     {"lambda_len", train.reg.lambda_len},
                     {"lambda_theta", train.reg.lambda_theta},
                     {"threads", train.threads}};
  merged["seeds"] = seeds;
  merged["model"] = r.model;
  r.merged = merged;
  std::string hash = config_hash_hex(merged.dump());
  r.sim.config_hash = hash;
  r.rec.config_hash = hash;
  r.sim.train.config_hash = hash;
  r.rec.train.config_hash = hash;
  return r;
}

void print_aggregates(const MultiSeedResult& res) {
  for (const auto& [name, agg] : res.agg)
    std::printf("  %-16s %.4f +- %.4f\n", name.c_str(), agg.mean, agg.stderr_);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"nlogic: differentiable propositional logic experiments"};
  app.require_subcommand(1);

  // --- simgen ---
  auto* simgen = app.add_subcommand("simgen", "generate a simulated DNF dataset");
  GenConfig gen;
  std::string simgen_out = "expressions.tsv";
  simgen->add_option("--n", gen.n, "variable count");
  simgen->add_option("--m", gen.m, "expression count");
  simgen->add_option("--seed", gen.seed, "generator seed");
  simgen->add_option("--clause-min", gen.clause_min, "min clauses");
  simgen->add_option("--clause-max", gen.clause_max, "max clauses");
  simgen->add_option("--lit-min", gen.lit_min, "min literals per clause");
  simgen->add_option("--lit-max", gen.lit_max, "max literals per clause");
  simgen->add_option("--out", simgen_out, "output expression file");

  // --- shared train/sweep options ---
  CommonOpts common;
  std::string task_flag, data_flag, format_flag, model_flag;
  int max_users_flag = 0;
  bool write_ckpts = false;
  std::map<std::string, std::optional<double>> num_flags{
      {"lambda-l", std::nullopt},  {"lambda-len", std::nullopt},
      {"lambda-theta", std::nullopt},
      {"lr", std::nullopt},        {"epochs", std::nullopt},
      {"patience", std::nullopt},  {"batch", std::nullopt},
      {"dim", std::nullopt},       {"n", std::nullopt},
      {"m", std::nullopt}};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seeds", common.seeds_flag, "comma-separated seed list");
    sub->add_option("--jobs", common.jobs, "parallel seed sessions");
    sub->add_option("--threads", common.threads, "batch/eval threads per session");
    sub->add_option("--task", task_flag, "sim | rec-preference | rec-topk");
    sub->add_option("--data", data_flag, "ratings file (rec tasks)");
    sub->add_option("--format", format_flag, "ml100k | amazon-csv");
    sub->add_option("--max-users", max_users_flag, "keep only the first N users");
    sub->add_option("--model", model_flag, "nln | mf | both (rec tasks)");
    sub->add_flag("--write-checkpoints", write_ckpts,
                  "write ckpt-<epoch>.json per validation improvement");
    for (auto& [name, slot] : num_flags)
      sub->add_option_function<double>(
          "--" + name, [&slot = slot](double v) { slot = v; }, "override");
  };

  auto* train = app.add_subcommand("train", "train and evaluate over seeds");
  add_common(train);

  auto* sweep = app.add_subcommand("sweep", "grid over a regularizer weight");
  add_common(sweep);
  std::string sweep_param = "lambda_l";
  std::string sweep_grid = "0,1e-4,1e-3,1e-2,1e-1,1,10";
  sweep->add_option("--param", sweep_param, "lambda_l | lambda_len");
  sweep->add_option("--grid", sweep_grid, "comma-separated weights");

  auto* exp_emb = app.add_subcommand("export-embeddings",
                                     "dump variable embeddings from a checkpoint");
  std::string ckpt_path, emb_out = "embeddings.csv", truth_path;
  exp_emb->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required();
  exp_emb->add_option("--out", emb_out, "output CSV");
  exp_emb->add_option("--truth", truth_path, "hidden assignment file (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  if (simgen->parsed()) {
    Dataset ds = generate_dataset(gen);
    long positives = 0;
    for (const auto& e : ds.examples) positives += e.label ? 1 : 0;
    json merged{{"task", "simgen"}, {"n", gen.n},       {"m", gen.m},
                {"seed", gen.seed}, {"clause_min", gen.clause_min},
                {"clause_max", gen.clause_max}, {"lit_min", gen.lit_min},
                {"lit_max", gen.lit_max}};
    std::string hash = config_hash_hex(merged.dump());
    write_expr_file(simgen_out, ds.examples,
                    {std::string("nlogic ") + version() + " config=" + hash +
                     " seeds=" + std::to_string(gen.seed)});
    write_assignment_file(simgen_out + ".assignment", ds.assignment);
    std::printf("wrote %zu expressions to %s (label base rate %.4f)\n",
                ds.examples.size(), simgen_out.c_str(),
                static_cast<double>(positives) / static_cast<double>(gen.m));
    return 0;
  }

  json cfg = load_config(common.config_path);
  ResolvedRun r = resolve(cfg, common, num_flags, task_flag, data_flag,
                          format_flag, max_users_flag, model_flag, write_ckpts);

  if (train->parsed()) {
    fs::create_directories(r.sim.out_dir);
    if (r.task == "sim") {
      MultiSeedResult res = run_sim_experiment(r.sim);
      std::printf("sim task over %zu seeds:\n", r.sim.seeds.size());
      print_aggregates(res);
    } else if (r.task == "rec-preference" || r.task == "rec-topk") {
      if (r.data_path.empty())
        throw ConfigError("rec tasks need --data <ratings file>");
      RecData data = prepare_rec(r.data_path, r.data_format, r.max_users);
      write_id_sidecar(r.rec.out_dir + "/item_ids.tsv", data.ratings.item_names);
      write_id_sidecar(r.rec.out_dir + "/user_ids.tsv", data.ratings.user_names);
      std::printf("loaded %zu interactions, %d users, %d items; "
                  "%zu/%zu/%zu train/valid/test expressions; %ld cold items\n",
                  data.ratings.interactions.size(), data.ratings.n_users,
                  data.ratings.n_items, data.splits.train.size(),
                  data.splits.valid.size(), data.splits.test.size(),
                  data.cold.cold_items);
      MultiSeedResult res = r.task == "rec-preference"
                                ? run_rec_preference(data, r.rec)
                                : run_rec_topk(data, r.rec);
      std::printf("%s over %zu seeds:\n", r.task.c_str(), r.rec.seeds.size());
      print_aggregates(res);
    } else {
      throw ConfigError("unknown task: " + r.task);
    }
    return 0;
  }

  if (sweep->parsed()) {
    SweepSpec spec;
    spec.task = r.task;
    spec.parameter = sweep_param;
    for (double v : [&] {
           std::vector<double> g;
           size_t at = 0;
           while (at < sweep_grid.size()) {
             size_t comma = sweep_grid.find(',', at);
             if (comma == std::string::npos) comma = sweep_grid.size();
             g.push_back(std::stod(sweep_grid.substr(at, comma - at)));
             at = comma + 1;
           }
           return g;
         }())
      spec.grid.push_back(v);
    spec.base = r.sim;
    spec.rec = r.rec;
    std::optional<RecData> rec_data;
    if (r.task != "sim") {
      if (r.data_path.empty())
        throw ConfigError("rec sweeps need --data <ratings file>");
      rec_data.emplace(prepare_rec(r.data_path, r.data_format, r.max_users));
      spec.rec_data = &*rec_data;
    }
    SweepResult res = run_sweep(spec);
    fs::create_directories(r.sim.out_dir);
    write_sweep_csv(r.sim.out_dir + "/sweep.csv", spec, res, r.sim.config_hash);
    std::printf("sweep over %s (%s):\n", spec.parameter.c_str(), r.task.c_str());
    for (const auto& [v, agg] : res.headline_by_value)
      std::printf("  %-10g %s %.4f +- %.4f\n", v, res.headline_metric.c_str(),
                  agg.mean, agg.stderr_);
    return 0;
  }

  if (exp_emb->parsed()) {
    NlnModel model = load_checkpoint(ckpt_path);
    std::optional<Assignment> truth;
    if (!truth_path.empty()) truth = read_assignment_file(truth_path);
    json merged{{"task", "export-embeddings"}, {"checkpoint", ckpt_path}};
    auto diag = export_embeddings(model, truth, emb_out,
                                  config_hash_hex(merged.dump()));
    std::printf("wrote %d embedding rows to %s\n", model.vocab, emb_out.c_str());
    if (diag)
      std::printf("cluster purity %.4f (sizes %d/%d, %d iterations)\n",
                  diag->purity, diag->sizes[0], diag->sizes[1], diag->iterations);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
