#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlogic/baseline_mf.hpp"
#include "nlogic/logic_ast.hpp"
#include "nlogic/nln_model.hpp"
#include "nlogic/rec_pipeline.hpp"
#include "nlogic/training.hpp"

namespace nlogic {

// One experiment = one task trained over a list of seeds, aggregated as
// mean +- standard error. Everything here is driven from a single top-level
// seed per run, expanded into named streams.

struct SimExperiment {
  GenConfig gen;                  // used when dataset_path is empty
  std::string dataset_path;       // optional pre-generated expression file
  std::optional<Assignment> truth;  // enables the clustering diagnostic
  NlnConfig nln;
  TrainConfig train;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  int jobs = 1;
  std::string out_dir;  // optional: seed_<s>/curves.csv + results.csv
  std::string config_hash = "0";
};

// Per-seed: 80/10/10 split, init, point-wise training, test accuracy + rmse
// (and 2-means purity when the hidden assignment is known).
MultiSeedResult run_sim_experiment(const SimExperiment& exp);

struct RecData {
  RatingsData ratings;
  RecSplits splits;
  NegSampler sampler;
  ColdItemStats cold;
};

RecData prepare_rec(const std::string& path, const std::string& format,
                    int max_users = 0);

struct RecExperiment {
  NlnConfig nln;
  TrainConfig train;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  int jobs = 1;
  std::string out_dir;
  std::string config_hash = "0";
  bool run_nln = true;
  bool run_mf = true;  // BiasedMF comparison on the same splits
};

// Preference prediction: NLN on the logic expressions, BiasedMF on the same
// (user, target, label) stream; metrics auc_nln / auc_mf per seed.
MultiSeedResult run_rec_preference(const RecData& data, const RecExperiment& exp);

// Top-K: pairwise training on positive expressions; leave-one-out candidate
// sets (100 negatives) fixed per seed and shared by both models; metrics
// ndcg_nln / ndcg_mf per seed.
MultiSeedResult run_rec_topk(const RecData& data, const RecExperiment& exp,
                             int loo_negatives = 100);

struct SweepSpec {
  std::string parameter = "lambda_l";  // or "lambda_len"
  std::vector<double> grid;
  std::string task = "sim";  // sim | rec-preference | rec-topk
  SimExperiment base;
  const RecData* rec_data = nullptr;  // required for the rec tasks
  RecExperiment rec;
};

struct SweepRow {
  double value = 0;
  uint64_t seed = 0;
  std::string metric;
  double metric_value = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // per grid value: seed aggregate of the task's headline metric
  // (sim accuracy / rec AUC / rec nDCG@10)
  std::vector<std::pair<double, Aggregate>> headline_by_value;
  std::string headline_metric = "accuracy";
};

SweepResult run_sweep(const SweepSpec& spec);

// results.csv convention: `experiment,seed,metric,value` plus mean/stderr rows.
void write_results_csv(const std::string& path, const std::string& experiment_id,
                       const MultiSeedResult& res, const std::string& config_hash);
void write_sweep_csv(const std::string& path, const SweepSpec& spec,
                     const SweepResult& res, const std::string& config_hash);

// embeddings.csv: var_id, truth (blank when unknown), x_1..x_d; when truth is
// available the 2-means diagnostic is appended as trailing comments.
std::optional<ClusterDiag> export_embeddings(const NlnModel& model,
                                             const std::optional<Assignment>& truth,
                                             const std::string& path,
                                             const std::string& config_hash);

// Re-import of the vector block of embeddings.csv (round-trip checks).
std::vector<std::vector<double>> read_embeddings_csv(const std::string& path);

void write_assignment_file(const std::string& path, const Assignment& a);
Assignment read_assignment_file(const std::string& path);

}  // namespace nlogic
