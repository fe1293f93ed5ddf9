#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nlogic/logic_ast.hpp"
#include "nlogic/metrics.hpp"
#include "nlogic/nln_model.hpp"
#include "nlogic/regularizers.hpp"

namespace nlogic {

enum class EvalMetric { accuracy, rmse, auc, ndcg10 };

const char* metric_name(EvalMetric m);
bool metric_maximizes(EvalMetric m);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;
  int max_epochs = 100;
  int patience = 10;  // early-stop window on the validation metric
  RegWeights reg;
  EvalMetric eval_metric = EvalMetric::accuracy;
  uint64_t seed = 1;
  int threads = 1;  // batch/eval parallelism; 0 = all cores, 1 = serial path
  // optional outputs
  std::string out_dir;       // when set: curves.csv (+ checkpoints)
  std::string config_hash;   // embedded in output headers
  bool write_checkpoints = false;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0, valid_loss = 0, test_loss = 0;
  double train_metric = 0, valid_metric = 0, test_metric = 0;
  RegReport reg;
  bool has_reg = false;
};

struct TrainResult {
  std::vector<EpochStats> stats;
  int best_epoch = -1;
  double best_valid_metric = 0;
  long skipped_examples = 0;  // pairwise: users with an empty negative pool
};

// -(y ln p + (1-y) ln(1-p)), p clamped to [1e-7, 1-1e-7] before the log.
NodeId cross_entropy(Tape& tape, NodeId p, bool y);
// -ln(sigmoid(p_pos - p_neg)), the sigmoid clamped like cross_entropy.
NodeId pairwise_loss(Tape& tape, NodeId p_pos, NodeId p_neg);
// Same clamped formulas on plain values (used by eval passes).
double cross_entropy_value(double p, bool y);
double pairwise_loss_value(double p_pos, double p_neg);

struct BatchStats {
  double task_sum = 0;
  long task_count = 0;
  std::array<double, 10> reg_sum{};
  std::array<long, 10> reg_count{};
  double len_sum = 0;
  long len_count = 0;
  double param_reg_value = 0;
  long degenerate = 0;
  double total_loss = 0;
  bool has_reg = false;
};

struct RecTrainExample {
  int user = -1;
  std::vector<std::pair<int, bool>> history;  // (item var, liked)
  int pos_item = -1;
};

struct RankTask {
  int user = -1;
  std::vector<std::pair<int, bool>> history;
  int pos_item = -1;
  std::vector<int> negatives;  // distinct sampled candidates
};

// Returns a sampled negative item for the user, or -1 when the pool is empty.
using NegSampleFn = std::function<int(int user, Rng&)>;

// The ¬(h1 ∧ h2 ∧ ...) part shared by a pair/rank group: liked history items
// as plain literals, disliked ones negated, single-literal histories without
// the And wrapper.
ExprNode history_expr(const std::vector<std::pair<int, bool>>& history);

struct BatchPlan;

// One gradient batch: builds per-example graphs (operand order and dropout
// re-randomized from the session seed), attaches the logic and length
// regularizers over the batch W-set, runs backward, and leaves summed
// gradients in the model's ParamStore. Examples are processed in contiguous
// chunks, one OpenMP thread each; threads=1 is the serial reference the
// parallel path is tested against.
class BatchEngine {
 public:
  explicit BatchEngine(int threads);

  BatchStats run_pointwise(NlnModel& model,
                           const std::vector<const LabeledExpr*>& batch,
                           int epoch, long base_pos, const TrainConfig& cfg);

  struct PairItem {
    const RecTrainExample* ex = nullptr;
    int neg_item = -1;
    long pos = 0;  // absolute epoch position (rng stream index)
  };
  BatchStats run_pairwise(NlnModel& model, const std::vector<PairItem>& batch,
                          int epoch, long batch_id, const TrainConfig& cfg);

  int threads() const { return threads_; }

 private:
  BatchStats run_planned(NlnModel& model, const BatchPlan& plan, int epoch,
                         long batch_id, const TrainConfig& cfg, bool pairwise);

  int threads_;
  std::vector<GraphContext> ctxs_;
};

struct SplitEval {
  double loss = 0;
  double metric = 0;
};

SplitEval evaluate_pointwise(const NlnModel& model,
                             const std::vector<const LabeledExpr*>& exprs,
                             EvalMetric metric, int threads);

struct RankEval {
  double ndcg = 0;
  double loss = 0;
  std::vector<int> ranks;
};

RankEval evaluate_rank_tasks(const NlnModel& model,
                             const std::vector<RankTask>& tasks, int threads);

// Point-wise trainer (simulated T/F and rec preference prediction): one Adam
// step per 128-example batch, eval on all three splits per epoch, early stop
// on the validation metric, best-epoch model restored on return.
TrainResult train_pointwise(NlnModel& model,
                            const std::vector<LabeledExpr>& train,
                            const std::vector<LabeledExpr>& valid,
                            const std::vector<LabeledExpr>& test,
                            const TrainConfig& cfg, int start_epoch = 0);

// Pair-wise (BPR-style) trainer for top-K recommendation: negatives resampled
// every epoch, loss over e+/e- graph pairs sharing the history subgraph,
// early stop on validation nDCG@10.
TrainResult train_pairwise(NlnModel& model,
                           const std::vector<RecTrainExample>& train,
                           const std::vector<RankTask>& valid,
                           const std::vector<RankTask>& test,
                           const NegSampleFn& sampler, const TrainConfig& cfg);

struct SeedOutcome {
  uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

struct MultiSeedResult {
  std::vector<SeedOutcome> per_seed;
  std::map<std::string, Aggregate> agg;  // mean +- stderr per metric
};

// Runs the per-seed closure for every seed (optionally `jobs` in parallel;
// sessions are independent) and aggregates final metrics across seeds.
MultiSeedResult run_seeds(
    const std::vector<uint64_t>& seeds, int jobs,
    const std::function<std::map<std::string, double>(uint64_t)>& runner);

void write_curves_csv(const std::string& path,
                      const std::vector<EpochStats>& stats,
                      const std::string& config_hash, uint64_t seed);

}  // namespace nlogic
