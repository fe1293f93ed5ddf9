#pragma once

#include <vector>

#include "nlogic/optim.hpp"
#include "nlogic/rec_pipeline.hpp"
#include "nlogic/training.hpp"

namespace nlogic {

// BiasedMF: mu + b_u + b_i + P[u].Q[i], trained with the same Adam / batch /
// early-stopping machinery as NLN so the Table-style comparisons are
// like-for-like. Ignores interaction history by construction.
struct MfModel {
  int dim = 64;
  int n_users = 0, n_items = 0;
  uint64_t init_seed = 0;
  ParamStore ps;
  AdamState adam;
  int p_mu = -1, p_bu = -1, p_bi = -1, p_user = -1, p_item = -1;
};

MfModel init_mf(int n_users, int n_items, int dim, uint64_t seed);

double mf_score(const MfModel& m, int user, int item);

// Point-wise preference task: cross_entropy(sigmoid(score), liked) over the
// train expressions' (user, target, label) triples; early stop on valid AUC.
TrainResult train_mf_preference(MfModel& model,
                                const std::vector<RecExpr>& train,
                                const std::vector<RecExpr>& valid,
                                const std::vector<RecExpr>& test,
                                const TrainConfig& cfg);

// Pair-wise top-K task on positive targets with the shared negative sampler;
// early stop on valid nDCG@10 over the same candidate sets as NLN.
TrainResult train_mf_topk(MfModel& model,
                          const std::vector<RecTrainExample>& train,
                          const std::vector<RankTask>& valid,
                          const std::vector<RankTask>& test,
                          const NegSampleFn& sampler, const TrainConfig& cfg);

SplitEval evaluate_mf_preference(const MfModel& model,
                                 const std::vector<RecExpr>& exprs);
RankEval evaluate_mf_rank(const MfModel& model,
                          const std::vector<RankTask>& tasks);

}  // namespace nlogic
