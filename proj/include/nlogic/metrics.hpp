#pragma once

#include <cstdint>
#include <vector>

#include "nlogic/logic_ast.hpp"

namespace nlogic {

// Fraction with (p >= 0.5) == label; p == 0.5 counts as predicted-true.
double accuracy(const std::vector<double>& preds,
                const std::vector<uint8_t>& labels);

double rmse(const std::vector<double>& preds,
            const std::vector<uint8_t>& labels);

// Mann-Whitney statistic pooled over the whole set; ties count 0.5.
// Throws NumericError on single-class input.
double auc(const std::vector<double>& preds,
           const std::vector<uint8_t>& labels);

struct RankResult {
  int rank = 0;  // 1-based rank of the positive among the candidates
};

// rank = 1 + count of negatives scoring >= the positive (pessimistic ties).
RankResult rank_candidates(const std::vector<double>& scores, int positive_index);

// Single-relevant-item nDCG: 1/log2(rank+1) if rank <= k else 0.
double ndcg_at_k(const RankResult& r, int k = 10);

struct ClusterDiag {
  double purity = 0.0;  // best-of-two-mappings agreement, always >= 0.5
  int sizes[2] = {0, 0};
  int iterations = 0;  // Lloyd iterations of the best restart
};

// 2-means over the d-dimensional embeddings (20 seeded restarts), scored
// against the hidden truth assignment. An automated stand-in for eyeballing
// a 2-D projection of the embeddings.
ClusterDiag cluster_variables(const std::vector<std::vector<double>>& embeddings,
                              const Assignment& truth, uint64_t seed = 17);

struct Aggregate {
  double mean = 0.0;
  double stderr_ = 0.0;  // sample std / sqrt(k)
};

Aggregate aggregate(const std::vector<double>& values);

}  // namespace nlogic
