#include "nlogic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nlogic/errors.hpp"
#include "nlogic/rng.hpp"

namespace nlogic {

double accuracy(const std::vector<double>& preds,
                const std::vector<uint8_t>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ContractError("accuracy: size mismatch or empty input");
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    bool predicted = preds[i] >= 0.5;
    if (predicted == (labels[i] != 0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double rmse(const std::vector<double>& preds,
            const std::vector<uint8_t>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ContractError("rmse: size mismatch or empty input");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - (labels[i] ? 1.0 : 0.0);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(preds.size()));
}

double auc(const std::vector<double>& preds,
           const std::vector<uint8_t>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw ContractError("auc: size mismatch or empty input");
  size_t n = preds.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return preds[a] < preds[b]; });

  // tie-averaged ranks
  double rank_sum_pos = 0.0;
  size_t n_pos = 0, n_neg = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && preds[order[j]] == preds[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0)
    throw NumericError("auc undefined: need both classes present");
  double u = rank_sum_pos -
             static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

RankResult rank_candidates(const std::vector<double>& scores,
                           int positive_index) {
  if (positive_index < 0 ||
      static_cast<size_t>(positive_index) >= scores.size())
    throw ContractError("rank_candidates: positive index out of range");
  double pos = scores[static_cast<size_t>(positive_index)];
  int rank = 1;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) == positive_index) continue;
    if (scores[i] >= pos) ++rank;
  }
  return RankResult{rank};
}

double ndcg_at_k(const RankResult& r, int k) {
  if (r.rank < 1) throw ContractError("ndcg: invalid rank");
  if (r.rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
}

ClusterDiag cluster_variables(
    const std::vector<std::vector<double>>& embeddings,
    const Assignment& truth, uint64_t seed) {
  size_t n = embeddings.size();
  if (n < 2) throw NumericError("cluster diagnostic needs >= 2 variables");
  size_t d = embeddings[0].size();
  size_t n_true = 0;
  for (size_t i = 0; i < n; ++i)
    if (truth.value(static_cast<int>(i))) ++n_true;
  if (n_true == 0 || n_true == n)
    throw NumericError(
        "cluster diagnostic undefined: all variables share one truth value");

  Rng rng = Rng::stream(seed, "kmeans");
  std::vector<int> best_assign(n, 0);
  double best_inertia = std::numeric_limits<double>::infinity();
  int best_iters = 0;

  std::vector<int> assign(n, 0);
  std::vector<double> c0(d), c1(d);
  for (int restart = 0; restart < 20; ++restart) {
    std::fill(assign.begin(), assign.end(), -1);
    size_t i0 = static_cast<size_t>(rng.below(n));
    size_t i1;
    do {
      i1 = static_cast<size_t>(rng.below(n));
    } while (i1 == i0);
    c0 = embeddings[i0];
    c1 = embeddings[i1];

    int iters = 0;
    bool changed = true;
    while (changed && iters < 100) {
      changed = false;
      ++iters;
      for (size_t i = 0; i < n; ++i) {
        double d0 = 0.0, d1 = 0.0;
        for (size_t j = 0; j < d; ++j) {
          double a = embeddings[i][j] - c0[j];
          double b = embeddings[i][j] - c1[j];
          d0 += a * a;
          d1 += b * b;
        }
        int a = d1 < d0 ? 1 : 0;
        if (a != assign[i]) {
          assign[i] = a;
          changed = true;
        }
      }
      std::fill(c0.begin(), c0.end(), 0.0);
      std::fill(c1.begin(), c1.end(), 0.0);
      size_t k0 = 0, k1 = 0;
      for (size_t i = 0; i < n; ++i) {
        auto& c = assign[i] ? c1 : c0;
        for (size_t j = 0; j < d; ++j) c[j] += embeddings[i][j];
        (assign[i] ? k1 : k0) += 1;
      }
      if (k0 == 0 || k1 == 0) break;  // collapsed restart
      for (size_t j = 0; j < d; ++j) {
        c0[j] /= static_cast<double>(k0);
        c1[j] /= static_cast<double>(k1);
      }
    }

    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const auto& c = assign[i] ? c1 : c0;
      for (size_t j = 0; j < d; ++j) {
        double a = embeddings[i][j] - c[j];
        inertia += a * a;
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_assign = assign;
      best_iters = iters;
    }
  }

  size_t agree_direct = 0;
  for (size_t i = 0; i < n; ++i) {
    bool t = truth.value(static_cast<int>(i));
    if ((best_assign[i] == 1) == t) ++agree_direct;
  }
  size_t agree = std::max(agree_direct, n - agree_direct);

  ClusterDiag diag;
  diag.purity = static_cast<double>(agree) / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) diag.sizes[best_assign[i]] += 1;
  diag.iterations = best_iters;
  return diag;
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("aggregate: empty input");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    double sample_std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    a.stderr_ = sample_std / std::sqrt(static_cast<double>(values.size()));
  }
  return a;
}

}  // namespace nlogic
