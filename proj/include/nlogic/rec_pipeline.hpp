#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlogic/logic_ast.hpp"
#include "nlogic/rng.hpp"
#include "nlogic/training.hpp"

namespace nlogic {

struct Interaction {
  int user = -1;
  int item = -1;
  int rating = 0;  // 1..5
  int64_t timestamp = 0;
};

struct RatingsData {
  std::vector<Interaction> interactions;
  int n_users = 0;
  int n_items = 0;
  // dense id -> original id (numeric for ml100k, hashed strings for amazon)
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
};

// Formats: "ml100k" (tab-separated `user item rating timestamp`, numeric ids)
// and "amazon-csv" (`user,item,rating,timestamp`, string ids mapped to dense
// ids in first-appearance order). Malformed rows fail hard with the line
// number.
RatingsData load_ratings(const std::string& path, const std::string& format);

// Two-column sidecar `original<TAB>dense`, one row per id.
void write_id_sidecar(const std::string& path,
                      const std::vector<std::string>& names);

// rating >= 4 means "liked".
bool binarize(int rating);

// Keeps the first `max_users` users (by dense id): the desk-scale tier.
RatingsData subsample_users(const RatingsData& data, int max_users);

struct RecExpr {
  int user = -1;
  std::vector<std::pair<int, bool>> history;  // (item, liked), time order
  int target = -1;
  bool label = false;  // liked(target)
  int target_pos = 0;  // 1-based position of the target in the user stream
};

// Per-user interaction streams: latest rating kept per (user, item), then
// time order (file order breaks timestamp ties).
std::vector<std::vector<Interaction>> user_streams(const RatingsData& data);

// The k-th interaction (k >= 2) yields one expression whose history is the up
// to `max_hist` interactions immediately before it.
std::vector<RecExpr> build_expressions(const std::vector<Interaction>& stream,
                                       int max_hist = 10);

// ¬(h1 ∧ h2 ∧ ...) ∨ target; dense item ids double as VarIds.
ExprNode to_expr_node(const RecExpr& r);

LabeledExpr to_labeled_expr(const RecExpr& r);

struct RecSplits {
  std::vector<RecExpr> train, valid, test;
};

// Paper protocol: expressions targeting a user's first five interactions are
// forced into train; of each user's remaining expressions the last goes to
// test, the second-to-last to valid (test preferred when only one remains),
// everything else to train.
RecSplits split_rec(const std::vector<std::vector<RecExpr>>& per_user);

// Per-user negative pool: all items minus the user's liked items (disliked
// but interacted items stay in the pool).
class NegSampler {
 public:
  NegSampler(int n_items, const std::vector<Interaction>& interactions);

  // Uniform over the user's pool; -1 when the pool is empty.
  int sample(int user, Rng& rng) const;
  // k distinct negatives; throws DataError when the pool is smaller than k.
  std::vector<int> sample_distinct(int user, int k, Rng& rng) const;

  long pool_size(int user) const;
  bool is_liked(int user, int item) const;
  NegSampleFn fn() const;

 private:
  int n_items_;
  std::vector<std::vector<int>> liked_;  // sorted per user
};

// 100 distinct sampled negatives plus the held-out positive, all sharing the
// positive's history literals.
RankTask leave_one_out_candidates(const RecExpr& positive,
                                  const NegSampler& sampler, int k, Rng& rng);

RecTrainExample to_train_example(const RecExpr& r);

struct ColdItemStats {
  long cold_items = 0;          // items never seen in a train expression
  long cold_occurrences = 0;    // valid/test expressions touching a cold item
};
ColdItemStats cold_item_stats(const RecSplits& splits, int n_items);

}  // namespace nlogic
