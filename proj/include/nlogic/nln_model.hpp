#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nlogic/logic_ast.hpp"
#include "nlogic/optim.hpp"
#include "nlogic/rng.hpp"
#include "nlogic/tape.hpp"

namespace nlogic {

struct NlnConfig {
  int dim = 64;          // embedding dimension
  double alpha = 10.0;   // cosine scale inside Sim
  double dropout = 0.2;  // hidden-activation dropout in train mode
};

// All trainable state: the AND/OR/NOT module weights, the variable (or item)
// embedding table, and the frozen true-anchor vector.
struct NlnModel {
  NlnConfig cfg;
  int vocab = 0;
  uint64_t init_seed = 0;
  ParamStore ps;
  AdamState adam;

  int p_and_h1 = -1, p_and_h2 = -1, p_and_b = -1;
  int p_or_h1 = -1, p_or_h2 = -1, p_or_b = -1;
  int p_not_h1 = -1, p_not_h2 = -1, p_not_b = -1;
  int p_emb = -1;     // vocab x d
  int p_anchor = -1;  // d, excluded from the optimizer

  const double* embedding_row(int var) const {
    return ps[p_emb].value.data() + static_cast<size_t>(var) * cfg.dim;
  }
  // Module parameter ids, in a fixed order (excludes embeddings and anchor).
  std::vector<int> module_param_ids() const {
    return {p_and_h1, p_and_h2, p_and_b, p_or_h1, p_or_h2,
            p_or_b,   p_not_h1, p_not_h2, p_not_b};
  }
};

// Glorot-uniform module weights, zero biases, N(0, 0.1^2) embeddings, and a
// frozen N(0, 1/d) anchor so alpha*cos spans a useful sigmoid range from the
// first step.
NlnModel init_model(const NlnConfig& cfg, int vocab, uint64_t seed);

// Per-session graph builder. Binds parameter values as tape leaves once per
// batch (training) or once per evaluation pass, then builds one expression
// graph at a time; rewinding to the example mark frees the expression's nodes
// while keeping the bound parameters.
class GraphContext {
 public:
  void bind(const NlnModel& model, bool training);
  // Pre-binds embedding leaves so they survive per-example rewinds (training
  // batches bind the batch's distinct variables up front).
  void bind_vars(const std::vector<int>& vars);

  NodeId var_leaf(int var);
  NodeId apply_not(NodeId w);
  NodeId apply_and(NodeId a, NodeId b);
  NodeId apply_or(NodeId a, NodeId b);
  // sigmoid(alpha * cos(a, b)); throws DegenerateVectorError on a collapsed
  // input (regularizers use sim_guarded instead).
  NodeId sim(NodeId a, NodeId b);
  // Degenerate inputs yield a constant 0.5 with zero gradient; returns
  // (node, guarded_flag).
  std::pair<NodeId, bool> sim_guarded(NodeId a, NodeId b);

  // F = NOT(T) through the live NOT parameters.
  NodeId false_vec();

  void set_example_mark();
  void rewind_example();

  Tape& tape() { return tape_; }
  const NlnModel& model() const { return *model_; }
  bool training() const { return training_; }
  void set_dropout_rng(Rng* rng) { dropout_rng_ = rng; }

  NodeId anchor_node() const { return n_anchor_; }
  NodeId param_node(int param_id) const;
  const std::vector<std::pair<int, NodeId>>& bound_vars() const {
    return emb_order_;
  }

 private:
  NodeId bind_param(int param_id);

  Tape tape_;
  const NlnModel* model_ = nullptr;
  bool training_ = false;
  Rng* dropout_rng_ = nullptr;

  NodeId n_and_h1_ = -1, n_and_h2_ = -1, n_and_b_ = -1;
  NodeId n_or_h1_ = -1, n_or_h2_ = -1, n_or_b_ = -1;
  NodeId n_not_h1_ = -1, n_not_h2_ = -1, n_not_b_ = -1;
  NodeId n_anchor_ = -1;
  std::unordered_map<int, NodeId> param_nodes_;

  std::unordered_map<int, NodeId> emb_lookup_;
  std::vector<std::pair<int, NodeId>> emb_order_;  // (var, leaf) creation order

  Tape::Mark example_mark_{};
  size_t emb_count_at_mark_ = 0;
  bool has_example_mark_ = false;
};

struct GraphBuild {
  NodeId root = -1;
  // Deduplicated: distinct leaf-variable nodes (first-touch order) followed
  // by every module-output node in creation order.
  std::vector<NodeId> w_set;
  int leaf_count = 0;
  std::vector<int> leaf_vars;  // parallel to the leaf prefix of w_set
};

// Var -> embedding lookup; Not -> NOT module; n-ary And/Or -> left fold of
// the binary module. In train mode the caller passes an operand-shuffled
// expression (see shuffle_operands); eval mode uses the input order.
GraphBuild build_graph(GraphContext& ctx, const ExprNode& expr);

// Structure-only preview of build_graph: distinct variables and the number of
// module applications, without touching a tape.
void count_graph_nodes(const ExprNode& expr, std::vector<int>& distinct_vars,
                       long& internal_nodes);

// Eval-mode probability that `expr` is true: Sim(e, T).
double predict(const NlnModel& model, const ExprNode& expr);

// Eval-mode probabilities for a whole set, optionally OpenMP-parallel over
// expressions. Results are identical for any thread count. Collapsed roots
// score the neutral 0.5 and are counted into *degenerate when provided
// (predict() keeps the strict throwing contract).
std::vector<double> predict_all(const NlnModel& model,
                                const std::vector<const ExprNode*>& exprs,
                                int threads, long* degenerate = nullptr);
// Serial reference for the parallel path.
std::vector<double> predict_all_serial(const NlnModel& model,
                                       const std::vector<const ExprNode*>& exprs,
                                       long* degenerate = nullptr);

// Self-describing JSON checkpoint: config, every parameter tensor (row-major)
// with its Adam moments, the anchor, and the RNG seed. Round-trips bit-exact.
void save_checkpoint(const NlnModel& model, int epoch,
                     const std::string& config_hash, const std::string& path);
NlnModel load_checkpoint(const std::string& path, int* epoch_out = nullptr,
                         std::string* config_hash_out = nullptr);

}  // namespace nlogic
