#pragma once

#include <array>
#include <vector>

#include "nlogic/nln_model.hpp"
#include "nlogic/tape.hpp"

namespace nlogic {

struct RegWeights {
  double lambda_l = 0.0;      // logic-regularizer weight
  double lambda_len = 0.0;    // vector-length weight
  double lambda_theta = 0.0;  // parameter l2 weight
};

struct RegReport {
  std::array<double, 10> r{};  // per-law means
  double length = 0.0;         // mean ||w||^2
  double param = 0.0;          // ||Theta||^2 over module parameters
  long degenerate = 0;         // guarded Sim terms
};

// The ten per-element logical-law penalties for one W element, all built on
// the live modules so gradients flow; F must come from false_vec on the same
// context. Degenerate similarities are replaced by a gradient-free 0.5.
struct RegTerms {
  std::array<NodeId, 10> t{};
  long degenerate = 0;
};
RegTerms build_reg_terms(GraphContext& ctx, NodeId w, NodeId f_node);

// The r1 term evaluated at the anchor itself (r1 ranges over W ∪ {T}).
NodeId build_reg_term_anchor(GraphContext& ctx, long* degenerate);

struct LogicRegBuild {
  NodeId total = -1;  // sum of the ten mean-aggregated laws
  RegReport report;
};

// Mean-aggregated logical regularizer over an explicit W-set; recomputes F
// through the live NOT module inside the same graph.
LogicRegBuild logic_reg(GraphContext& ctx, const std::vector<NodeId>& w_set);

// Mean over the W-set of squared vector length.
NodeId length_reg(Tape& tape, const std::vector<NodeId>& w_set);

// Sum of squared Frobenius norms over the given parameter leaves (module
// matrices and biases; embeddings and the anchor stay out).
NodeId param_reg(Tape& tape, const std::vector<NodeId>& param_leaves);

// task + lambda_l * logic + lambda_len * length + lambda_theta * param.
// Terms with zero weight (or absent, id < 0) are skipped.
NodeId total_loss(Tape& tape, NodeId task_loss, NodeId logic, NodeId length,
                  NodeId param, const RegWeights& w);

}  // namespace nlogic
