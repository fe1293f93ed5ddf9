#include "nlogic/regularizers.hpp"

#include "nlogic/errors.hpp"

namespace nlogic {

namespace {
NodeId one_minus(Tape& t, NodeId x) { return t.add_const(t.scale(x, -1.0), 1.0); }
}  // namespace

RegTerms build_reg_terms(GraphContext& ctx, NodeId w, NodeId f_node) {
  Tape& t = ctx.tape();
  NodeId T = ctx.anchor_node();
  NodeId nw = ctx.apply_not(w);
  NodeId nnw = ctx.apply_not(nw);

  RegTerms out;
  auto guarded = [&](NodeId a, NodeId b) {
    auto [node, was_guarded] = ctx.sim_guarded(a, b);
    if (was_guarded) out.degenerate += 1;
    return node;
  };

  out.t[0] = guarded(nw, w);                                   // ¬w vs w
  out.t[1] = one_minus(t, guarded(nnw, w));                    // ¬¬w = w
  out.t[2] = one_minus(t, guarded(ctx.apply_and(w, T), w));    // w ∧ T = w
  out.t[3] = one_minus(t, guarded(ctx.apply_and(w, f_node), f_node));  // w ∧ F = F
  out.t[4] = one_minus(t, guarded(ctx.apply_and(w, w), w));    // w ∧ w = w
  out.t[5] = one_minus(t, guarded(ctx.apply_and(w, nw), f_node));      // w ∧ ¬w = F
  out.t[6] = one_minus(t, guarded(ctx.apply_or(w, f_node), w));        // w ∨ F = w
  out.t[7] = one_minus(t, guarded(ctx.apply_or(w, T), T));     // w ∨ T = T
  out.t[8] = one_minus(t, guarded(ctx.apply_or(w, w), w));     // w ∨ w = w
  out.t[9] = one_minus(t, guarded(ctx.apply_or(w, nw), T));    // w ∨ ¬w = T
  return out;
}

NodeId build_reg_term_anchor(GraphContext& ctx, long* degenerate) {
  NodeId T = ctx.anchor_node();
  NodeId nT = ctx.apply_not(T);
  auto [node, was_guarded] = ctx.sim_guarded(nT, T);
  if (was_guarded && degenerate) *degenerate += 1;
  return node;
}

LogicRegBuild logic_reg(GraphContext& ctx, const std::vector<NodeId>& w_set) {
  if (w_set.empty()) throw ContractError("logic_reg: empty W-set");
  Tape& t = ctx.tape();
  NodeId f_node = ctx.false_vec();

  std::array<std::vector<NodeId>, 10> terms;
  LogicRegBuild out;
  for (NodeId w : w_set) {
    RegTerms rt = build_reg_terms(ctx, w, f_node);
    out.report.degenerate += rt.degenerate;
    for (int i = 0; i < 10; ++i) terms[static_cast<size_t>(i)].push_back(rt.t[static_cast<size_t>(i)]);
  }
  terms[0].push_back(build_reg_term_anchor(ctx, &out.report.degenerate));

  std::vector<NodeId> law_means;
  law_means.reserve(10);
  for (int i = 0; i < 10; ++i) {
    auto& ts = terms[static_cast<size_t>(i)];
    NodeId mean = t.scale(t.sum_list(ts), 1.0 / static_cast<double>(ts.size()));
    out.report.r[static_cast<size_t>(i)] = t.value(mean);
    law_means.push_back(mean);
  }
  out.total = t.sum_list(law_means);
  return out;
}

NodeId length_reg(Tape& tape, const std::vector<NodeId>& w_set) {
  if (w_set.empty()) throw ContractError("length_reg: empty W-set");
  std::vector<NodeId> sq;
  sq.reserve(w_set.size());
  for (NodeId w : w_set) sq.push_back(tape.l2_norm_sq(w));
  return tape.scale(tape.sum_list(sq), 1.0 / static_cast<double>(sq.size()));
}

NodeId param_reg(Tape& tape, const std::vector<NodeId>& param_leaves) {
  std::vector<NodeId> sq;
  sq.reserve(param_leaves.size());
  for (NodeId p : param_leaves) sq.push_back(tape.l2_norm_sq(p));
  if (sq.size() == 1) return sq[0];
  return tape.sum_list(sq);
}

NodeId total_loss(Tape& tape, NodeId task_loss, NodeId logic, NodeId length,
                  NodeId param, const RegWeights& w) {
  NodeId total = task_loss;
  if (logic >= 0 && w.lambda_l != 0.0)
    total = tape.add(total, tape.scale(logic, w.lambda_l));
  if (length >= 0 && w.lambda_len != 0.0)
    total = tape.add(total, tape.scale(length, w.lambda_len));
  if (param >= 0 && w.lambda_theta != 0.0)
    total = tape.add(total, tape.scale(param, w.lambda_theta));
  return total;
}

}  // namespace nlogic
