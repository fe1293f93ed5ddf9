#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlogic/errors.hpp"
#include "nlogic/rng.hpp"

namespace nlogic {

enum class ExprKind : uint8_t { Var, Not, And, Or };

// Propositional expression. And/Or hold flat n-ary operand lists; the fold
// order into binary module applications is chosen at graph-build time.
struct ExprNode {
  ExprKind kind = ExprKind::Var;
  int var = -1;
  std::vector<ExprNode> kids;

  bool operator==(const ExprNode& o) const {
    return kind == o.kind && var == o.var && kids == o.kids;
  }
};

ExprNode make_var(int id);
ExprNode make_not(ExprNode child);
ExprNode make_and(std::vector<ExprNode> kids);
ExprNode make_or(std::vector<ExprNode> kids);

// Text grammar (ASCII, with unicode aliases for the connectives):
//   expr   := term ('|' term)*
//   term   := factor ('&' factor)*
//   factor := '~' factor | '(' expr ')' | 'v' digits
// Consecutive same-operator chains flatten into one n-ary node; parenthesized
// sub-expressions keep their structure. Throws ParseError with a byte offset.
ExprNode parse(const std::string& text);

// Canonical text; parse(render(e)) is structurally equal to e.
std::string render(const ExprNode& e);

struct Assignment {
  std::vector<uint8_t> values;  // one truth value per VarId
  bool value(int var) const {
    if (var < 0 || static_cast<size_t>(var) >= values.size())
      throw DataError("missing assignment for v" + std::to_string(var));
    return values[static_cast<size_t>(var)] != 0;
  }
  size_t size() const { return values.size(); }
};

// Standard boolean semantics; the independent truth oracle for all labels.
bool eval_truth(const ExprNode& e, const Assignment& a);

struct LabeledExpr {
  ExprNode expr;
  bool label = false;
};

struct GenConfig {
  int n = 100;         // variable count
  int m = 10;          // expression count
  int clause_min = 1;
  int clause_max = 5;
  int lit_min = 1;     // literals per clause
  int lit_max = 5;
  uint64_t seed = 1;
};

struct Dataset {
  Assignment assignment;  // hidden ground truth, diagnostics only
  std::vector<LabeledExpr> examples;
};

// Random DNF generator: clause count and per-clause literal count uniform in
// their ranges, variables sampled without replacement within a clause, each
// literal negated by a fair coin. Labels come from eval_truth under the
// hidden assignment.
Dataset generate_dataset(const GenConfig& cfg);

// True iff e is an Or of clauses, each clause an And of literals (degenerate
// single-clause / single-literal forms allowed).
bool is_dnf(const ExprNode& e);

// Independently permutes the operand list of every And/Or node.
ExprNode shuffle_operands(const ExprNode& e, Rng& rng);

struct Splits {
  std::vector<LabeledExpr> train, valid, test;
};

Splits split_dataset(const std::vector<LabeledExpr>& data, double f_train,
                     double f_valid, double f_test, uint64_t seed);

// Expression-file format: one `<expression>\t<0|1>` per line, UTF-8.
// Lines starting with '#' are header comments and are skipped on read.
void write_expr_file(const std::string& path,
                     const std::vector<LabeledExpr>& data,
                     const std::vector<std::string>& header_lines = {});
std::vector<LabeledExpr> read_expr_file(const std::string& path);

int max_var_id(const ExprNode& e);

}  // namespace nlogic
