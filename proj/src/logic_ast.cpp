#include "nlogic/logic_ast.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace nlogic {

ExprNode make_var(int id) {
  if (id < 0) throw ConfigError("variable index must be non-negative");
  ExprNode e;
  e.kind = ExprKind::Var;
  e.var = id;
  return e;
}

ExprNode make_not(ExprNode child) {
  ExprNode e;
  e.kind = ExprKind::Not;
  e.kids.push_back(std::move(child));
  return e;
}

static ExprNode make_nary(ExprKind kind, std::vector<ExprNode> kids) {
  if (kids.size() < 2)
    throw ConfigError("n-ary connective needs at least two operands");
  ExprNode e;
  e.kind = kind;
  e.kids = std::move(kids);
  return e;
}

ExprNode make_and(std::vector<ExprNode> kids) {
  return make_nary(ExprKind::And, std::move(kids));
}

ExprNode make_or(std::vector<ExprNode> kids) {
  return make_nary(ExprKind::Or, std::move(kids));
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  ExprNode run() {
    ExprNode e = parse_expr();
    skip_ws();
    if (pos_ < s_.size())
      throw ParseError("unexpected trailing input", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() &&
           (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r'))
      ++pos_;
  }

  // Matches an operator token at the cursor: ASCII or its UTF-8 alias.
  bool eat(char ascii, const char* alias) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ascii) {
      ++pos_;
      return true;
    }
    size_t len = std::char_traits<char>::length(alias);
    if (s_.compare(pos_, len, alias) == 0) {
      pos_ += len;
      return true;
    }
    return false;
  }

  ExprNode parse_expr() {
    std::vector<ExprNode> terms;
    terms.push_back(parse_term());
    while (eat('|', "\xE2\x88\xA8"))  // ∨
      terms.push_back(parse_term());
    if (terms.size() == 1) return std::move(terms[0]);
    return make_or(std::move(terms));
  }

  ExprNode parse_term() {
    std::vector<ExprNode> factors;
    factors.push_back(parse_factor());
    while (eat('&', "\xE2\x88\xA7"))  // ∧
      factors.push_back(parse_factor());
    if (factors.size() == 1) return std::move(factors[0]);
    return make_and(std::move(factors));
  }

  ExprNode parse_factor() {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("expected expression", pos_);
    if (eat('~', "\xC2\xAC"))  // ¬
      return make_not(parse_factor());
    if (s_[pos_] == '(') {
      ++pos_;
      ExprNode inner = parse_expr();
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != ')')
        throw ParseError("expected ')'", pos_);
      ++pos_;
      return inner;
    }
    if (s_[pos_] == 'v') {
      size_t start = ++pos_;
      while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') ++pos_;
      if (pos_ == start) throw ParseError("expected variable index", pos_);
      long id = std::stol(s_.substr(start, pos_ - start));
      return make_var(static_cast<int>(id));
    }
    throw ParseError("expected expression", pos_);
  }

  const std::string& s_;
  size_t pos_ = 0;
};

}  // namespace

ExprNode parse(const std::string& text) { return Parser(text).run(); }

// ---------------------------------------------------------------------------
// Renderer
// ---------------------------------------------------------------------------

static void render_rec(const ExprNode& e, std::string& out) {
  switch (e.kind) {
    case ExprKind::Var:
      out += 'v';
      out += std::to_string(e.var);
      break;
    case ExprKind::Not: {
      out += '~';
      const ExprNode& c = e.kids[0];
      if (c.kind == ExprKind::Var || c.kind == ExprKind::Not) {
        render_rec(c, out);
      } else {
        out += '(';
        render_rec(c, out);
        out += ')';
      }
      break;
    }
    case ExprKind::And:
    case ExprKind::Or: {
      const char* sep = e.kind == ExprKind::And ? " & " : " | ";
      for (size_t i = 0; i < e.kids.size(); ++i) {
        if (i) out += sep;
        const ExprNode& c = e.kids[i];
        bool parens = c.kind == ExprKind::And || c.kind == ExprKind::Or;
        if (parens) out += '(';
        render_rec(c, out);
        if (parens) out += ')';
      }
      break;
    }
  }
}

std::string render(const ExprNode& e) {
  std::string out;
  render_rec(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Truth oracle
// ---------------------------------------------------------------------------

bool eval_truth(const ExprNode& e, const Assignment& a) {
  switch (e.kind) {
    case ExprKind::Var:
      return a.value(e.var);
    case ExprKind::Not:
      return !eval_truth(e.kids[0], a);
    case ExprKind::And:
      for (const auto& k : e.kids)
        if (!eval_truth(k, a)) return false;
      return true;
    case ExprKind::Or:
      for (const auto& k : e.kids)
        if (eval_truth(k, a)) return true;
      return false;
  }
  throw ContractError("eval_truth: corrupt node");
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

static void validate(const GenConfig& cfg) {
  if (cfg.n < 1 || cfg.m < 1) throw ConfigError("generator needs n, m >= 1");
  if (cfg.clause_min < 1 || cfg.clause_min > cfg.clause_max)
    throw ConfigError("bad clause count range");
  if (cfg.lit_min < 1 || cfg.lit_min > cfg.lit_max)
    throw ConfigError("bad literals-per-clause range");
  if (cfg.lit_max > cfg.n)
    throw ConfigError(
        "literals-per-clause upper bound exceeds variable count (" +
        std::to_string(cfg.lit_max) + " > " + std::to_string(cfg.n) + ")");
}

Dataset generate_dataset(const GenConfig& cfg) {
  validate(cfg);
  Rng rng = Rng::stream(cfg.seed, "data-gen");

  Dataset ds;
  ds.assignment.values.resize(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i)
    ds.assignment.values[static_cast<size_t>(i)] = rng.coin() ? 1 : 0;

  ds.examples.reserve(static_cast<size_t>(cfg.m));
  std::unordered_set<int> used;
  for (int e = 0; e < cfg.m; ++e) {
    int n_clauses =
        cfg.clause_min +
        static_cast<int>(rng.below(
            static_cast<uint64_t>(cfg.clause_max - cfg.clause_min + 1)));
    std::vector<ExprNode> clauses;
    clauses.reserve(static_cast<size_t>(n_clauses));
    for (int c = 0; c < n_clauses; ++c) {
      int n_lits =
          cfg.lit_min +
          static_cast<int>(rng.below(
              static_cast<uint64_t>(cfg.lit_max - cfg.lit_min + 1)));
      used.clear();
      std::vector<ExprNode> lits;
      lits.reserve(static_cast<size_t>(n_lits));
      while (static_cast<int>(lits.size()) < n_lits) {
        int v = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.n)));
        if (!used.insert(v).second) continue;  // without replacement
        ExprNode lit = make_var(v);
        if (rng.coin()) lit = make_not(std::move(lit));
        lits.push_back(std::move(lit));
      }
      clauses.push_back(lits.size() == 1 ? std::move(lits[0])
                                         : make_and(std::move(lits)));
    }
    ExprNode expr = clauses.size() == 1 ? std::move(clauses[0])
                                        : make_or(std::move(clauses));
    bool label = eval_truth(expr, ds.assignment);
    ds.examples.push_back(LabeledExpr{std::move(expr), label});
  }
  return ds;
}

static bool is_literal(const ExprNode& e) {
  return e.kind == ExprKind::Var ||
         (e.kind == ExprKind::Not && e.kids[0].kind == ExprKind::Var);
}

static bool is_clause(const ExprNode& e) {
  if (is_literal(e)) return true;
  if (e.kind != ExprKind::And) return false;
  for (const auto& k : e.kids)
    if (!is_literal(k)) return false;
  return true;
}

bool is_dnf(const ExprNode& e) {
  if (is_clause(e)) return true;
  if (e.kind != ExprKind::Or) return false;
  for (const auto& k : e.kids)
    if (!is_clause(k)) return false;
  return true;
}

ExprNode shuffle_operands(const ExprNode& e, Rng& rng) {
  ExprNode out;
  out.kind = e.kind;
  out.var = e.var;
  out.kids.reserve(e.kids.size());
  for (const auto& k : e.kids) out.kids.push_back(shuffle_operands(k, rng));
  if (e.kind == ExprKind::And || e.kind == ExprKind::Or)
    rng.shuffle(out.kids);
  return out;
}

Splits split_dataset(const std::vector<LabeledExpr>& data, double f_train,
                     double f_valid, double f_test, uint64_t seed) {
  if (std::abs(f_train + f_valid + f_test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  size_t n = data.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::stream(seed, "split");
  rng.shuffle(idx);
  size_t n_train = static_cast<size_t>(std::llround(f_train * static_cast<double>(n)));
  size_t n_valid = static_cast<size_t>(std::llround(f_valid * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_valid = std::min(n_valid, n - n_train);
  Splits s;
  for (size_t i = 0; i < n; ++i) {
    const LabeledExpr& ex = data[idx[i]];
    if (i < n_train)
      s.train.push_back(ex);
    else if (i < n_train + n_valid)
      s.valid.push_back(ex);
    else
      s.test.push_back(ex);
  }
  return s;
}

void write_expr_file(const std::string& path,
                     const std::vector<LabeledExpr>& data,
                     const std::vector<std::string>& header_lines) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  for (const auto& h : header_lines) f << "# " << h << "\n";
  for (const auto& ex : data)
    f << render(ex.expr) << '\t' << (ex.label ? 1 : 0) << '\n';
}

std::vector<LabeledExpr> read_expr_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open: " + path);
  std::vector<LabeledExpr> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("line " + std::to_string(lineno) +
                      ": expected <expression>\\t<0|1>");
    std::string label_str = line.substr(tab + 1);
    if (label_str != "0" && label_str != "1")
      throw DataError("line " + std::to_string(lineno) + ": bad label '" +
                      label_str + "'");
    LabeledExpr ex;
    try {
      ex.expr = parse(line.substr(0, tab));
    } catch (const ParseError& pe) {
      throw DataError("line " + std::to_string(lineno) + ": " + pe.what());
    }
    ex.label = label_str == "1";
    out.push_back(std::move(ex));
  }
  return out;
}

int max_var_id(const ExprNode& e) {
  if (e.kind == ExprKind::Var) return e.var;
  int mx = -1;
  for (const auto& k : e.kids) mx = std::max(mx, max_var_id(k));
  return mx;
}

}  // namespace nlogic
