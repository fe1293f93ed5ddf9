#include "nlogic/rec_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nlogic/errors.hpp"

namespace nlogic {

namespace {

[[noreturn]] void row_error(const std::string& path, size_t line,
                            const std::string& what) {
  throw DataError(path + ": line " + std::to_string(line) + ": " + what);
}

int check_rating(double r, const std::string& path, size_t line) {
  int ri = static_cast<int>(r);
  if (static_cast<double>(ri) != r || ri < 1 || ri > 5)
    row_error(path, line, "rating " + std::to_string(r) + " outside 1..5");
  return ri;
}

}  // namespace

RatingsData load_ratings(const std::string& path, const std::string& format) {
  if (format != "ml100k" && format != "amazon-csv")
    throw ConfigError("unknown ratings format: " + format);
  std::ifstream f(path);
  if (!f) throw DataError("cannot open: " + path);

  struct RawRow {
    std::string user, item;
    int rating;
    int64_t ts;
  };
  std::vector<RawRow> rows;
  std::string line;
  size_t lineno = 0;
  const char sep = format == "ml100k" ? '\t' : ',';
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, sep)) cols.push_back(col);
    if (cols.size() != 4)
      row_error(path, lineno, "expected 4 columns, got " +
                                  std::to_string(cols.size()));
    RawRow r;
    r.user = cols[0];
    r.item = cols[1];
    try {
      r.rating = check_rating(std::stod(cols[2]), path, lineno);
      r.ts = static_cast<int64_t>(std::stoll(cols[3]));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      row_error(path, lineno, "unparsable rating/timestamp");
    }
    rows.push_back(std::move(r));
  }

  RatingsData out;
  std::unordered_map<std::string, int> umap, imap;
  if (format == "ml100k") {
    // numeric ids, densified in sorted order so the mapping is stable
    std::map<long, int> users, items;
    for (size_t i = 0; i < rows.size(); ++i) {
      try {
        users.emplace(std::stol(rows[i].user), 0);
        items.emplace(std::stol(rows[i].item), 0);
      } catch (const std::exception&) {
        row_error(path, i + 1, "non-numeric id");
      }
    }
    for (auto& [orig, dense] : users) {
      dense = out.n_users++;
      out.user_names.push_back(std::to_string(orig));
      umap[std::to_string(orig)] = dense;
    }
    for (auto& [orig, dense] : items) {
      dense = out.n_items++;
      out.item_names.push_back(std::to_string(orig));
      imap[std::to_string(orig)] = dense;
    }
  } else {
    // string ids mapped densely in first-appearance order
    for (const auto& r : rows) {
      if (umap.emplace(r.user, out.n_users).second) {
        out.user_names.push_back(r.user);
        ++out.n_users;
      }
      if (imap.emplace(r.item, out.n_items).second) {
        out.item_names.push_back(r.item);
        ++out.n_items;
      }
    }
  }

  for (const auto& r : rows) {
    Interaction it;
    it.user = umap.at(r.user);
    it.item = imap.at(r.item);
    it.rating = r.rating;
    it.timestamp = r.ts;
    out.interactions.push_back(it);
  }
  return out;
}

void write_id_sidecar(const std::string& path,
                      const std::vector<std::string>& names) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  for (size_t i = 0; i < names.size(); ++i)
    f << names[i] << '\t' << i << '\n';
}

bool binarize(int rating) {
  if (rating < 1 || rating > 5)
    throw ContractError("rating outside 1..5: " + std::to_string(rating));
  return rating >= 4;
}

RatingsData subsample_users(const RatingsData& data, int max_users) {
  if (max_users <= 0 || max_users >= data.n_users) return data;
  RatingsData out;
  out.n_users = max_users;
  out.n_items = data.n_items;
  out.item_names = data.item_names;
  out.user_names.assign(data.user_names.begin(),
                        data.user_names.begin() + max_users);
  for (const auto& it : data.interactions)
    if (it.user < max_users) out.interactions.push_back(it);
  return out;
}

std::vector<std::vector<Interaction>> user_streams(const RatingsData& data) {
  // latest rating wins per (user, item): later (timestamp, file order)
  std::unordered_map<int64_t, size_t> latest;
  latest.reserve(data.interactions.size());
  for (size_t i = 0; i < data.interactions.size(); ++i) {
    const Interaction& it = data.interactions[i];
    int64_t key = static_cast<int64_t>(it.user) * data.n_items + it.item;
    auto [pos, inserted] = latest.emplace(key, i);
    if (!inserted) {
      const Interaction& prev = data.interactions[pos->second];
      if (it.timestamp > prev.timestamp ||
          (it.timestamp == prev.timestamp && i > pos->second))
        pos->second = i;
    }
  }

  std::vector<std::vector<size_t>> kept(static_cast<size_t>(data.n_users));
  for (const auto& [key, idx] : latest)
    kept[static_cast<size_t>(data.interactions[idx].user)].push_back(idx);

  std::vector<std::vector<Interaction>> streams(static_cast<size_t>(data.n_users));
  for (size_t u = 0; u < kept.size(); ++u) {
    auto& ids = kept[u];
    std::sort(ids.begin(), ids.end(), [&](size_t a, size_t b) {
      const Interaction& x = data.interactions[a];
      const Interaction& y = data.interactions[b];
      if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
      return a < b;
    });
    streams[u].reserve(ids.size());
    for (size_t i : ids) streams[u].push_back(data.interactions[i]);
  }
  return streams;
}

std::vector<RecExpr> build_expressions(const std::vector<Interaction>& stream,
                                       int max_hist) {
  std::vector<RecExpr> out;
  if (stream.size() < 2) return out;
  for (size_t k = 1; k < stream.size(); ++k) {
    RecExpr r;
    r.user = stream[k].user;
    r.target = stream[k].item;
    r.label = binarize(stream[k].rating);
    r.target_pos = static_cast<int>(k) + 1;
    size_t begin = k > static_cast<size_t>(max_hist) ? k - static_cast<size_t>(max_hist) : 0;
    for (size_t j = begin; j < k; ++j)
      r.history.emplace_back(stream[j].item, binarize(stream[j].rating));
    out.push_back(std::move(r));
  }
  return out;
}

ExprNode to_expr_node(const RecExpr& r) {
  ExprNode neg_hist = history_expr(r.history);
  std::vector<ExprNode> ops;
  ops.push_back(std::move(neg_hist));
  ops.push_back(make_var(r.target));
  return make_or(std::move(ops));
}

LabeledExpr to_labeled_expr(const RecExpr& r) {
  return LabeledExpr{to_expr_node(r), r.label};
}

RecSplits split_rec(const std::vector<std::vector<RecExpr>>& per_user) {
  RecSplits out;
  for (const auto& exprs : per_user) {
    if (exprs.empty()) continue;
    // stream length = last target position
    int n_inter = exprs.back().target_pos;
    std::vector<const RecExpr*> remaining;
    for (const auto& e : exprs) {
      if (e.target_pos <= 5 || n_inter <= 5)
        out.train.push_back(e);
      else
        remaining.push_back(&e);
    }
    if (remaining.empty()) continue;
    // last -> test, second-to-last -> valid, rest -> train
    size_t m = remaining.size();
    for (size_t i = 0; i + 2 < m; ++i) out.train.push_back(*remaining[i]);
    if (m >= 2) out.valid.push_back(*remaining[m - 2]);
    out.test.push_back(*remaining[m - 1]);
  }
  return out;
}

NegSampler::NegSampler(int n_items, const std::vector<Interaction>& interactions)
    : n_items_(n_items) {
  int n_users = 0;
  for (const auto& it : interactions) n_users = std::max(n_users, it.user + 1);
  liked_.resize(static_cast<size_t>(n_users));
  for (const auto& it : interactions)
    if (binarize(it.rating)) liked_[static_cast<size_t>(it.user)].push_back(it.item);
  for (auto& v : liked_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

bool NegSampler::is_liked(int user, int item) const {
  if (user < 0 || static_cast<size_t>(user) >= liked_.size()) return false;
  const auto& v = liked_[static_cast<size_t>(user)];
  return std::binary_search(v.begin(), v.end(), item);
}

long NegSampler::pool_size(int user) const {
  size_t n_liked =
      user >= 0 && static_cast<size_t>(user) < liked_.size()
          ? liked_[static_cast<size_t>(user)].size()
          : 0;
  return static_cast<long>(n_items_) - static_cast<long>(n_liked);
}

int NegSampler::sample(int user, Rng& rng) const {
  if (pool_size(user) <= 0) return -1;
  for (;;) {
    int item = static_cast<int>(rng.below(static_cast<uint64_t>(n_items_)));
    if (!is_liked(user, item)) return item;
  }
}

std::vector<int> NegSampler::sample_distinct(int user, int k, Rng& rng) const {
  long pool = pool_size(user);
  if (pool < k)
    throw DataError("candidate pool for user " + std::to_string(user) +
                    " has " + std::to_string(pool) + " items; reduce k=" +
                    std::to_string(k));
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  std::unordered_set<int> seen;
  while (static_cast<int>(out.size()) < k) {
    int item = static_cast<int>(rng.below(static_cast<uint64_t>(n_items_)));
    if (is_liked(user, item)) continue;
    if (!seen.insert(item).second) continue;
    out.push_back(item);
  }
  return out;
}

NegSampleFn NegSampler::fn() const {
  return [this](int user, Rng& rng) { return sample(user, rng); };
}

RankTask leave_one_out_candidates(const RecExpr& positive,
                                  const NegSampler& sampler, int k, Rng& rng) {
  RankTask t;
  t.user = positive.user;
  t.history = positive.history;
  t.pos_item = positive.target;
  t.negatives = sampler.sample_distinct(positive.user, k, rng);
  return t;
}

RecTrainExample to_train_example(const RecExpr& r) {
  RecTrainExample e;
  e.user = r.user;
  e.history = r.history;
  e.pos_item = r.target;
  return e;
}

ColdItemStats cold_item_stats(const RecSplits& splits, int n_items) {
  std::vector<uint8_t> seen(static_cast<size_t>(n_items), 0);
  for (const auto& e : splits.train) {
    seen[static_cast<size_t>(e.target)] = 1;
    for (const auto& [item, liked] : e.history) seen[static_cast<size_t>(item)] = 1;
  }
  ColdItemStats st;
  for (uint8_t s : seen)
    if (!s) ++st.cold_items;
  auto count = [&](const std::vector<RecExpr>& v) {
    for (const auto& e : v) {
      bool cold = !seen[static_cast<size_t>(e.target)];
      for (const auto& [item, liked] : e.history)
        cold = cold || !seen[static_cast<size_t>(item)];
      if (cold) ++st.cold_occurrences;
    }
  };
  count(splits.valid);
  count(splits.test);
  return st;
}

}  // namespace nlogic
