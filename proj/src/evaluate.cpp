#include "sste/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "sste/error.hpp"

namespace sste {

double auc(std::span<const ScoredLabel> scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t n_pos = 0;
  for (const auto& s : scored) {
    if (std::isnan(s.score)) throw ValidationError("AUC input contains NaN scores");
    if (s.label != 0 && s.label != 1) throw ValidationError("AUC labels must be 0/1");
    n_pos += static_cast<std::uint64_t>(s.label);
  }
  const std::uint64_t n_neg = scored.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetricError("AUC needs at least one positive and one negative");

  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scored[a].score < scored[b].score; });

  // Twice the rank sum of the positives; tie groups share the mean rank,
  // and 2 * mean rank = first + last is an integer.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && scored[order[hi + 1]].score == scored[order[lo]].score) ++hi;
    std::uint64_t pos_in_group = 0;
    for (std::size_t j = lo; j <= hi; ++j) pos_in_group += std::uint64_t(scored[order[j]].label);
    twice_rank_sum += pos_in_group * ((lo + 1) + (hi + 1));
    lo = hi + 1;
  }
  const double numer = static_cast<double>(twice_rank_sum - n_pos * (n_pos + 1));
  return numer / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double dataset_auc(const MfModel& m, Branch b, const Dataset& d) {
  std::vector<ScoredLabel> scored(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto& x = d.interactions[j];
    // The logit orders identically to the probability without saturating.
    scored[j] = {logit(m, b, x.user, x.item), x.label};
  }
  return auc(scored);
}

std::vector<RankedList> build_ranked_lists(const MfModel& m, Branch b, const Dataset& eval,
                                           const Dataset* exclude) {
  std::vector<std::vector<ItemId>> relevant(m.n_users());
  std::vector<bool> seen(m.n_users(), false);
  for (const auto& x : eval.interactions) {
    if (x.user >= m.n_users() || x.item >= m.n_items())
      throw ValidationError("evaluation set id outside model range");
    seen[x.user] = true;
    if (x.label == 1) relevant[x.user].push_back(x.item);
  }
  std::vector<std::unordered_set<ItemId>> excluded(m.n_users());
  if (exclude)
    for (const auto& x : exclude->interactions)
      if (x.label == 1 && x.user < m.n_users()) excluded[x.user].insert(x.item);

  std::vector<RankedList> lists;
  std::vector<std::pair<double, ItemId>> scored;
  for (std::size_t u = 0; u < m.n_users(); ++u) {
    if (!seen[u]) continue;
    auto& rel = relevant[u];
    const auto& ex = excluded[u];
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    std::erase_if(rel, [&](ItemId i) { return ex.contains(i); });
    if (rel.empty()) continue;

    scored.clear();
    for (std::size_t i = 0; i < m.n_items(); ++i) {
      if (ex.contains(ItemId(i))) continue;
      scored.emplace_back(logit(m, b, UserId(u), ItemId(i)), ItemId(i));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& c) {
      return a.first > c.first || (a.first == c.first && a.second < c.second);
    });
    RankedList list;
    list.user = UserId(u);
    list.ranked_items.reserve(scored.size());
    for (const auto& s : scored) list.ranked_items.push_back(s.second);
    list.relevant = std::move(rel);
    lists.push_back(std::move(list));
  }
  return lists;
}

namespace {
std::size_t hits_at(const RankedList& list, std::size_t k) {
  std::size_t hits = 0;
  const auto n = std::min(k, list.ranked_items.size());
  for (std::size_t r = 0; r < n; ++r)
    if (std::binary_search(list.relevant.begin(), list.relevant.end(), list.ranked_items[r]))
      ++hits;
  return hits;
}
}  // namespace

double ndcg_at(const RankedList& list, std::size_t k) {
  if (list.relevant.empty()) throw UndefinedMetricError("nDCG needs a relevant item");
  double dcg = 0.0;
  const auto n = std::min(k, list.ranked_items.size());
  for (std::size_t r = 0; r < n; ++r)
    if (std::binary_search(list.relevant.begin(), list.relevant.end(), list.ranked_items[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, list.relevant.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

std::map<std::string, double> topk_metrics(std::span<const RankedList> lists,
                                           std::span<const std::size_t> ks,
                                           std::size_t ndcg_k) {
  if (lists.empty()) throw UndefinedMetricError("top-K metrics need at least one user");
  std::map<std::string, double> sums;
  for (const auto& list : lists) {
    if (list.relevant.empty()) throw UndefinedMetricError("ranked list without relevant items");
    for (auto k : ks) {
      const double hits = static_cast<double>(hits_at(list, k));
      sums["p@" + std::to_string(k)] += hits / static_cast<double>(k);
      sums["r@" + std::to_string(k)] += hits / static_cast<double>(list.relevant.size());
    }
    sums["ndcg@" + std::to_string(ndcg_k)] += ndcg_at(list, ndcg_k);
  }
  for (auto& [name, v] : sums) v /= static_cast<double>(lists.size());
  return sums;
}

double alpha(double score_val, std::span<const double> scores_aux) {
  double a = 0.0;
  for (std::size_t i = 0; i < scores_aux.size(); ++i) {
    a = std::max(a, std::abs(score_val - scores_aux[i]));
    for (std::size_t j = i + 1; j < scores_aux.size(); ++j)
      a = std::max(a, std::abs(scores_aux[i] - scores_aux[j]));
  }
  return a;
}

double modified_score(double score_val, double a, bool higher_better) {
  if (!(a >= 0.0)) throw ValidationError("alpha must be non-negative");
  return higher_better ? score_val - a : score_val + a;
}

double per_mille(double numerator, double impressions) {
  if (!(impressions > 0.0)) throw DivisionGuardError("per-mille metric needs impressions > 0");
  return numerator / impressions * 1000.0;
}

EvalReport self_evaluate(const MfModel& m, const Dataset& val, std::span<const Dataset> aux_val) {
  EvalReport r;
  r.score_on_val = dataset_auc(m, Branch::Hat, val);
  for (const auto& a : aux_val) r.scores_on_aux.push_back(dataset_auc(m, Branch::Hat, a));
  r.alpha = alpha(r.score_on_val, r.scores_on_aux);
  r.modified_score = modified_score(r.score_on_val, r.alpha, true);
  return r;
}

std::vector<std::string> default_metric_names() {
  return {"auc", "ndcg@50", "p@5", "p@10", "r@5", "r@10"};
}

std::map<std::string, double> evaluate_metrics(const MfModel& m, const Dataset& test,
                                               const Dataset* exclude,
                                               std::span<const std::string> names) {
  std::vector<std::size_t> ks;
  std::vector<std::size_t> ndcg_ks;
  bool want_auc = false;
  for (const auto& n : names) {
    if (n == "auc") {
      want_auc = true;
      continue;
    }
    const auto at = n.find('@');
    std::size_t k = 0;
    try {
      if (at == std::string::npos) throw std::invalid_argument("");
      std::size_t used = 0;
      k = std::stoul(n.substr(at + 1), &used);
      if (used != n.size() - at - 1 || k == 0) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ValidationError("unknown metric '" + n + "'");
    }
    const auto kind = n.substr(0, at);
    if (kind == "p" || kind == "r") {
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    } else if (kind == "ndcg") {
      ndcg_ks.push_back(k);
    } else {
      throw ValidationError("unknown metric '" + n + "'");
    }
  }

  std::map<std::string, double> all;
  if (want_auc) all["auc"] = dataset_auc(m, Branch::Hat, test);
  if (!ks.empty() || !ndcg_ks.empty()) {
    const auto lists = build_ranked_lists(m, Branch::Hat, test, exclude);
    if (ndcg_ks.empty()) ndcg_ks.push_back(50);
    for (auto nk : ndcg_ks) {
      auto part = topk_metrics(lists, ks, nk);
      all.insert(part.begin(), part.end());
    }
  }
  std::map<std::string, double> out;
  for (const auto& n : names) out[n] = all.at(n);
  return out;
}

}  // namespace sste
