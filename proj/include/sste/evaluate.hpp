#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sste/data.hpp"
#include "sste/model.hpp"

namespace sste {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

/// Probability that a random positive outranks a random negative, ties 0.5.
/// Rank-sum in O(n log n). Throws UndefinedMetricError on single-class input.
double auc(std::span<const ScoredLabel> scored);

/// AUC of one branch over every interaction of `d`.
double dataset_auc(const MfModel& m, Branch b, const Dataset& d);

struct RankedList {
  UserId user = 0;
  std::vector<ItemId> ranked_items;
  /// Sorted ascending.
  std::vector<ItemId> relevant;
};

/// Full ranking per user over all items minus the user's positives in
/// `exclude` (pass nullptr to rank every item). Users whose relevant set is
/// empty after exclusion are skipped. Score ties break by ascending item id.
std::vector<RankedList> build_ranked_lists(const MfModel& m, Branch b, const Dataset& eval,
                                           const Dataset* exclude);

inline constexpr std::size_t kDefaultKs[] = {5, 10};

/// Keys: "p@K", "r@K" for each K in `ks`, and "ndcg@<ndcg_k>". Macro-averaged
/// over the lists.
std::map<std::string, double> topk_metrics(std::span<const RankedList> lists,
                                           std::span<const std::size_t> ks = kDefaultKs,
                                           std::size_t ndcg_k = 50);

double ndcg_at(const RankedList& list, std::size_t k);

/// Largest absolute difference between any two of {score_val} U scores_aux.
/// 0 when scores_aux is empty.
double alpha(double score_val, std::span<const double> scores_aux);

/// score_val - a for higher-better metrics, score_val + a otherwise.
double modified_score(double score_val, double a, bool higher_better = true);

/// numerator / impressions * 1000 (CLPM, COPM, PAPM).
double per_mille(double numerator, double impressions);

struct EvalReport {
  std::string main_metric = "auc";
  double score_on_val = 0.0;
  std::vector<double> scores_on_aux;
  double alpha = 0.0;
  double modified_score = 0.0;
  /// Metrics on the unbiased test set, when one was evaluated.
  std::map<std::string, double> per_metric;
};

/// Self-evaluation of the inference branch on the validation set and each
/// auxiliary validation subset, with AUC as the main metric.
EvalReport self_evaluate(const MfModel& m, const Dataset& val, std::span<const Dataset> aux_val);

/// Metric keys accepted by evaluate_metrics.
std::vector<std::string> default_metric_names();

/// Computes the requested metrics ("auc", "p@K", "r@K", "ndcg@K") of the
/// inference branch on `test`.
std::map<std::string, double> evaluate_metrics(const MfModel& m, const Dataset& test,
                                               const Dataset* exclude,
                                               std::span<const std::string> names);

}  // namespace sste
