#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sste/data.hpp"
#include "sste/evaluate.hpp"
#include "sste/model.hpp"
#include "sste/propensity.hpp"

namespace sste {

enum class Objective { Naive, IPS, SNIPS, SSTE };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

struct TrainConfig {
  std::size_t embedding_dim = 10;
  double init_scale = 0.01;
  double learning_rate = 1e-2;
  /// Weight of the (lambda / 2) * ||theta||^2 penalty on touched parameters.
  double l2_lambda = 1e-5;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  Objective objective = Objective::SSTE;
  std::uint64_t seed = 0;
  /// Mean epoch BCE above this (or any non-finite value) aborts training.
  double divergence_loss = 1e3;

  void validate() const;
};

/// Accumulates per-row gradients for the touched rows of one table.
class RowAccumulator {
 public:
  RowAccumulator() = default;
  RowAccumulator(std::size_t n_rows, std::size_t dim);

  std::span<double> row(std::size_t r);
  /// Rows in first-touch order.
  const std::vector<std::size_t>& touched() const { return touched_; }
  std::span<const double> values(std::size_t slot) const {
    return {values_.data() + slot * dim_, dim_};
  }
  std::size_t dim() const { return dim_; }
  /// Returns the accumulated value of a row (zeros when untouched).
  std::vector<double> get(std::size_t r) const;
  void clear();

 private:
  std::size_t dim_ = 0;
  std::vector<std::int64_t> slot_of_;
  std::vector<std::size_t> touched_;
  std::vector<double> values_;
};

/// Data-term gradient of one mini-batch: sum_i w_i * grad(BCE_i).
struct BatchGradient {
  Branch branch = Branch::Hat;
  RowAccumulator user_factors;
  RowAccumulator item_factors;
  RowAccumulator user_bias;
  RowAccumulator item_bias;
  double global_bias = 0.0;
  /// sum_i w_i * BCE_i
  double loss = 0.0;
  /// Unweighted sum of BCE over the batch, for epoch reporting.
  double raw_loss_sum = 0.0;
};

/// Per-instance weights of a batch loss. Naive: 1/B. IPS: 1/(B p_i).
/// SNIPS: (1/p_i) / sum_j (1/p_j). SSTE terms use the Naive weights.
std::vector<double> batch_weights(Objective o, std::span<const Interaction> batch,
                                  const PropensityTable* pt);

BatchGradient batch_gradient(const MfModel& m, Branch b, std::span<const Interaction> batch,
                             std::span<const double> weights);

/// Adaptive-moment optimizer with dense moment buffers that are only read and
/// written for touched rows (lazy update).
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(const MfModel& m);

  /// Adds lambda * theta to the gradient of every touched parameter, then
  /// takes one step.
  void step(MfModel& m, const BatchGradient& g, double lr, double l2_lambda);
  std::uint64_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
    explicit Moments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  };
  void update(double& param, double grad, Moments& mo, std::size_t idx, double lr) const;

  std::uint64_t t_ = 0;
  Moments user_factors_, item_factors_;
  Moments user_bias_[2], item_bias_[2], global_bias_[2];
};

/// Loss breakdown of one epoch (running batch losses) or of a full evaluation.
struct EpochLoss {
  /// Mean BCE of the Tilde branch on D_tr (0 when the term is absent).
  double d_tr = 0.0;
  /// Mean BCE of the Hat branch on its data (A_tr for SSTE, D_tr for baselines).
  double a_tr = 0.0;
  /// lambda/2 (||Theta~||^2 + ||Theta^||^2), shared factors counted in both.
  double reg = 0.0;
  double total = 0.0;
};

/// Full-data values of the terms of the joint objective at the current
/// parameters.
EpochLoss objective_terms(const MfModel& m, const Dataset& d_tr, std::span<const Dataset> a_tr,
                          double l2_lambda);

double regularization(const MfModel& m, double l2_lambda);

/// Holds the optimizer state across epochs of one training run.
class Trainer {
 public:
  Trainer(MfModel& model, const TrainConfig& cfg);

  /// One pass over D_tr (Tilde branch) and the concatenated auxiliary subsets
  /// (Hat branch), batches interleaved in proportion to the two sizes.
  EpochLoss sste_epoch(const Dataset& d_tr, std::span<const Dataset> a_tr);
  /// One pass of Naive / IPS / SNIPS training on the Hat branch.
  EpochLoss baseline_epoch(const Dataset& d_tr, const PropensityTable* pt);

  std::size_t epochs_done() const { return epoch_; }
  const Adam& optimizer() const { return adam_; }

 private:
  void check(const EpochLoss& loss) const;

  MfModel& model_;
  TrainConfig cfg_;
  Adam adam_;
  std::size_t epoch_ = 0;
};

/// Strict-improvement early stopping; the first epoch reaching the best score
/// wins ties.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the score of `epoch` (1-based); true when it is a new best.
  bool update(std::size_t epoch, double score);
  bool should_stop() const { return epochs_since_best_ >= patience_; }

  double best_score() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_best() const { return epochs_since_best_; }

 private:
  std::size_t patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_since_best_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  EpochLoss loss;
  EvalReport report;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_score = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  std::vector<EpochRecord> history;
};

struct FitInputs {
  const Dataset* train = nullptr;
  const Dataset* val = nullptr;
  std::span<const Dataset> aux_train;
  std::span<const Dataset> aux_val;
  /// Required by IPS and SNIPS.
  const PropensityTable* propensity = nullptr;
  /// When set, called before every epoch after the first to redraw A_tr.
  std::function<std::vector<Dataset>(std::size_t epoch)> resample_train;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
  MfModel model;
  TrainState state;
};

/// Alternates one training epoch with self-evaluation, keeps the parameters
/// of the best modified validation score, and stops on patience or
/// max_epochs.
FitResult fit(const FitInputs& in, const TrainConfig& cfg);

}  // namespace sste
