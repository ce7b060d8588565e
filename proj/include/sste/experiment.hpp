#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sste/data.hpp"
#include "sste/error.hpp"
#include "sste/evaluate.hpp"
#include "sste/propensity.hpp"
#include "sste/selfsample.hpp"
#include "sste/train.hpp"

namespace sste {

/// Flat key=value text, one key per line. Blank lines and lines starting
/// with '#' are ignored; later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

struct DataSource {
  enum class Kind { Synthetic, Tsv };
  Kind kind = Kind::Synthetic;
  SyntheticSpec synthetic;
  /// Tsv: either `biased` (split by `split` / `split_ratio`) or explicit
  /// `train` + `val`; `uniform` is the test set.
  std::filesystem::path biased, train, val, uniform;
  Schema schema = Schema::UserItemRating;
  SplitMode split = SplitMode::PerUserRandom;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  DataSource data;
  Objective objective = Objective::SSTE;
  double gamma = 0.5;
  double floor = 0.01;
  std::vector<double> epsilons_train{0.5};
  std::vector<double> epsilons_val{0.5};
  bool resample_each_epoch = false;
  /// Also self-evaluate Naive/IPS/SNIPS runs against auxiliary validation
  /// subsets. Off: baselines select on plain validation AUC.
  bool self_eval_baselines = false;
  TrainConfig train;
  std::vector<std::string> metrics = default_metric_names();
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;

  /// Canonical sorted key=value form; the run id hashes this text.
  std::string serialize() const;
  KeyValues to_key_values() const;
  static RunConfig from_key_values(const KeyValues& kv);
  /// Applies overrides on top of this config (unknown keys throw).
  RunConfig with(const KeyValues& overrides) const;
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical config text.
std::string run_id(const RunConfig& cfg);

struct LoadedData {
  Dataset train, val, test;
  Vocabulary vocab;
  std::optional<SyntheticData> synthetic;
};

LoadedData load_data(const DataSource& src);

struct RunResult {
  std::string id;
  std::filesystem::path dir;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  /// Selection report of the best epoch, with test metrics in per_metric.
  EvalReport report;
};

/// Failure of one pipeline stage; the stage is also written to status.txt.
class RunError : public Error {
 public:
  RunError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs self-sampling, training and evaluation end to end and persists
///   config.txt, epochs.jsonl, checkpoint.txt, report.json, status.txt
/// under output_dir/<run id>/. `data` may be supplied to share one load
/// between runs.
RunResult run_one(const RunConfig& cfg, const LoadedData* data = nullptr);

struct GridSpec {
  enum class Mode { FullGrid, RandomSample };
  /// Insertion order is grid order (first key varies slowest).
  std::vector<std::pair<std::string, std::vector<std::string>>> values;
  Mode mode = Mode::FullGrid;
  std::size_t sample_count = 0;
  std::uint64_t sample_seed = 0;

  std::size_t full_size() const;
  /// Combinations in grid order (sampled ones keep ascending grid order).
  std::vector<KeyValues> combinations() const;
  void validate() const;

  /// k in {10, 50}, lambda in {1e-5, 1e-3}, batch in {2^9, 2^12},
  /// lr in {1e-3, 1e-2}.
  static GridSpec desk_default();
  /// Grid file: key=v1,v2,... lines plus optional mode=full|random,
  /// count=<n>, sample_seed=<s>.
  static GridSpec from_key_values(const KeyValues& kv, const std::vector<std::string>& order);
};

GridSpec load_grid(const std::filesystem::path& path);

struct LeaderboardEntry {
  std::size_t grid_index = 0;
  KeyValues params;
  RunResult result;
};

struct GridFailure {
  std::size_t grid_index = 0;
  KeyValues params;
  std::string message;
};

struct GridResult {
  /// Sorted by modified validation score, descending; ties keep grid order.
  std::vector<LeaderboardEntry> leaderboard;
  std::vector<GridFailure> failures;
  std::string best_run_id;
  std::filesystem::path leaderboard_path;
};

/// Executes every combination as run_one with seed derive_seed(base.seed, index)
/// on a pool of `workers` threads and writes leaderboard.tsv / failures.tsv
/// into base.output_dir. Throws when every run fails.
GridResult run_grid(const GridSpec& grid, const RunConfig& base, std::size_t workers = 1,
                    const LoadedData* data = nullptr);

struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<std::string> row_names;
  std::vector<std::vector<double>> values;
  /// Markdown-style rendering: best per column in **bold**, second in __underline__.
  std::string text;
  std::string tsv;
  std::string json;
};

/// Columns AUC, nDCG, P@5, P@10, R@5, R@10 read from each run's report.json.
ComparisonTable make_table(const std::vector<std::filesystem::path>& run_dirs);

/// Column values already loaded (row name -> metric -> value).
ComparisonTable make_table(const std::vector<std::pair<std::string, std::map<std::string, double>>>& rows);

}  // namespace sste
