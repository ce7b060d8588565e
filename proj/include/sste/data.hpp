#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sste {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::uint8_t label = 0;
  std::optional<std::uint8_t> raw_rating;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Ratings strictly greater than 3 are positives.
constexpr std::uint8_t binarize_rating(int rating) { return rating > 3 ? 1 : 0; }

enum class Provenance { BiasedTrain, BiasedValidation, UniformTest, AuxiliarySubset };

std::string_view to_string(Provenance p);

enum class Schema { UserItemRating, UserItemLabel };

Schema parse_schema(std::string_view s);

/// Maps raw (file) ids to dense 0-based indices and back. Shared by every
/// file of one experiment so that train/val/test address the same tables.
class Vocabulary {
 public:
  UserId user_index(std::int64_t raw);
  ItemId item_index(std::int64_t raw);
  std::optional<UserId> find_user(std::int64_t raw) const;
  std::optional<ItemId> find_item(std::int64_t raw) const;

  std::int64_t raw_user(UserId u) const { return user_raw_.at(u); }
  std::int64_t raw_item(ItemId i) const { return item_raw_.at(i); }
  std::size_t n_users() const { return user_raw_.size(); }
  std::size_t n_items() const { return item_raw_.size(); }
  const std::vector<std::int64_t>& raw_users() const { return user_raw_; }
  const std::vector<std::int64_t>& raw_items() const { return item_raw_; }

  static Vocabulary from_raw(std::vector<std::int64_t> users, std::vector<std::int64_t> items);
  /// Identity vocabulary 0..n-1 for generated data.
  static Vocabulary identity(std::size_t n_users, std::size_t n_items);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.user_raw_ == b.user_raw_ && a.item_raw_ == b.item_raw_;
  }

 private:
  std::unordered_map<std::int64_t, UserId> user_map_;
  std::unordered_map<std::int64_t, ItemId> item_map_;
  std::vector<std::int64_t> user_raw_;
  std::vector<std::int64_t> item_raw_;
};

struct Dataset {
  std::vector<Interaction> interactions;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  Provenance provenance = Provenance::BiasedTrain;
  std::optional<std::uint64_t> rng_seed;
  /// Truncation threshold that produced an auxiliary subset.
  std::optional<double> epsilon;

  std::size_t size() const { return interactions.size(); }
  bool empty() const { return interactions.empty(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }

  /// Throws ValidationError if an id is out of range or a label is not binary.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetStats {
  std::size_t n_feedback = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double pn_ratio_percent = 0.0;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
};

/// Loads a headerless TSV of (user, item, rating|label) triples. Raw ids are
/// densely re-indexed through `vocab`, which grows as new ids are seen.
Dataset load_tsv(const std::filesystem::path& path, Schema schema, Vocabulary& vocab,
                 Provenance provenance = Provenance::BiasedTrain);
Dataset load_tsv(const std::filesystem::path& path, Schema schema,
                 Provenance provenance = Provenance::BiasedTrain);
Dataset parse_tsv(std::istream& in, Schema schema, Vocabulary& vocab,
                  Provenance provenance = Provenance::BiasedTrain);

/// Writes the label schema, mapping dense ids back through `vocab` when given.
void write_tsv(std::ostream& out, const Dataset& d, const Vocabulary* vocab = nullptr);
void save_tsv(const std::filesystem::path& path, const Dataset& d,
              const Vocabulary* vocab = nullptr);

/// Widens the id ranges of every dataset to the vocabulary's current size.
void conform_dims(std::vector<Dataset*> datasets, std::size_t n_users, std::size_t n_items);

enum class SplitMode { PerUserRandom, Chronological };

SplitMode parse_split_mode(std::string_view s);

struct SplitResult {
  Dataset first;
  Dataset second;
};

/// PerUserRandom: each user with n >= 2 interactions keeps ceil(ratio * n) of
/// them (chosen by a seeded shuffle) in `first`; users with fewer go wholly to
/// `first`. Chronological: the first ceil(ratio * len) interactions. Relative
/// order is preserved inside both outputs.
SplitResult split_ratio(const Dataset& d, double ratio, SplitMode mode, std::uint64_t seed);

DatasetStats stats(const Dataset& d);

struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 100;
  std::size_t latent_dim = 8;
  /// Exponent applied to item popularity by the logging policy.
  double exposure_bias_strength = 1.5;
  /// Mean relevance level: the logit offset is logit(positive_threshold).
  double positive_threshold = 0.3;
  /// Scale applied to the factor dot product before the sigmoid.
  double relevance_scale = 3.0;
  /// Zipf exponent of the popularity curve popularity(rank) = rank^-exponent.
  double popularity_exponent = 1.0;
  /// Weight of the item's popularity in its own relevance (logit units per
  /// unit of standardized log-popularity). 0 makes relevance independent of
  /// exposure.
  double popularity_relevance = 0.0;
  std::size_t train_impressions = 10000;
  std::size_t test_impressions = 5000;
  double val_ratio = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset val;
  Dataset test;
  /// Row-major n_users x n_items true relevance probabilities.
  std::vector<double> relevance;
  /// Popularity per item (unnormalized, maximum 1).
  std::vector<double> popularity;
};

/// Logged (biased) impressions are drawn per user without replacement with
/// weights popularity^exposure_bias_strength, then split per user into
/// train/val. Test impressions are uniform over items the user was not logged
/// on. Labels are Bernoulli(relevance). Deterministic given the spec.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace sste
