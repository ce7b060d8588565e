#include "sste/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sste/error.hpp"
#include "sste/random.hpp"

namespace sste {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::BiasedTrain: return "biased_train";
    case Provenance::BiasedValidation: return "biased_validation";
    case Provenance::UniformTest: return "uniform_test";
    case Provenance::AuxiliarySubset: return "auxiliary_subset";
  }
  return "unknown";
}

Schema parse_schema(std::string_view s) {
  if (s == "rating" || s == "user_item_rating") return Schema::UserItemRating;
  if (s == "label" || s == "user_item_label") return Schema::UserItemLabel;
  throw ValidationError("unknown schema '" + std::string(s) + "' (expected rating|label)");
}

SplitMode parse_split_mode(std::string_view s) {
  if (s == "per_user" || s == "per_user_random") return SplitMode::PerUserRandom;
  if (s == "chronological") return SplitMode::Chronological;
  throw ValidationError("unknown split mode '" + std::string(s) +
                        "' (expected per_user|chronological)");
}

UserId Vocabulary::user_index(std::int64_t raw) {
  auto [it, inserted] = user_map_.try_emplace(raw, static_cast<UserId>(user_raw_.size()));
  if (inserted) user_raw_.push_back(raw);
  return it->second;
}

ItemId Vocabulary::item_index(std::int64_t raw) {
  auto [it, inserted] = item_map_.try_emplace(raw, static_cast<ItemId>(item_raw_.size()));
  if (inserted) item_raw_.push_back(raw);
  return it->second;
}

std::optional<UserId> Vocabulary::find_user(std::int64_t raw) const {
  auto it = user_map_.find(raw);
  if (it == user_map_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemId> Vocabulary::find_item(std::int64_t raw) const {
  auto it = item_map_.find(raw);
  if (it == item_map_.end()) return std::nullopt;
  return it->second;
}

Vocabulary Vocabulary::from_raw(std::vector<std::int64_t> users, std::vector<std::int64_t> items) {
  Vocabulary v;
  for (auto u : users) v.user_index(u);
  for (auto i : items) v.item_index(i);
  if (v.n_users() != users.size() || v.n_items() != items.size())
    throw ValidationError("vocabulary contains duplicate raw ids");
  return v;
}

Vocabulary Vocabulary::identity(std::size_t n_users, std::size_t n_items) {
  Vocabulary v;
  for (std::size_t u = 0; u < n_users; ++u) v.user_index(static_cast<std::int64_t>(u));
  for (std::size_t i = 0; i < n_items; ++i) v.item_index(static_cast<std::int64_t>(i));
  return v;
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count_if(
      interactions.begin(), interactions.end(), [](const Interaction& x) { return x.label == 1; }));
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& x = interactions[i];
    if (x.user >= n_users || x.item >= n_items)
      throw ValidationError("interaction " + std::to_string(i) + " has id out of range");
    if (x.label > 1)
      throw ValidationError("interaction " + std::to_string(i) + " has non-binary label");
    if (x.raw_rating && binarize_rating(*x.raw_rating) != x.label)
      throw ValidationError("interaction " + std::to_string(i) + " label disagrees with rating");
  }
}

namespace {

bool parse_int(std::string_view field, std::int64_t& out) {
  if (field.empty()) return false;
  const char* first = field.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), out);
  return ec == std::errc{} && ptr == field.data() + field.size();
}

}  // namespace

Dataset parse_tsv(std::istream& in, Schema schema, Vocabulary& vocab, Provenance provenance) {
  Dataset d;
  d.provenance = provenance;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string_view rest(line);
    std::int64_t fields[3];
    int n = 0;
    while (true) {
      const auto tab = rest.find('\t');
      const auto field = rest.substr(0, tab);
      if (n == 3) throw ParseError(line_no, "expected 3 tab-separated fields");
      if (!parse_int(field, fields[n]))
        throw ParseError(line_no, "field " + std::to_string(n + 1) + " is not an integer");
      ++n;
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (n != 3) throw ParseError(line_no, "expected 3 tab-separated fields");

    Interaction x;
    if (schema == Schema::UserItemRating) {
      if (fields[2] < 1 || fields[2] > 5)
        throw ValidationError("line " + std::to_string(line_no) + ": rating " +
                              std::to_string(fields[2]) + " outside 1..5");
      x.raw_rating = static_cast<std::uint8_t>(fields[2]);
      x.label = binarize_rating(static_cast<int>(fields[2]));
    } else {
      if (fields[2] != 0 && fields[2] != 1)
        throw ValidationError("line " + std::to_string(line_no) + ": label " +
                              std::to_string(fields[2]) + " is not 0/1");
      x.label = static_cast<std::uint8_t>(fields[2]);
    }
    x.user = vocab.user_index(fields[0]);
    x.item = vocab.item_index(fields[1]);
    d.interactions.push_back(x);
  }
  if (d.interactions.empty()) throw ValidationError("input contains no interactions");
  d.n_users = vocab.n_users();
  d.n_items = vocab.n_items();
  return d;
}

Dataset load_tsv(const std::filesystem::path& path, Schema schema, Vocabulary& vocab,
                 Provenance provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return parse_tsv(in, schema, vocab, provenance);
}

Dataset load_tsv(const std::filesystem::path& path, Schema schema, Provenance provenance) {
  Vocabulary vocab;
  return load_tsv(path, schema, vocab, provenance);
}

void write_tsv(std::ostream& out, const Dataset& d, const Vocabulary* vocab) {
  for (const auto& x : d.interactions) {
    const std::int64_t u = vocab ? vocab->raw_user(x.user) : x.user;
    const std::int64_t i = vocab ? vocab->raw_item(x.item) : x.item;
    out << u << '\t' << i << '\t' << int(x.label) << '\n';
  }
}

void save_tsv(const std::filesystem::path& path, const Dataset& d, const Vocabulary* vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_tsv(out, d, vocab);
}

void conform_dims(std::vector<Dataset*> datasets, std::size_t n_users, std::size_t n_items) {
  for (auto* d : datasets) {
    if (d->n_users > n_users || d->n_items > n_items)
      throw ValidationError("conform_dims cannot shrink a dataset");
    d->n_users = n_users;
    d->n_items = n_items;
  }
}

SplitResult split_ratio(const Dataset& d, double ratio, SplitMode mode, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0,1)");
  if (d.empty()) throw ValidationError("cannot split an empty dataset");

  // Guards against ratio * n landing a hair above an integer.
  auto keep_count = [ratio](std::size_t n) {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  };

  std::vector<bool> to_first(d.size(), false);
  if (mode == SplitMode::Chronological) {
    const auto k = keep_count(d.size());
    std::fill(to_first.begin(), to_first.begin() + static_cast<std::ptrdiff_t>(k), true);
  } else {
    std::vector<std::vector<std::size_t>> by_user(d.n_users);
    for (std::size_t i = 0; i < d.size(); ++i) by_user[d.interactions[i].user].push_back(i);
    Engine rng(seed);
    for (auto& rows : by_user) {
      if (rows.empty()) continue;
      if (rows.size() < 2) {
        to_first[rows[0]] = true;
        continue;
      }
      shuffle(std::span(rows), rng);
      const auto k = keep_count(rows.size());
      for (std::size_t j = 0; j < k; ++j) to_first[rows[j]] = true;
    }
  }

  SplitResult out;
  for (auto* part : {&out.first, &out.second}) {
    part->n_users = d.n_users;
    part->n_items = d.n_items;
    part->provenance = d.provenance;
  }
  out.second.provenance =
      d.provenance == Provenance::BiasedTrain ? Provenance::BiasedValidation : d.provenance;
  for (std::size_t i = 0; i < d.size(); ++i)
    (to_first[i] ? out.first : out.second).interactions.push_back(d.interactions[i]);
  return out;
}

DatasetStats stats(const Dataset& d) {
  if (d.empty()) throw ValidationError("stats of an empty dataset");
  DatasetStats s;
  s.n_feedback = d.size();
  s.positives = d.positives();
  s.negatives = s.n_feedback - s.positives;
  if (s.negatives == 0) throw DivisionGuardError("P/N ratio undefined: dataset has no negatives");
  s.pn_ratio_percent =
      100.0 * static_cast<double>(s.positives) / static_cast<double>(s.negatives);
  s.n_users = d.n_users;
  s.n_items = d.n_items;
  return s;
}

// ---------------------------------------------------------------------------
// synthetic data

void SyntheticSpec::validate() const {
  if (n_users == 0 || n_items == 0 || latent_dim == 0 || train_impressions == 0 ||
      test_impressions == 0)
    throw ValidationError("synthetic spec counts must be positive");
  if (latent_dim > std::min(n_users, n_items))
    throw ValidationError("latent_dim must not exceed min(n_users, n_items)");
  if (!(exposure_bias_strength >= 0.0) || !std::isfinite(exposure_bias_strength))
    throw ValidationError("exposure_bias_strength must be finite and >= 0");
  if (!(positive_threshold > 0.0 && positive_threshold < 1.0))
    throw ValidationError("positive_threshold must lie in (0,1)");
  if (!(popularity_exponent >= 0.0) || !std::isfinite(relevance_scale) ||
      !std::isfinite(popularity_relevance))
    throw ValidationError("synthetic spec has invalid shape parameters");
  if (!(val_ratio > 0.0 && val_ratio < 1.0)) throw ValidationError("val_ratio must lie in (0,1)");
  if (train_impressions > n_users * n_items)
    throw ValidationError("train_impressions exceeds the number of user-item pairs");
}

namespace {

enum Stream : std::uint64_t {
  kFactors = 1,
  kPopularity = 2,
  kExposure = 3,
  kLabels = 4,
  kSplit = 5,
  kTest = 6,
};

std::vector<std::size_t> per_user_quota(std::size_t total, std::size_t n_users,
                                        std::size_t cap) {
  std::vector<std::size_t> q(n_users, total / n_users);
  for (std::size_t u = 0; u < total % n_users; ++u) ++q[u];
  for (auto& x : q) x = std::min(x, cap);
  return q;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t nu = spec.n_users, ni = spec.n_items, k = spec.latent_dim;
  SyntheticData out;

  // Popularity: Zipf curve over a random permutation of items.
  {
    Engine rng(derive_seed(spec.seed, kPopularity));
    std::vector<std::size_t> rank(ni);
    std::iota(rank.begin(), rank.end(), 1);
    shuffle(std::span(rank), rng);
    out.popularity.resize(ni);
    for (std::size_t i = 0; i < ni; ++i)
      out.popularity[i] = std::pow(static_cast<double>(rank[i]), -spec.popularity_exponent);
  }

  // Relevance = sigmoid(scale * <p_u, q_i> / sqrt(k) + logit(threshold) + item offset).
  {
    Engine rng(derive_seed(spec.seed, kFactors));
    std::vector<double> pu(nu * k), qi(ni * k);
    for (auto& x : pu) x = standard_normal(rng);
    for (auto& x : qi) x = standard_normal(rng);

    std::vector<double> logpop(ni);
    for (std::size_t i = 0; i < ni; ++i) logpop[i] = std::log(out.popularity[i]);
    const double mean = std::accumulate(logpop.begin(), logpop.end(), 0.0) / double(ni);
    double var = 0.0;
    for (auto x : logpop) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / double(ni));

    const double offset = std::log(spec.positive_threshold / (1.0 - spec.positive_threshold));
    const double norm = 1.0 / std::sqrt(static_cast<double>(k));
    out.relevance.resize(nu * ni);
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t i = 0; i < ni; ++i) {
        double dot = 0.0;
        for (std::size_t f = 0; f < k; ++f) dot += pu[u * k + f] * qi[i * k + f];
        const double zpop = sd > 0.0 ? (logpop[i] - mean) / sd : 0.0;
        const double z = spec.relevance_scale * dot * norm + offset +
                         spec.popularity_relevance * zpop;
        out.relevance[u * ni + i] = 1.0 / (1.0 + std::exp(-z));
      }
    }
  }

  Engine label_rng(derive_seed(spec.seed, kLabels));
  auto labelled = [&](UserId u, ItemId i) {
    Interaction x;
    x.user = u;
    x.item = i;
    x.label = bernoulli(label_rng, out.relevance[std::size_t(u) * ni + i]) ? 1 : 0;
    return x;
  };

  // Logged impressions: weighted sampling without replacement per user
  // (Efraimidis-Spirakis keys log(u)/w).
  std::vector<std::vector<bool>> logged(nu, std::vector<bool>(ni, false));
  Dataset logged_set;
  logged_set.n_users = nu;
  logged_set.n_items = ni;
  logged_set.provenance = Provenance::BiasedTrain;
  logged_set.rng_seed = spec.seed;
  {
    Engine rng(derive_seed(spec.seed, kExposure));
    std::vector<double> weight(ni);
    for (std::size_t i = 0; i < ni; ++i)
      weight[i] = std::pow(out.popularity[i], spec.exposure_bias_strength);
    const auto quota = per_user_quota(spec.train_impressions, nu, ni);
    std::vector<std::pair<double, ItemId>> keys(ni);
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t i = 0; i < ni; ++i) {
        double r = uniform01(rng);
        while (r <= 0.0) r = uniform01(rng);
        keys[i] = {std::log(r) / weight[i], static_cast<ItemId>(i)};
      }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(quota[u]),
                        keys.end(), [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      for (std::size_t j = 0; j < quota[u]; ++j) {
        const ItemId i = keys[j].second;
        logged[u][i] = true;
        logged_set.interactions.push_back(labelled(static_cast<UserId>(u), i));
      }
    }
  }

  auto parts = split_ratio(logged_set, 1.0 - spec.val_ratio, SplitMode::PerUserRandom,
                           derive_seed(spec.seed, kSplit));
  out.train = std::move(parts.first);
  out.val = std::move(parts.second);
  out.val.rng_seed = spec.seed;

  // Uniform test exposure over items the user was not logged on.
  out.test.n_users = nu;
  out.test.n_items = ni;
  out.test.provenance = Provenance::UniformTest;
  out.test.rng_seed = spec.seed;
  {
    Engine rng(derive_seed(spec.seed, kTest));
    const auto quota = per_user_quota(spec.test_impressions, nu, ni);
    std::vector<ItemId> pool;
    for (std::size_t u = 0; u < nu; ++u) {
      pool.clear();
      for (std::size_t i = 0; i < ni; ++i)
        if (!logged[u][i]) pool.push_back(static_cast<ItemId>(i));
      shuffle(std::span(pool), rng);
      const auto take = std::min(quota[u], pool.size());
      std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
      for (std::size_t j = 0; j < take; ++j)
        out.test.interactions.push_back(labelled(static_cast<UserId>(u), pool[j]));
    }
  }
  return out;
}

}  // namespace sste
