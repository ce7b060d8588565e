#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "sste/error.hpp"
#include "sste/propensity.hpp"
#include "sste/selfsample.hpp"

using namespace sste;

namespace {

Dataset numbered(std::size_t n) {
  std::vector<Interaction> xs;
  for (std::size_t k = 0; k < n; ++k)
    xs.push_back({static_cast<UserId>(k % 97), static_cast<ItemId>(k % 89),
                  static_cast<std::uint8_t>(k % 3 == 0), {}});
  return oracle::make_dataset(97, 89, xs);
}

SampleProbTable constant(std::size_t n, double p) {
  return truncate(std::vector<double>(n, p), 1.0);
}

double total_variation_to_uniform(const Dataset& d) {
  auto c = oracle::item_counts(d);
  const double n = static_cast<double>(d.size());
  double tv = 0.0;
  for (double x : c) tv += std::abs(x / n - 1.0 / static_cast<double>(c.size()));
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("all-ones probabilities copy the input") {
  auto d = numbered(500);
  auto sub = draw_auxiliary(d, constant(d.size(), 1.0), 4);
  CHECK(sub.interactions == d.interactions);
  CHECK(sub.provenance == Provenance::AuxiliarySubset);
  CHECK(sub.rng_seed == 4u);
  CHECK(sub.epsilon == 1.0);
}

TEST_CASE("draws are deterministic and subsets of the source") {
  auto d = numbered(2000);
  std::vector<double> p;
  for (std::size_t k = 0; k < d.size(); ++k) p.push_back(0.05 + 0.9 * (k % 10) / 10.0);
  auto probs = truncate(p, 0.6);
  auto a = draw_auxiliary(d, probs, 77);
  auto b = draw_auxiliary(d, probs, 77);
  CHECK(a == b);
  CHECK_FALSE(a == draw_auxiliary(d, probs, 78));
  // Order-preserving subsequence of the source.
  std::size_t j = 0;
  for (const auto& x : a.interactions) {
    while (j < d.size() && !(d.interactions[j] == x)) ++j;
    CHECK(j < d.size());
    ++j;
  }
}

TEST_CASE("binomial concentration at p = 0.5") {
  auto d = numbered(10000);
  const double sigma = std::sqrt(10000 * 0.25);
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const double n = static_cast<double>(draw_auxiliary(d, constant(d.size(), 0.5), seed).size());
    within += std::abs(n - 5000.0) <= 3.0 * sigma;
  }
  CHECK(within >= 99);
}

TEST_CASE("misaligned probabilities are rejected") {
  auto d = numbered(10);
  CHECK_THROWS_AS(draw_auxiliary(d, constant(9, 0.5), 0), ValidationError);
}

TEST_CASE("config validation") {
  SelfSampleConfig c;
  c.epsilons_train = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.epsilons_val = {1.5};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("family sizes and epsilon zero") {
  auto d = numbered(3000);
  auto [tr, va] = split_ratio(d, 0.8, SplitMode::PerUserRandom, 1);
  auto pt = estimate_popularity_propensity(tr, 0.5, 0.01);

  SelfSampleConfig one;
  one.seed = 5;
  auto fam = build_auxiliary_family(tr, va, pt, one);
  CHECK(fam.train.size() == 1);
  CHECK(fam.val.size() == 1);

  SelfSampleConfig zero;
  zero.epsilons_train = {0.0};
  auto full = build_auxiliary_family(tr, va, pt, zero);
  CHECK(full.train[0].interactions == tr.interactions);

  SelfSampleConfig three;
  three.epsilons_train = {0.2, 0.5, 0.8};
  three.seed = 9;
  auto fam3 = build_auxiliary_family(tr, va, pt, three);
  REQUIRE(fam3.train.size() == 3);
  const auto raw = sampling_probabilities(tr, pt);
  CHECK(truncate(raw, 0.2).expected_size() >= truncate(raw, 0.5).expected_size());
  CHECK(truncate(raw, 0.5).expected_size() >= truncate(raw, 0.8).expected_size());
  for (std::size_t i = 0; i < 3; ++i) CHECK(fam3.train[i].epsilon == three.epsilons_train[i]);
}

TEST_CASE("derived seeds differ by subset and epoch") {
  CHECK(train_subset_seed(1, 0, 0) != train_subset_seed(1, 1, 0));
  CHECK(train_subset_seed(1, 0, 0) != train_subset_seed(1, 0, 1));
  CHECK(train_subset_seed(1, 0, 0) != val_subset_seed(1, 0));
  CHECK(train_subset_seed(1, 2, 3) == train_subset_seed(1, 2, 3));
}

TEST_CASE("resampling redraws training subsets only") {
  SyntheticSpec spec;
  spec.n_users = 100;
  spec.n_items = 50;
  spec.train_impressions = 2000;
  auto data = generate_synthetic(spec);
  auto pt = estimate_popularity_propensity(data.train, 0.5, 0.01);
  SelfSampleConfig cfg;
  cfg.seed = 3;
  cfg.resample_each_epoch = true;
  auto fam = build_auxiliary_family(data.train, data.val, pt, cfg);
  CHECK(resample_train_subsets(data.train, pt, cfg, 0)[0] == fam.train[0]);
  auto e2 = resample_train_subsets(data.train, pt, cfg, 2);
  CHECK_FALSE(e2[0] == fam.train[0]);
  CHECK(e2[0] == resample_train_subsets(data.train, pt, cfg, 2)[0]);
}

TEST_CASE("gamma zero yields a full copy") {
  auto d = numbered(800);
  auto pt = estimate_popularity_propensity(d, 0.0, 0.01);
  auto probs = truncate(sampling_probabilities(d, pt), 0.5);
  CHECK(draw_auxiliary(d, probs, 1).interactions == d.interactions);
}

TEST_CASE("subsets are small and flatter on power-law data") {
  SyntheticSpec spec;
  spec.seed = 4;
  auto data = generate_synthetic(spec);
  const auto& d = data.train;

  auto pt1 = estimate_popularity_propensity(d, 1.0, 0.01);
  auto small = draw_auxiliary(d, truncate(sampling_probabilities(d, pt1), 0.9), 2);
  CHECK(static_cast<double>(small.size()) / static_cast<double>(d.size()) < 0.5);

  auto pt = estimate_popularity_propensity(d, 0.5, 0.01);
  auto flat = draw_auxiliary(d, truncate(sampling_probabilities(d, pt), 1.0), 2);
  CHECK(total_variation_to_uniform(flat) < total_variation_to_uniform(d));
}
