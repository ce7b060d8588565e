#include "sste/selfsample.hpp"

#include "sste/error.hpp"
#include "sste/random.hpp"

namespace sste {

namespace {
constexpr std::uint64_t kTrainTag = 0x7472;  // "tr"
constexpr std::uint64_t kValTag = 0x76616c;  // "val"

Dataset draw_one(const Dataset& d, const PropensityTable& pt, double epsilon,
                 std::uint64_t seed) {
  const auto p = sampling_probabilities(d, pt);
  return draw_auxiliary(d, truncate(p, epsilon), seed);
}
}  // namespace

void SelfSampleConfig::validate() const {
  if (epsilons_train.empty() || epsilons_val.empty())
    throw ValidationError("self-sampling needs at least one threshold per side");
  for (const auto* list : {&epsilons_train, &epsilons_val})
    for (double e : *list)
      if (!(e >= 0.0 && e <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
}

Dataset draw_auxiliary(const Dataset& d, const SampleProbTable& probs, std::uint64_t seed) {
  if (probs.size() != d.size())
    throw ValidationError("sampling table has " + std::to_string(probs.size()) +
                          " entries for a dataset of " + std::to_string(d.size()));
  Dataset out;
  out.n_users = d.n_users;
  out.n_items = d.n_items;
  out.provenance = Provenance::AuxiliarySubset;
  out.rng_seed = seed;
  out.epsilon = probs.epsilon;
  Engine rng(seed);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (bernoulli(rng, probs.per_instance_prob[i])) out.interactions.push_back(d.interactions[i]);
  return out;
}

std::uint64_t train_subset_seed(std::uint64_t master, std::size_t index, std::size_t epoch) {
  return derive_seed(master, index, epoch, kTrainTag);
}

std::uint64_t val_subset_seed(std::uint64_t master, std::size_t index) {
  return derive_seed(master, index, 0, kValTag);
}

AuxiliaryFamily build_auxiliary_family(const Dataset& train, const Dataset& val,
                                       const PropensityTable& pt, const SelfSampleConfig& cfg) {
  cfg.validate();
  AuxiliaryFamily fam;
  fam.train = resample_train_subsets(train, pt, cfg, 0);
  for (std::size_t i = 0; i < cfg.epsilons_val.size(); ++i)
    fam.val.push_back(draw_one(val, pt, cfg.epsilons_val[i], val_subset_seed(cfg.seed, i)));
  return fam;
}

std::vector<Dataset> resample_train_subsets(const Dataset& train, const PropensityTable& pt,
                                            const SelfSampleConfig& cfg, std::size_t epoch) {
  cfg.validate();
  std::vector<Dataset> out;
  for (std::size_t i = 0; i < cfg.epsilons_train.size(); ++i)
    out.push_back(
        draw_one(train, pt, cfg.epsilons_train[i], train_subset_seed(cfg.seed, i, epoch)));
  return out;
}

}  // namespace sste
