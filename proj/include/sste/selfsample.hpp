#pragma once

#include <cstdint>
#include <vector>

#include "sste/data.hpp"
#include "sste/propensity.hpp"

namespace sste {

struct SelfSampleConfig {
  std::vector<double> epsilons_train{0.5};
  std::vector<double> epsilons_val{0.5};
  /// Redraw the training subsets before every epoch. Validation subsets are
  /// always drawn once.
  bool resample_each_epoch = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Includes each interaction independently with its probability. One uniform
/// is consumed per instance in order, so two draws that share a seed use
/// common random numbers.
Dataset draw_auxiliary(const Dataset& d, const SampleProbTable& probs, std::uint64_t seed);

struct AuxiliaryFamily {
  std::vector<Dataset> train;
  std::vector<Dataset> val;
};

/// Seed used for the i-th training subset at a given epoch (epoch 0 is the
/// preprocessing draw).
std::uint64_t train_subset_seed(std::uint64_t master, std::size_t index, std::size_t epoch);
std::uint64_t val_subset_seed(std::uint64_t master, std::size_t index);

/// One subset per threshold, each via sampling_probabilities -> truncate ->
/// draw_auxiliary.
AuxiliaryFamily build_auxiliary_family(const Dataset& train, const Dataset& val,
                                       const PropensityTable& pt, const SelfSampleConfig& cfg);

/// Redraws only the training subsets for `epoch`.
std::vector<Dataset> resample_train_subsets(const Dataset& train, const PropensityTable& pt,
                                            const SelfSampleConfig& cfg, std::size_t epoch);

}  // namespace sste
