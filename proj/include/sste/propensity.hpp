#pragma once

#include <span>
#include <vector>

#include "sste/data.hpp"

namespace sste {

struct PropensityTable {
  std::vector<double> per_item_propensity;
  double gamma = 0.5;
  double floor = 0.01;

  std::size_t n_items() const { return per_item_propensity.size(); }
  double operator[](ItemId i) const { return per_item_propensity.at(i); }
};

struct SampleProbTable {
  std::vector<double> per_instance_prob;
  double epsilon = 1.0;
  std::vector<bool> truncated;

  std::size_t size() const { return per_instance_prob.size(); }
  /// Expected size of a Bernoulli draw under these probabilities.
  double expected_size() const;
};

/// propensity(v) = (count(v) / max_count)^gamma, clipped below at `floor`.
/// Items never observed get `floor`.
PropensityTable estimate_popularity_propensity(const Dataset& d, double gamma, double floor);

/// Max-normalized inverse propensity per instance: the lowest-propensity
/// instance in `d` gets probability 1.
std::vector<double> sampling_probabilities(const Dataset& d, const PropensityTable& t);

/// Keeps p when p < epsilon, otherwise sets it to 1.
SampleProbTable truncate(std::span<const double> p, double epsilon);

}  // namespace sste
