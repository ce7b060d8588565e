#include "sste/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sste/error.hpp"

namespace sste {

double SampleProbTable::expected_size() const {
  return std::accumulate(per_instance_prob.begin(), per_instance_prob.end(), 0.0);
}

PropensityTable estimate_popularity_propensity(const Dataset& d, double gamma, double floor) {
  if (d.empty()) throw ValidationError("propensity estimation needs a nonempty dataset");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 0");
  if (!(floor > 0.0 && floor <= 1.0)) throw ValidationError("floor must lie in (0,1]");

  std::vector<std::size_t> count(d.n_items, 0);
  for (const auto& x : d.interactions) {
    if (x.item >= d.n_items) throw ValidationError("item id out of range");
    ++count[x.item];
  }
  const double max_count = static_cast<double>(*std::max_element(count.begin(), count.end()));

  PropensityTable t;
  t.gamma = gamma;
  t.floor = floor;
  t.per_item_propensity.resize(d.n_items);
  for (std::size_t i = 0; i < d.n_items; ++i) {
    if (count[i] == 0) {
      t.per_item_propensity[i] = floor;
      continue;
    }
    const double raw = std::pow(static_cast<double>(count[i]) / max_count, gamma);
    t.per_item_propensity[i] = std::clamp(raw, floor, 1.0);
  }
  return t;
}

std::vector<double> sampling_probabilities(const Dataset& d, const PropensityTable& t) {
  std::vector<double> inv(d.size());
  double max_inv = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto item = d.interactions[j].item;
    if (item >= t.n_items())
      throw ValidationError("item " + std::to_string(item) + " missing from propensity table");
    const double prop = t.per_item_propensity[item];
    if (!(prop > 0.0)) throw ValidationError("propensity must be positive");
    inv[j] = 1.0 / prop;
    max_inv = std::max(max_inv, inv[j]);
  }
  for (auto& x : inv) x /= max_inv;
  return inv;
}

SampleProbTable truncate(std::span<const double> p, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0,1]");
  SampleProbTable out;
  out.epsilon = epsilon;
  out.per_instance_prob.resize(p.size());
  out.truncated.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] <= 1.0)) throw ValidationError("probabilities must lie in (0,1]");
    const bool cut = !(p[i] < epsilon);
    out.truncated[i] = cut;
    out.per_instance_prob[i] = cut ? 1.0 : p[i];
  }
  return out;
}

}  // namespace sste
