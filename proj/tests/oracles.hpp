// Independent reference implementations used only by the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sste/data.hpp"
#include "sste/evaluate.hpp"

namespace oracle {

// O(n^2) pair counting.
inline double pair_auc(const std::vector<sste::ScoredLabel>& s) {
  double num = 0.0, den = 0.0;
  for (const auto& a : s) {
    if (a.label != 1) continue;
    for (const auto& b : s) {
      if (b.label != 0) continue;
      den += 1.0;
      if (a.score > b.score) num += 1.0;
      else if (a.score == b.score) num += 0.5;
    }
  }
  return num / den;
}

inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

// DCG with binary gains over a ranked list of relevance flags.
inline double dcg(const std::vector<int>& rel, std::size_t k) {
  double s = 0.0;
  for (std::size_t r = 0; r < std::min(k, rel.size()); ++r)
    if (rel[r]) s += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return s;
}

inline std::vector<double> item_counts(const sste::Dataset& d) {
  std::vector<double> c(d.n_items, 0.0);
  for (const auto& x : d.interactions) c[x.item] += 1.0;
  return c;
}

inline sste::Dataset make_dataset(std::size_t nu, std::size_t ni,
                                  std::vector<sste::Interaction> xs) {
  sste::Dataset d;
  d.n_users = nu;
  d.n_items = ni;
  d.interactions = std::move(xs);
  return d;
}

inline std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  auto dir = std::filesystem::temp_directory_path() / "sste_tests";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sste_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
