// Acceptance gate: one PASS/FAIL/SKIP line per criterion; exit status is
// nonzero if any criterion fails.
//
// Criterion 1 needs the Yahoo! R3 files; point SSTE_YAHOO_DIR at the
// directory holding ydata-ymusic-rating-study-v1_0-{train,test}.txt.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "sste/data.hpp"
#include "sste/evaluate.hpp"
#include "sste/experiment.hpp"
#include "sste/random.hpp"
#include "sste/model.hpp"
#include "sste/propensity.hpp"
#include "sste/selfsample.hpp"
#include "sste/train.hpp"

using namespace sste;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Pass;
  std::string detail;
};

// Collects the first failed expectation of a criterion.
struct Gate {
  bool ok = true;
  std::ostringstream why;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why << what;
    }
  }
  Verdict verdict(const std::string& pass_detail) const {
    return ok ? Verdict{Outcome::Pass, pass_detail} : Verdict{Outcome::Fail, why.str()};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << x;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Yahoo! R3 loading, binarization and 8:2 per-user split.
Verdict data_fidelity() {
  const char* dir = std::getenv("SSTE_YAHOO_DIR");
  if (!dir) return {Outcome::Skip, "SSTE_YAHOO_DIR not set"};
  const fs::path train_file = fs::path(dir) / "ydata-ymusic-rating-study-v1_0-train.txt";
  const fs::path test_file = fs::path(dir) / "ydata-ymusic-rating-study-v1_0-test.txt";
  if (!fs::exists(train_file) || !fs::exists(test_file))
    return {Outcome::Skip, "Yahoo! R3 files not found in " + std::string(dir)};

  const auto t0 = std::chrono::steady_clock::now();
  Vocabulary vocab;
  auto biased = load_tsv(train_file, Schema::UserItemRating, vocab, Provenance::BiasedTrain);
  auto test = load_tsv(test_file, Schema::UserItemRating, vocab, Provenance::UniformTest);
  auto [tr, va] = split_ratio(biased, 0.8, SplitMode::PerUserRandom, 2024);
  const auto st = stats(tr), sv = stats(va), ss = stats(test);
  const double elapsed = seconds_since(t0);

  Gate g;
  g.expect(st.n_feedback + sv.n_feedback == 311704,
           "train+val = " + std::to_string(st.n_feedback + sv.n_feedback));
  // Per-user rounding can move at most one interaction per user.
  const auto diff = static_cast<long>(st.n_feedback) - 254713L;
  g.expect(std::labs(diff) <= static_cast<long>(biased.n_users),
           "train size " + std::to_string(st.n_feedback));
  g.expect(std::abs(st.pn_ratio_percent - 67.02) < 1.0, "train P/N " + fmt(st.pn_ratio_percent, 2));
  g.expect(std::abs(sv.pn_ratio_percent - 67.00) < 1.0, "val P/N " + fmt(sv.pn_ratio_percent, 2));
  g.expect(ss.n_feedback == 54000, "test size " + std::to_string(ss.n_feedback));
  g.expect(std::round(ss.pn_ratio_percent * 100.0) / 100.0 == 9.64,
           "test P/N " + fmt(ss.pn_ratio_percent, 4));
  g.expect(elapsed < 10.0, "runtime " + fmt(elapsed, 2) + " s");
  return g.verdict("train " + std::to_string(st.n_feedback) + " (P/N " + fmt(st.pn_ratio_percent, 2) +
                   "%), val " + std::to_string(sv.n_feedback) + " (" + fmt(sv.pn_ratio_percent, 2) +
                   "%), test " + std::to_string(ss.n_feedback) + " (" + fmt(ss.pn_ratio_percent, 2) +
                   "%), " + fmt(elapsed, 2) + " s");
}

// 2. SSTE vs Naive on synthetic biased logs, selected by the desk grid.
Verdict debiasing_property() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = oracle::fresh_dir("acceptance_debias");
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  double sum_naive = 0.0, sum_sste = 0.0;
  int wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Every generator and pipeline parameter is stated.
    KeyValues base{{"data.source", "synthetic"},
                   {"synth.n_users", "500"},
                   {"synth.n_items", "100"},
                   {"synth.latent_dim", "8"},
                   {"synth.exposure_bias", "1.5"},
                   {"synth.positive_threshold", "0.3"},
                   {"synth.relevance_scale", "3"},
                   {"synth.popularity_exponent", "1"},
                   {"synth.popularity_relevance", "0"},
                   {"synth.train_impressions", "10000"},
                   {"synth.test_impressions", "5000"},
                   {"synth.val_ratio", "0.2"},
                   {"synth.seed", std::to_string(seed)},
                   {"propensity.gamma", "0.5"},
                   {"propensity.floor", "0.01"},
                   {"selfsample.eps_train", "0.5"},
                   {"selfsample.eps_val", "0.5"},
                   {"train.max_epochs", "100"},
                   {"train.patience", "5"},
                   {"seed", std::to_string(seed)}};
    auto cfg = RunConfig::from_key_values(base);
    const auto data = load_data(cfg.data);
    double best[2] = {0, 0};
    const char* names[2] = {"naive", "sste"};
    for (int o = 0; o < 2; ++o) {
      auto c = cfg.with({{"objective", names[o]},
                         {"output_dir", (root / (std::string(names[o]) + std::to_string(seed))).string()}});
      auto r = run_grid(GridSpec::desk_default(), c, workers, &data);
      best[o] = r.leaderboard.front().result.report.per_metric.at("auc");
    }
    sum_naive += best[0];
    sum_sste += best[1];
    wins += best[1] > best[0];
    per_seed << " s" << seed << ":" << fmt(best[0]) << "/" << fmt(best[1]);
  }
  const double elapsed = seconds_since(t0);
  const double mn = sum_naive / 5, ms = sum_sste / 5;
  Gate g;
  g.expect(ms > mn, "mean AUC sste " + fmt(ms) + " <= naive " + fmt(mn));
  g.expect(wins >= 4, "sign test " + std::to_string(wins) + "/5");
  g.expect(elapsed < 1800.0, "runtime " + fmt(elapsed, 1) + " s");
  const std::string detail = "naive " + fmt(mn) + ", sste " + fmt(ms) + ", wins " +
                             std::to_string(wins) + "/5 (naive/sste" + per_seed.str() + "), " +
                             fmt(elapsed, 1) + " s";
  auto v = g.verdict(detail);
  if (v.outcome == Outcome::Fail) v.detail += "; " + detail;
  return v;
}

// 3. AUC, nDCG and alpha against independent oracles.
Verdict metric_oracles() {
  Gate g;
  std::mt19937_64 rng(3);
  double worst_auc = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<ScoredLabel> s(n);
    for (auto& x : s) x = {static_cast<double>(rng() % 50) / 49.0, static_cast<int>(rng() % 2)};
    s[0].label = 1;
    s[1].label = 0;
    worst_auc = std::max(worst_auc, std::abs(auc(s) - oracle::pair_auc(s)));
  }
  g.expect(worst_auc <= 1e-12, "AUC deviation " + std::to_string(worst_auc));

  RankedList first{0, {3, 1, 2, 4, 0}, {3}};
  RankedList two{0, {0, 1, 2, 3, 4}, {0, 2}};
  std::vector<ItemId> sixty(60);
  for (ItemId i = 0; i < 60; ++i) sixty[i] = i;
  RankedList deep{0, sixty, {55}};
  g.expect(std::abs(ndcg_at(first, 50) - 1.0) <= 1e-9, "nDCG rank-1 example");
  g.expect(std::abs(ndcg_at(two, 50) - 1.5 / (1.0 + 1.0 / std::log2(3.0))) <= 1e-9,
           "nDCG ranks 1 and 3 example");
  g.expect(std::abs(ndcg_at(deep, 50)) <= 1e-9, "nDCG outside cutoff example");

  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_alpha = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = u(rng);
    std::vector<double> aux(1 + rng() % 5);
    for (auto& x : aux) x = u(rng);
    double lo = v, hi = v;
    for (double x : aux) lo = std::min(lo, x), hi = std::max(hi, x);
    worst_alpha = std::max(worst_alpha, std::abs(alpha(v, aux) - (hi - lo)));
  }
  g.expect(worst_alpha <= 1e-12, "alpha deviation " + std::to_string(worst_alpha));
  return g.verdict("max |AUC - pairs| " + std::to_string(worst_auc) + ", max |alpha - range| " +
                   std::to_string(worst_alpha));
}

// 4. Joint objective gradients and term equality on identical data.
Verdict objective_machinery() {
  Gate g;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    auto m = init(8, 9, 5, {0.5, static_cast<std::uint64_t>(c)});
    for (Branch b : {Branch::Tilde, Branch::Hat}) {
      for (auto& x : m.head(b).user_bias) x = u(rng);
      for (auto& x : m.head(b).item_bias) x = u(rng);
      m.head(b).global_bias = u(rng);
    }
    const UserId uu = static_cast<UserId>(rng() % 8);
    const ItemId ii = static_cast<ItemId>(rng() % 9);
    const int y = static_cast<int>(rng() % 2);
    const Branch b = rng() % 2 ? Branch::Hat : Branch::Tilde;
    const double w = 0.5 + u(rng);
    const auto grad = gradients(m, b, uu, ii, y, w);
    const std::size_t j = rng() % 5;
    double* p = nullptr;
    double analytic = 0.0;
    switch (rng() % 5) {
      case 0: p = &m.user_factors(uu)[j]; analytic = grad.user_factor[j]; break;
      case 1: p = &m.item_factors(ii)[j]; analytic = grad.item_factor[j]; break;
      case 2: p = &m.head(b).user_bias[uu]; analytic = grad.user_bias; break;
      case 3: p = &m.head(b).item_bias[ii]; analytic = grad.item_bias; break;
      default: p = &m.head(b).global_bias; analytic = grad.global_bias; break;
    }
    const double h = 1e-5, x0 = *p;
    *p = x0 + h;
    const double up = instance_loss(m, b, uu, ii, y, w);
    *p = x0 - h;
    const double down = instance_loss(m, b, uu, ii, y, w);
    *p = x0;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic)));
  }
  g.expect(worst < 1e-4, "finite-difference relative error " + std::to_string(worst));

  SyntheticSpec spec;
  spec.seed = 5;
  const auto data = generate_synthetic(spec);
  auto m = init(spec.n_users, spec.n_items, 10, {0.01, 2});
  const std::vector<Dataset> a_tr{data.train};
  const auto t = objective_terms(m, data.train, a_tr, 1e-5);
  g.expect(std::abs(t.d_tr - t.a_tr) <= 1e-10, "loss terms differ by " + std::to_string(t.d_tr - t.a_tr));
  return g.verdict("max FD rel error " + std::to_string(worst) + ", |L_D - L_A| " +
                   std::to_string(std::abs(t.d_tr - t.a_tr)));
}

// 5. Truncation rule, Bernoulli(1) identity and binomial concentration.
Verdict sampling_contracts() {
  Gate g;
  std::vector<double> p;
  for (int i = 1; i <= 100; ++i) p.push_back(i / 100.0);
  for (int e = 0; e <= 100; ++e) {
    const double eps = e / 100.0;
    const auto t = truncate(p, eps);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool keep = p[i] < eps;
      g.expect(t.per_instance_prob[i] == (keep ? p[i] : 1.0) && t.truncated[i] == !keep,
               "truncate(" + fmt(p[i], 2) + ", " + fmt(eps, 2) + ")");
    }
  }

  std::vector<Interaction> xs;
  for (std::size_t k = 0; k < 10000; ++k)
    xs.push_back({static_cast<UserId>(k % 100), static_cast<ItemId>(k % 37),
                  static_cast<std::uint8_t>(k % 2), {}});
  const auto d = oracle::make_dataset(100, 37, xs);
  const auto copy = draw_auxiliary(d, truncate(std::vector<double>(d.size(), 1.0), 1.0), 9);
  g.expect(copy.interactions == d.interactions, "all-ones draw is not verbatim");

  const auto half = truncate(std::vector<double>(d.size(), 0.5), 1.0);
  const double sigma = std::sqrt(10000 * 0.5 * 0.5);
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    within += std::abs(static_cast<double>(draw_auxiliary(d, half, seed).size()) - 5000.0) <= 3 * sigma;
  g.expect(within >= 99, "only " + std::to_string(within) + "/100 seeds within 3 sigma");
  return g.verdict("101x100 truncation grid exact, " + std::to_string(within) + "/100 within 3 sigma");
}

// 6. Constant propensities: IPS = Naive / c and SNIPS = Naive, per batch.
Verdict baseline_equivalences() {
  Gate g;
  SyntheticSpec spec;
  spec.seed = 8;
  const auto data = generate_synthetic(spec);
  const auto m = init(spec.n_users, spec.n_items, 10, {0.1, 4});
  double worst = 0.0;
  auto track = [&](const RowAccumulator& a, const RowAccumulator& b, double scale) {
    if (a.touched() != b.touched()) {
      worst = INFINITY;
      return;
    }
    for (std::size_t s = 0; s < a.touched().size(); ++s)
      for (std::size_t j = 0; j < a.dim(); ++j)
        worst = std::max(worst, std::abs(a.values(s)[j] - scale * b.values(s)[j]));
  };
  const std::span<const Interaction> all(data.train.interactions);
  for (double c : {1.0, 0.6, 0.05}) {
    const PropensityTable pt{std::vector<double>(spec.n_items, c), 1.0, 0.01};
    for (std::size_t lo = 0; lo < all.size(); lo += 512) {
      const auto batch = all.subspan(lo, std::min<std::size_t>(512, all.size() - lo));
      const auto gn = batch_gradient(m, Branch::Hat, batch, batch_weights(Objective::Naive, batch, nullptr));
      const auto gi = batch_gradient(m, Branch::Hat, batch, batch_weights(Objective::IPS, batch, &pt));
      const auto gs = batch_gradient(m, Branch::Hat, batch, batch_weights(Objective::SNIPS, batch, &pt));
      for (auto [grad, scale] : {std::pair{&gi, 1.0 / c}, std::pair{&gs, 1.0}}) {
        track(grad->user_factors, gn.user_factors, scale);
        track(grad->item_factors, gn.item_factors, scale);
        track(grad->user_bias, gn.user_bias, scale);
        track(grad->item_bias, gn.item_bias, scale);
        worst = std::max(worst, std::abs(grad->global_bias - scale * gn.global_bias));
      }
    }
  }
  g.expect(worst <= 1e-10, "max gradient deviation " + std::to_string(worst));
  return g.verdict("max gradient deviation " + std::to_string(worst));
}

// 7. run_one twice from one RunConfig.
Verdict reproducibility() {
  Gate g;
  const auto root = oracle::fresh_dir("acceptance_repro");
  for (const char* objective : {"sste", "snips"}) {
    auto cfg = RunConfig::from_key_values({{"data.source", "synthetic"},
                                           {"synth.seed", "7"},
                                           {"objective", objective},
                                           {"selfsample.resample", "true"},
                                           {"train.max_epochs", "30"},
                                           {"seed", "13"}});
    const auto a = run_one(cfg.with({{"output_dir", (root / "a").string()}}));
    const auto b = run_one(cfg.with({{"output_dir", (root / "b").string()}}));
    const std::string o = objective;
    g.expect(a.id == b.id, o + ": run ids differ");
    g.expect(slurp(a.dir / "epochs.jsonl") == slurp(b.dir / "epochs.jsonl"), o + ": epoch logs differ");
    g.expect(a.best_epoch == b.best_epoch, o + ": selected epochs differ");
    g.expect(a.report.per_metric == b.report.per_metric, o + ": final metrics differ");
    g.expect(slurp(a.dir / "checkpoint.txt") == slurp(b.dir / "checkpoint.txt"), o + ": checkpoints differ");
  }
  return g.verdict("identical logs, selected epoch, metrics and checkpoints");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"data fidelity (Yahoo! R3)", data_fidelity},
      {"debiasing property (synthetic)", debiasing_property},
      {"metric oracles", metric_oracles},
      {"joint objective machinery", objective_machinery},
      {"sampling contracts", sampling_contracts},
      {"baseline equivalences", baseline_equivalences},
      {"reproducibility", reproducibility},
  };
  // Optional arguments select criteria by number.
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= static_cast<int>(criteria.size())) selected[k - 1] = true;
  }
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::cout << tag << "  [" << k + 1 << "] " << criteria[k].first << ": " << v.detail << std::endl;
    failed += v.outcome == Outcome::Fail;
  }
  return failed ? 1 : 0;
}
