#include "sste/experiment.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sste/random.hpp"

namespace sste {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSelfSampleStream = 0x5353;
constexpr std::uint64_t kTrainStream = 0x5452;

json report_json(const EvalReport& r) {
  return json{{"main_metric", r.main_metric},
              {"score_on_val", r.score_on_val},
              {"scores_on_aux", r.scores_on_aux},
              {"alpha", r.alpha},
              {"modified_score", r.modified_score}};
}

json epoch_json(const EpochRecord& rec) {
  return json{{"epoch", rec.epoch},
              {"loss",
               {{"d_tr", rec.loss.d_tr},
                {"a_tr", rec.loss.a_tr},
                {"reg", rec.loss.reg},
                {"total", rec.loss.total}}},
              {"val_auc", rec.report.score_on_val},
              {"aux_val_auc", rec.report.scores_on_aux},
              {"alpha", rec.report.alpha},
              {"modified_score", rec.report.modified_score}};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    throw RunError(name, e.what());
  }
}

}  // namespace

LoadedData load_data(const DataSource& src) {
  LoadedData out;
  if (src.kind == DataSource::Kind::Synthetic) {
    auto syn = generate_synthetic(src.synthetic);
    out.train = syn.train;
    out.val = syn.val;
    out.test = syn.test;
    out.vocab = Vocabulary::identity(src.synthetic.n_users, src.synthetic.n_items);
    out.synthetic = std::move(syn);
    return out;
  }
  if (!src.train.empty()) {
    out.train = load_tsv(src.train, src.schema, out.vocab, Provenance::BiasedTrain);
    out.val = load_tsv(src.val, src.schema, out.vocab, Provenance::BiasedValidation);
  } else {
    auto biased = load_tsv(src.biased, src.schema, out.vocab, Provenance::BiasedTrain);
    auto parts = split_ratio(biased, src.split_ratio, src.split, src.split_seed);
    out.train = std::move(parts.first);
    out.val = std::move(parts.second);
  }
  out.test = load_tsv(src.uniform, src.schema, out.vocab, Provenance::UniformTest);
  conform_dims({&out.train, &out.val, &out.test}, out.vocab.n_users(), out.vocab.n_items());
  return out;
}

RunResult run_one(const RunConfig& cfg_in, const LoadedData* data) {
  RunConfig cfg = cfg_in;
  cfg.train.objective = cfg.objective;
  cfg.train.seed = derive_seed(cfg.seed, kTrainStream);

  RunResult res;
  res.id = run_id(cfg);
  res.dir = cfg.output_dir / res.id;
  std::filesystem::create_directories(res.dir);
  write_text(res.dir / "config.txt", cfg.serialize());
  write_text(res.dir / "status.txt", "running\n");
  std::filesystem::remove(res.dir / "report.json");

  try {
    stage("config", [&] { cfg.validate(); });
    LoadedData owned;
    if (!data) {
      owned = stage("data", [&] { return load_data(cfg.data); });
      data = &owned;
    }
    const auto pt = stage("propensity", [&] {
      return estimate_popularity_propensity(data->train, cfg.gamma, cfg.floor);
    });

    const SelfSampleConfig ss{cfg.epsilons_train, cfg.epsilons_val, cfg.resample_each_epoch,
                              derive_seed(cfg.seed, kSelfSampleStream)};
    AuxiliaryFamily fam;
    const bool sste = cfg.objective == Objective::SSTE;
    if (sste || cfg.self_eval_baselines)
      fam = stage("selfsample", [&] { return build_auxiliary_family(data->train, data->val, pt, ss); });
    if (!sste) fam.train.clear();

    std::ofstream log(res.dir / "epochs.jsonl", std::ios::binary);
    FitInputs in;
    in.train = &data->train;
    in.val = &data->val;
    in.aux_train = fam.train;
    in.aux_val = fam.val;
    in.propensity = &pt;
    if (sste && cfg.resample_each_epoch)
      in.resample_train = [&](std::size_t epoch) {
        return resample_train_subsets(data->train, pt, ss, epoch);
      };
    in.on_epoch = [&](const EpochRecord& rec) { log << epoch_json(rec).dump() << '\n'; };
    auto fitted = stage("train", [&] { return fit(in, cfg.train); });
    log.close();

    res.best_epoch = fitted.state.best_epoch;
    res.epochs_run = fitted.state.epoch;
    res.report = fitted.state.history.at(res.best_epoch - 1).report;
    res.report.per_metric = stage("evaluate", [&] {
      return evaluate_metrics(fitted.model, data->test, &data->train, cfg.metrics);
    });

    stage("persist", [&] {
      save_checkpoint(res.dir / "checkpoint.txt", fitted.model, &data->vocab);
      json sizes{{"train", data->train.size()}, {"val", data->val.size()},
                 {"test", data->test.size()}};
      for (const auto& d : fam.train) sizes["aux_train"].push_back(d.size());
      for (const auto& d : fam.val) sizes["aux_val"].push_back(d.size());
      json report{{"run_id", res.id},
                  {"objective", std::string(to_string(cfg.objective))},
                  {"best_epoch", res.best_epoch},
                  {"epochs_run", res.epochs_run},
                  {"selection", report_json(res.report)},
                  {"test", res.report.per_metric},
                  {"sizes", sizes}};
      write_text(res.dir / "report.json", report.dump(2) + "\n");
      write_text(res.dir / "status.txt", "ok\n");
    });
  } catch (const RunError& e) {
    write_text(res.dir / "status.txt", "failed\nstage=" + e.stage() + "\nerror=" + e.what() + "\n");
    throw;
  }
  return res;
}

GridResult run_grid(const GridSpec& grid, const RunConfig& base, std::size_t workers,
                    const LoadedData* data) {
  const auto combos = grid.combinations();
  base.validate();
  LoadedData owned;
  if (!data) {
    owned = load_data(base.data);
    data = &owned;
  }

  struct Slot {
    std::optional<RunResult> ok;
    std::string error;
  };
  std::vector<Slot> slots(combos.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < combos.size();) {
      try {
        auto cfg = base.with(combos[i]);
        cfg.seed = derive_seed(base.seed, i);
        slots[i].ok = run_one(cfg, data);
      } catch (const std::exception& e) {
        slots[i].error = e.what();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, combos.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }

  GridResult out;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    if (slots[i].ok) out.leaderboard.push_back({i, combos[i], *slots[i].ok});
    else out.failures.push_back({i, combos[i], slots[i].error});
  }
  std::stable_sort(out.leaderboard.begin(), out.leaderboard.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                     return a.result.report.modified_score > b.result.report.modified_score;
                   });

  std::filesystem::create_directories(base.output_dir);
  {
    std::ostringstream tsv;
    tsv << std::setprecision(17);
    tsv << "rank\trun_id\tgrid_index\tmodified_score\tval_auc\talpha\tbest_epoch";
    for (const auto& m : base.metrics) tsv << "\ttest_" << m;
    for (const auto& [k, v] : grid.values) tsv << '\t' << k;
    tsv << '\n';
    for (std::size_t r = 0; r < out.leaderboard.size(); ++r) {
      const auto& e = out.leaderboard[r];
      const auto& rep = e.result.report;
      tsv << r + 1 << '\t' << e.result.id << '\t' << e.grid_index << '\t' << rep.modified_score
          << '\t' << rep.score_on_val << '\t' << rep.alpha << '\t' << e.result.best_epoch;
      for (const auto& m : base.metrics) tsv << '\t' << rep.per_metric.at(m);
      for (const auto& [k, v] : grid.values) tsv << '\t' << e.params.at(k);
      tsv << '\n';
    }
    out.leaderboard_path = base.output_dir / "leaderboard.tsv";
    write_text(out.leaderboard_path, tsv.str());

    std::ostringstream fails;
    fails << "grid_index\terror";
    for (const auto& [k, v] : grid.values) fails << '\t' << k;
    fails << '\n';
    for (const auto& f : out.failures) {
      auto msg = f.message;
      std::replace(msg.begin(), msg.end(), '\t', ' ');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      fails << f.grid_index << '\t' << msg;
      for (const auto& [k, v] : grid.values) fails << '\t' << f.params.at(k);
      fails << '\n';
    }
    write_text(base.output_dir / "failures.tsv", fails.str());
  }
  if (out.leaderboard.empty())
    throw Error("every grid run failed (" + std::to_string(out.failures.size()) + " failures)");
  out.best_run_id = out.leaderboard.front().result.id;
  return out;
}

// ---------------------------------------------------------------------------

namespace {
const std::vector<std::pair<std::string, std::string>>& table_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"AUC", "auc"}, {"nDCG", "ndcg@50"}, {"P@5", "p@5"},
      {"P@10", "p@10"}, {"R@5", "r@5"}, {"R@10", "r@10"}};
  return cols;
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}
}  // namespace

ComparisonTable make_table(
    const std::vector<std::pair<std::string, std::map<std::string, double>>>& rows) {
  if (rows.empty()) throw ValidationError("comparison table needs at least one run");
  ComparisonTable t;
  for (const auto& [title, key] : table_columns()) t.columns.push_back(title);
  for (const auto& [name, metrics] : rows) {
    t.row_names.push_back(name);
    std::vector<double> vals;
    for (const auto& [title, key] : table_columns()) {
      auto it = metrics.find(key);
      if (it == metrics.end())
        throw ValidationError("run '" + name + "' is missing metric " + key);
      vals.push_back(it->second);
    }
    t.values.push_back(std::move(vals));
  }

  const std::size_t nc = t.columns.size();
  // Marks per cell: 2 = best, 1 = second best (next distinct value).
  std::vector<std::vector<int>> mark(rows.size(), std::vector<int>(nc, 0));
  for (std::size_t c = 0; c < nc; ++c) {
    double best = -INFINITY, second = -INFINITY;
    for (const auto& row : t.values) best = std::max(best, row[c]);
    for (const auto& row : t.values)
      if (row[c] < best) second = std::max(second, row[c]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (t.values[r][c] == best) mark[r][c] = 2;
      else if (t.values[r][c] == second) mark[r][c] = 1;
    }
  }

  std::ostringstream text, tsv;
  text << "| Method |";
  tsv << "method";
  for (const auto& c : t.columns) {
    text << ' ' << c << " |";
    tsv << '\t' << c;
  }
  text << "\n|---|";
  for (std::size_t c = 0; c < nc; ++c) text << "---|";
  text << '\n';
  tsv << '\n';
  json j = json::array();
  tsv << std::setprecision(17);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    text << "| " << t.row_names[r] << " |";
    tsv << t.row_names[r];
    json row{{"method", t.row_names[r]}};
    for (std::size_t c = 0; c < nc; ++c) {
      const auto v = fmt4(t.values[r][c]);
      const char* wrap = mark[r][c] == 2 ? "**" : mark[r][c] == 1 ? "__" : "";
      text << ' ' << wrap << v << wrap << " |";
      tsv << '\t' << t.values[r][c];
      row[t.columns[c]] = t.values[r][c];
      row["mark_" + t.columns[c]] = mark[r][c] == 2 ? "best" : mark[r][c] == 1 ? "second" : "";
    }
    text << '\n';
    tsv << '\n';
    j.push_back(row);
  }
  t.text = text.str();
  t.tsv = tsv.str();
  t.json = j.dump(2);
  return t;
}

ComparisonTable make_table(const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw ValidationError("comparison table needs at least one run");
  std::vector<std::pair<std::string, std::map<std::string, double>>> rows;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "report.json");
    if (!in) throw ValidationError("run " + dir.string() + " has no report.json");
    const auto rep = json::parse(in);
    if (!rep.contains("test")) throw ValidationError("run " + dir.string() + " has no test metrics");
    std::map<std::string, double> metrics;
    for (const auto& [k, v] : rep["test"].items()) metrics[k] = v.get<double>();
    const auto name = rep.value("objective", std::string("run")) + " (" +
                      rep.value("run_id", dir.filename().string()) + ")";
    rows.emplace_back(name, std::move(metrics));
  }
  return make_table(rows);
}

}  // namespace sste
