// sste: command-line front end for data preparation, self-sampling,
// training, evaluation, and experiment orchestration.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sste/data.hpp"
#include "sste/evaluate.hpp"
#include "sste/experiment.hpp"
#include "sste/model.hpp"
#include "sste/propensity.hpp"
#include "sste/random.hpp"
#include "sste/selfsample.hpp"
#include "sste/train.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_eps(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  if (out.empty()) throw sste::ValidationError("empty epsilon list");
  return out;
}

std::vector<std::string> parse_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Loads `path` through a copy of `vocab` and drops interactions whose ids the
/// vocabulary did not already contain.
sste::Dataset load_known(const fs::path& path, sste::Schema schema, const sste::Vocabulary& vocab,
                         sste::Provenance prov, std::size_t& skipped) {
  auto grown = vocab;
  auto d = sste::load_tsv(path, schema, grown, prov);
  const auto before = d.size();
  std::erase_if(d.interactions, [&](const sste::Interaction& x) {
    return x.user >= vocab.n_users() || x.item >= vocab.n_items();
  });
  skipped += before - d.size();
  d.n_users = vocab.n_users();
  d.n_items = vocab.n_items();
  return d;
}

sste::SyntheticSpec synth_from_file(const fs::path& path) {
  auto kv = sste::read_key_values(path);
  sste::KeyValues prefixed{{"data.source", "synthetic"}};
  for (const auto& [k, v] : kv) prefixed[k.rfind("synth.", 0) == 0 ? k : "synth." + k] = v;
  return sste::RunConfig::from_key_values(prefixed).data.synthetic;
}

struct Options {
  // data
  std::string input, schema = "label", spec, out;
  // propensity / selfsample
  double gamma = 0.5, floor = 0.01, epsilon = 0.5;
  std::uint64_t seed = 0;
  // train
  std::string objective = "sste", train, val, eps_train = "0.5", eps_val = "0.5", checkpoint_out,
              log;
  double lr = 1e-2, l2 = 1e-5;
  std::size_t batch = 512, max_epochs = 100, patience = 5, dim = 10;
  bool resample = false;
  // evaluate
  std::string checkpoint, test, metrics = "auc,p@5,p@10,r@5,r@10,ndcg@50", exclude;
  std::vector<std::string> aux_val;
  // exp
  std::string config, grid, format = "text";
  std::size_t workers = 1;
  std::vector<std::string> runs;
};

int cmd_stats(const Options& o) {
  const auto d = sste::load_tsv(o.input, sste::parse_schema(o.schema));
  const auto s = sste::stats(d);
  std::cout << json{{"n_feedback", s.n_feedback},   {"positives", s.positives},
                    {"negatives", s.negatives},     {"pn_ratio_percent", s.pn_ratio_percent},
                    {"n_users", s.n_users},         {"n_items", s.n_items}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_synth(const Options& o) {
  const auto spec = synth_from_file(o.spec);
  const auto data = sste::generate_synthetic(spec);
  fs::create_directories(o.out);
  sste::save_tsv(fs::path(o.out) / "train.tsv", data.train);
  sste::save_tsv(fs::path(o.out) / "val.tsv", data.val);
  sste::save_tsv(fs::path(o.out) / "test.tsv", data.test);
  {
    std::ofstream gt(fs::path(o.out) / "relevance.tsv");
    gt.precision(17);
    for (std::size_t u = 0; u < spec.n_users; ++u)
      for (std::size_t i = 0; i < spec.n_items; ++i)
        gt << u << '\t' << i << '\t' << data.relevance[u * spec.n_items + i] << '\n';
    std::ofstream pop(fs::path(o.out) / "popularity.tsv");
    pop.precision(17);
    for (std::size_t i = 0; i < spec.n_items; ++i) pop << i << '\t' << data.popularity[i] << '\n';
  }
  std::cout << json{{"train", data.train.size()}, {"val", data.val.size()},
                    {"test", data.test.size()}, {"out", o.out}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_propensity(const Options& o) {
  sste::Vocabulary vocab;
  const auto d = sste::load_tsv(o.input, sste::parse_schema(o.schema), vocab);
  const auto t = sste::estimate_popularity_propensity(d, o.gamma, o.floor);
  std::ofstream out(o.out);
  if (!out) throw sste::ValidationError("cannot write " + o.out);
  out.precision(17);
  for (std::size_t i = 0; i < t.n_items(); ++i)
    out << vocab.raw_item(sste::ItemId(i)) << '\t' << t.per_item_propensity[i] << '\n';
  return 0;
}

int cmd_selfsample(const Options& o) {
  sste::Vocabulary vocab;
  const auto d = sste::load_tsv(o.input, sste::parse_schema(o.schema), vocab);
  const auto t = sste::estimate_popularity_propensity(d, o.gamma, o.floor);
  const auto probs = sste::truncate(sste::sampling_probabilities(d, t), o.epsilon);
  const auto sub = sste::draw_auxiliary(d, probs, o.seed);
  sste::save_tsv(o.out, sub, &vocab);
  std::cout << json{{"input", d.size()}, {"output", sub.size()},
                    {"expected", probs.expected_size()}, {"epsilon", o.epsilon}, {"seed", o.seed}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const auto schema = sste::parse_schema(o.schema);
  sste::Vocabulary vocab;
  auto train = sste::load_tsv(o.train, schema, vocab, sste::Provenance::BiasedTrain);
  auto val = sste::load_tsv(o.val, schema, vocab, sste::Provenance::BiasedValidation);
  sste::conform_dims({&train, &val}, vocab.n_users(), vocab.n_items());

  sste::TrainConfig cfg;
  cfg.objective = sste::parse_objective(o.objective);
  cfg.learning_rate = o.lr;
  cfg.l2_lambda = o.l2;
  cfg.batch_size = o.batch;
  cfg.max_epochs = o.max_epochs;
  cfg.patience = o.patience;
  cfg.embedding_dim = o.dim;
  cfg.seed = o.seed;

  const auto pt = sste::estimate_popularity_propensity(train, o.gamma, o.floor);
  const sste::SelfSampleConfig ss{parse_eps(o.eps_train), parse_eps(o.eps_val), o.resample,
                                  sste::derive_seed(o.seed, 0x5353)};
  sste::AuxiliaryFamily fam;
  if (cfg.objective == sste::Objective::SSTE) fam = sste::build_auxiliary_family(train, val, pt, ss);

  std::ofstream log_file;
  if (!o.log.empty()) log_file.open(o.log);
  std::ostream& log = o.log.empty() ? std::cout : log_file;

  sste::FitInputs in;
  in.train = &train;
  in.val = &val;
  in.aux_train = fam.train;
  in.aux_val = fam.val;
  in.propensity = &pt;
  if (o.resample && cfg.objective == sste::Objective::SSTE)
    in.resample_train = [&](std::size_t e) { return sste::resample_train_subsets(train, pt, ss, e); };
  in.on_epoch = [&](const sste::EpochRecord& r) {
    log << json{{"epoch", r.epoch},
                {"loss", {{"d_tr", r.loss.d_tr}, {"a_tr", r.loss.a_tr}, {"reg", r.loss.reg},
                          {"total", r.loss.total}}},
                {"val_auc", r.report.score_on_val},
                {"aux_val_auc", r.report.scores_on_aux},
                {"alpha", r.report.alpha},
                {"modified_score", r.report.modified_score}}
               .dump()
        << '\n';
  };
  const auto result = sste::fit(in, cfg);
  if (!o.checkpoint_out.empty()) sste::save_checkpoint(o.checkpoint_out, result.model, &vocab);
  std::cerr << "best epoch " << result.state.best_epoch << " of " << result.state.epoch
            << ", modified score " << result.state.best_score << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto cp = sste::load_checkpoint(o.checkpoint);
  const auto vocab =
      cp.vocab ? *cp.vocab : sste::Vocabulary::identity(cp.model.n_users(), cp.model.n_items());
  const auto schema = sste::parse_schema(o.schema);
  std::size_t skipped = 0;
  const auto test = load_known(o.test, schema, vocab, sste::Provenance::UniformTest, skipped);
  std::optional<sste::Dataset> exclude;
  if (!o.exclude.empty())
    exclude = load_known(o.exclude, schema, vocab, sste::Provenance::BiasedTrain, skipped);

  const auto names = parse_names(o.metrics);
  json out = sste::evaluate_metrics(cp.model, test, exclude ? &*exclude : nullptr, names);
  if (!o.val.empty()) {
    const auto val = load_known(o.val, schema, vocab, sste::Provenance::BiasedValidation, skipped);
    std::vector<sste::Dataset> aux;
    for (const auto& p : o.aux_val)
      aux.push_back(load_known(p, schema, vocab, sste::Provenance::AuxiliarySubset, skipped));
    const auto rep = sste::self_evaluate(cp.model, val, aux);
    out["val_auc"] = rep.score_on_val;
    out["aux_val_auc"] = rep.scores_on_aux;
    out["alpha"] = rep.alpha;
    out["modified_score"] = rep.modified_score;
  }
  if (skipped) std::cerr << "skipped " << skipped << " interactions with unknown ids\n";
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_exp_run(const Options& o) {
  const auto cfg = sste::load_run_config(o.config);
  const auto r = sste::run_one(cfg);
  std::cout << json{{"run_id", r.id}, {"dir", r.dir.string()}, {"best_epoch", r.best_epoch},
                    {"modified_score", r.report.modified_score}, {"test", r.report.per_metric}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_exp_grid(const Options& o) {
  const auto cfg = sste::load_run_config(o.config);
  const auto grid = sste::load_grid(o.grid);
  const auto r = sste::run_grid(grid, cfg, o.workers);
  std::cout << json{{"best_run_id", r.best_run_id},
                    {"completed", r.leaderboard.size()},
                    {"failed", r.failures.size()},
                    {"leaderboard", r.leaderboard_path.string()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_exp_table(const Options& o) {
  std::vector<fs::path> dirs(o.runs.begin(), o.runs.end());
  const auto t = sste::make_table(dirs);
  if (o.format == "tsv") std::cout << t.tsv;
  else if (o.format == "json") std::cout << t.json << '\n';
  else std::cout << t.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-sampling training and evaluation for debiased recommendation"};
  app.require_subcommand(1);
  Options o;
  int (*action)(const Options&) = nullptr;
  auto on = [&](CLI::App* sub, int (*fn)(const Options&)) {
    sub->callback([&action, fn] { action = fn; });
  };

  auto* data = app.add_subcommand("data", "Dataset utilities");
  data->require_subcommand(1);
  auto* stats = data->add_subcommand("stats", "Print dataset statistics as JSON");
  stats->add_option("--input", o.input, "TSV file")->required()->check(CLI::ExistingFile);
  stats->add_option("--schema", o.schema, "rating|label")->check(CLI::IsMember({"rating", "label"}));
  on(stats, cmd_stats);
  auto* synth = data->add_subcommand("synth", "Generate a synthetic biased/uniform dataset");
  synth->add_option("--spec", o.spec, "key=value synthetic spec")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "output directory")->required();
  on(synth, cmd_synth);

  auto* prop = app.add_subcommand("propensity", "Estimate popularity propensities");
  prop->add_option("--input", o.input)->required()->check(CLI::ExistingFile);
  prop->add_option("--schema", o.schema);
  prop->add_option("--gamma", o.gamma);
  prop->add_option("--floor", o.floor);
  prop->add_option("--out", o.out)->required();
  on(prop, cmd_propensity);

  auto* ss = app.add_subcommand("selfsample", "Draw one truncated-IPS auxiliary subset");
  ss->add_option("--input", o.input)->required()->check(CLI::ExistingFile);
  ss->add_option("--schema", o.schema);
  ss->add_option("--gamma", o.gamma);
  ss->add_option("--floor", o.floor);
  ss->add_option("--epsilon", o.epsilon);
  ss->add_option("--seed", o.seed);
  ss->add_option("--out", o.out)->required();
  on(ss, cmd_selfsample);

  auto* tr = app.add_subcommand("train", "Train a model; per-epoch JSON lines on stdout");
  tr->add_option("--objective", o.objective)
      ->check(CLI::IsMember({"naive", "ips", "snips", "sste"}));
  tr->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
  tr->add_option("--val", o.val)->required()->check(CLI::ExistingFile);
  tr->add_option("--schema", o.schema);
  tr->add_option("--gamma", o.gamma);
  tr->add_option("--floor", o.floor);
  tr->add_option("--epsilon-train", o.eps_train, "comma-separated thresholds");
  tr->add_option("--epsilon-val", o.eps_val, "comma-separated thresholds");
  tr->add_flag("--resample", o.resample, "redraw auxiliary training subsets every epoch");
  tr->add_option("--dim", o.dim);
  tr->add_option("--lr", o.lr);
  tr->add_option("--l2", o.l2);
  tr->add_option("--batch", o.batch);
  tr->add_option("--max-epochs", o.max_epochs);
  tr->add_option("--patience", o.patience);
  tr->add_option("--seed", o.seed);
  tr->add_option("--checkpoint-out", o.checkpoint_out);
  tr->add_option("--log", o.log, "write the JSON-lines log here instead of stdout");
  on(tr, cmd_train);

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint; prints one JSON object");
  ev->add_option("--checkpoint", o.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--test", o.test)->required()->check(CLI::ExistingFile);
  ev->add_option("--schema", o.schema);
  ev->add_option("--metrics", o.metrics);
  ev->add_option("--exclude", o.exclude, "training TSV whose positives are removed from rankings");
  ev->add_option("--val", o.val);
  ev->add_option("--aux-val", o.aux_val)->expected(1, -1);
  on(ev, cmd_evaluate);

  auto* exp = app.add_subcommand("exp", "Experiment orchestration");
  exp->require_subcommand(1);
  auto* run = exp->add_subcommand("run", "Run one configuration end to end");
  run->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  on(run, cmd_exp_run);
  auto* grid = exp->add_subcommand("grid", "Grid or random hyperparameter search");
  grid->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  grid->add_option("--grid", o.grid)->required()->check(CLI::ExistingFile);
  grid->add_option("--workers", o.workers);
  on(grid, cmd_exp_grid);
  auto* table = exp->add_subcommand("table", "Comparison table of finished runs");
  table->add_option("--runs", o.runs)->required()->expected(1, -1);
  table->add_option("--format", o.format)->check(CLI::IsMember({"text", "tsv", "json"}));
  on(table, cmd_exp_table);

  CLI11_PARSE(app, argc, argv);
  try {
    return action ? action(o) : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
