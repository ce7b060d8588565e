#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sste/experiment.hpp"
#include "sste/random.hpp"

namespace sste {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ValidationError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string_view rest(v);
  while (true) {
    const auto c = rest.find(',');
    auto item = trim(rest.substr(0, c));
    if (!item.empty()) out.push_back(std::move(item));
    if (c == std::string_view::npos) break;
    rest.remove_prefix(c + 1);
  }
  return out;
}

std::string join(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
  return s;
}

std::string join(const std::vector<double>& xs) {
  std::vector<std::string> s;
  for (double x : xs) s.push_back(fmt_double(x));
  return join(s);
}

const char* kind_name(DataSource::Kind k) {
  return k == DataSource::Kind::Synthetic ? "synthetic" : "tsv";
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected key=value");
    const auto key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError(n, "empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return parse_key_values(in);
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  const auto& s = data.synthetic;
  kv["data.source"] = kind_name(data.kind);
  if (data.kind == DataSource::Kind::Synthetic) {
    kv["synth.n_users"] = std::to_string(s.n_users);
    kv["synth.n_items"] = std::to_string(s.n_items);
    kv["synth.latent_dim"] = std::to_string(s.latent_dim);
    kv["synth.exposure_bias"] = fmt_double(s.exposure_bias_strength);
    kv["synth.positive_threshold"] = fmt_double(s.positive_threshold);
    kv["synth.relevance_scale"] = fmt_double(s.relevance_scale);
    kv["synth.popularity_exponent"] = fmt_double(s.popularity_exponent);
    kv["synth.popularity_relevance"] = fmt_double(s.popularity_relevance);
    kv["synth.train_impressions"] = std::to_string(s.train_impressions);
    kv["synth.test_impressions"] = std::to_string(s.test_impressions);
    kv["synth.val_ratio"] = fmt_double(s.val_ratio);
    kv["synth.seed"] = std::to_string(s.seed);
  } else {
    kv["data.biased"] = data.biased.string();
    kv["data.train"] = data.train.string();
    kv["data.val"] = data.val.string();
    kv["data.uniform"] = data.uniform.string();
    kv["data.schema"] = data.schema == Schema::UserItemRating ? "rating" : "label";
    kv["data.split"] = data.split == SplitMode::PerUserRandom ? "per_user" : "chronological";
    kv["data.split_ratio"] = fmt_double(data.split_ratio);
    kv["data.split_seed"] = std::to_string(data.split_seed);
  }
  kv["objective"] = std::string(to_string(objective));
  kv["propensity.gamma"] = fmt_double(gamma);
  kv["propensity.floor"] = fmt_double(floor);
  kv["selfsample.eps_train"] = join(epsilons_train);
  kv["selfsample.eps_val"] = join(epsilons_val);
  kv["selfsample.resample"] = resample_each_epoch ? "true" : "false";
  kv["selfsample.eval_baselines"] = self_eval_baselines ? "true" : "false";
  kv["train.embedding_dim"] = std::to_string(train.embedding_dim);
  kv["train.init_scale"] = fmt_double(train.init_scale);
  kv["train.lr"] = fmt_double(train.learning_rate);
  kv["train.l2"] = fmt_double(train.l2_lambda);
  kv["train.batch"] = std::to_string(train.batch_size);
  kv["train.max_epochs"] = std::to_string(train.max_epochs);
  kv["train.patience"] = std::to_string(train.patience);
  kv["train.divergence_loss"] = fmt_double(train.divergence_loss);
  kv["eval.metrics"] = join(metrics);
  kv["output_dir"] = output_dir.string();
  kv["seed"] = std::to_string(seed);
  return kv;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += k + "=" + v + "\n";
  return out;
}

RunConfig RunConfig::with(const KeyValues& overrides) const {
  RunConfig c = *this;
  auto& s = c.data.synthetic;
  for (const auto& [k, v] : overrides) {
    if (k == "data.source") {
      if (v == "synthetic") c.data.kind = DataSource::Kind::Synthetic;
      else if (v == "tsv") c.data.kind = DataSource::Kind::Tsv;
      else throw ValidationError("data.source must be synthetic|tsv");
    } else if (k == "synth.n_users") s.n_users = to_u64(k, v);
    else if (k == "synth.n_items") s.n_items = to_u64(k, v);
    else if (k == "synth.latent_dim") s.latent_dim = to_u64(k, v);
    else if (k == "synth.exposure_bias") s.exposure_bias_strength = to_double(k, v);
    else if (k == "synth.positive_threshold") s.positive_threshold = to_double(k, v);
    else if (k == "synth.relevance_scale") s.relevance_scale = to_double(k, v);
    else if (k == "synth.popularity_exponent") s.popularity_exponent = to_double(k, v);
    else if (k == "synth.popularity_relevance") s.popularity_relevance = to_double(k, v);
    else if (k == "synth.train_impressions") s.train_impressions = to_u64(k, v);
    else if (k == "synth.test_impressions") s.test_impressions = to_u64(k, v);
    else if (k == "synth.val_ratio") s.val_ratio = to_double(k, v);
    else if (k == "synth.seed") s.seed = to_u64(k, v);
    else if (k == "data.biased") c.data.biased = v;
    else if (k == "data.train") c.data.train = v;
    else if (k == "data.val") c.data.val = v;
    else if (k == "data.uniform") c.data.uniform = v;
    else if (k == "data.schema") c.data.schema = parse_schema(v);
    else if (k == "data.split") c.data.split = parse_split_mode(v);
    else if (k == "data.split_ratio") c.data.split_ratio = to_double(k, v);
    else if (k == "data.split_seed") c.data.split_seed = to_u64(k, v);
    else if (k == "objective") c.objective = parse_objective(v);
    else if (k == "propensity.gamma") c.gamma = to_double(k, v);
    else if (k == "propensity.floor") c.floor = to_double(k, v);
    else if (k == "selfsample.eps_train" || k == "selfsample.eps_val") {
      std::vector<double> eps;
      for (const auto& x : split_list(v)) eps.push_back(to_double(k, x));
      (k == "selfsample.eps_train" ? c.epsilons_train : c.epsilons_val) = std::move(eps);
    } else if (k == "selfsample.resample") c.resample_each_epoch = to_bool(k, v);
    else if (k == "selfsample.eval_baselines") c.self_eval_baselines = to_bool(k, v);
    else if (k == "train.embedding_dim") c.train.embedding_dim = to_u64(k, v);
    else if (k == "train.init_scale") c.train.init_scale = to_double(k, v);
    else if (k == "train.lr") c.train.learning_rate = to_double(k, v);
    else if (k == "train.l2") c.train.l2_lambda = to_double(k, v);
    else if (k == "train.batch") c.train.batch_size = to_u64(k, v);
    else if (k == "train.max_epochs") c.train.max_epochs = to_u64(k, v);
    else if (k == "train.patience") c.train.patience = to_u64(k, v);
    else if (k == "train.divergence_loss") c.train.divergence_loss = to_double(k, v);
    else if (k == "eval.metrics") c.metrics = split_list(v);
    else if (k == "output_dir") c.output_dir = v;
    else if (k == "seed") c.seed = to_u64(k, v);
    else throw ValidationError("unknown config key '" + k + "'");
  }
  c.train.objective = c.objective;
  return c;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) { return RunConfig{}.with(kv); }

void RunConfig::validate() const {
  if (data.kind == DataSource::Kind::Synthetic) {
    data.synthetic.validate();
  } else {
    if (data.uniform.empty()) throw ValidationError("data.uniform (test set) is required");
    const bool explicit_split = !data.train.empty() || !data.val.empty();
    if (explicit_split && (data.train.empty() || data.val.empty()))
      throw ValidationError("data.train and data.val must be given together");
    if (!explicit_split && data.biased.empty())
      throw ValidationError("either data.biased or data.train + data.val is required");
  }
  if (!(gamma >= 0.0)) throw ValidationError("propensity.gamma must be >= 0");
  if (!(floor > 0.0 && floor <= 1.0)) throw ValidationError("propensity.floor must lie in (0,1]");
  SelfSampleConfig{epsilons_train, epsilons_val, resample_each_epoch, 0}.validate();
  train.validate();
  if (metrics.empty()) throw ValidationError("eval.metrics must not be empty");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return RunConfig::from_key_values(read_key_values(path));
}

std::string run_id(const RunConfig& cfg) {
  auto kv = cfg.to_key_values();
  kv.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : kv) {
    for (unsigned char c : k + "=" + v + "\n") {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::size_t GridSpec::full_size() const {
  std::size_t n = 1;
  for (const auto& [k, vs] : values) n *= vs.size();
  return n;
}

void GridSpec::validate() const {
  if (values.empty()) throw ValidationError("grid has no hyperparameters");
  for (const auto& [k, vs] : values) {
    if (vs.empty()) throw ValidationError("grid key '" + k + "' has no values");
    if (k.rfind("data.", 0) == 0 || k.rfind("synth.", 0) == 0 || k == "output_dir" ||
        k == "seed")
      throw ValidationError("grid key '" + k + "' cannot vary inside one grid");
  }
  if (mode == Mode::RandomSample && sample_count == 0)
    throw ValidationError("random grid search needs count > 0");
}

std::vector<KeyValues> GridSpec::combinations() const {
  validate();
  const std::size_t total = full_size();
  std::vector<std::size_t> picks;
  if (mode == Mode::FullGrid || sample_count >= total) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    // Partial Fisher-Yates over the index range.
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    Engine rng(sample_seed);
    for (std::size_t i = 0; i < sample_count; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, total - i));
      std::swap(idx[i], idx[j]);
    }
    picks.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(sample_count));
    std::sort(picks.begin(), picks.end());
  }
  std::vector<KeyValues> out;
  for (auto flat : picks) {
    KeyValues kv;
    // Mixed radix with the last key as the fastest digit.
    for (auto it = values.rbegin(); it != values.rend(); ++it) {
      kv[it->first] = it->second[flat % it->second.size()];
      flat /= it->second.size();
    }
    out.push_back(std::move(kv));
  }
  return out;
}

GridSpec GridSpec::desk_default() {
  GridSpec g;
  g.values = {{"train.embedding_dim", {"10", "50"}},
              {"train.l2", {"1e-05", "0.001"}},
              {"train.batch", {"512", "4096"}},
              {"train.lr", {"0.001", "0.01"}}};
  return g;
}

GridSpec GridSpec::from_key_values(const KeyValues& kv, const std::vector<std::string>& order) {
  GridSpec g;
  for (const auto& key : order) {
    const auto& v = kv.at(key);
    if (key == "mode") {
      if (v == "full") g.mode = Mode::FullGrid;
      else if (v == "random") g.mode = Mode::RandomSample;
      else throw ValidationError("grid mode must be full|random");
    } else if (key == "count") {
      g.sample_count = to_u64(key, v);
    } else if (key == "sample_seed") {
      g.sample_seed = to_u64(key, v);
    } else {
      g.values.emplace_back(key, split_list(v));
    }
  }
  g.validate();
  return g;
}

GridSpec load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::istringstream a(text), b(text);
  const auto kv = parse_key_values(a);
  std::vector<std::string> order;
  std::string line;
  while (std::getline(b, line)) {
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto key = trim(std::string_view(t).substr(0, t.find('=')));
    if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
  }
  return GridSpec::from_key_values(kv, order);
}

}  // namespace sste
