#include "sste/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sste/error.hpp"
#include "sste/random.hpp"

namespace sste {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::Naive: return "naive";
    case Objective::IPS: return "ips";
    case Objective::SNIPS: return "snips";
    case Objective::SSTE: return "sste";
  }
  return "unknown";
}

Objective parse_objective(std::string_view s) {
  if (s == "naive") return Objective::Naive;
  if (s == "ips") return Objective::IPS;
  if (s == "snips") return Objective::SNIPS;
  if (s == "sste") return Objective::SSTE;
  throw ValidationError("unknown objective '" + std::string(s) +
                        "' (expected naive|ips|snips|sste)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be > 0");
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda))
    throw ValidationError("l2_lambda must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (embedding_dim < 1) throw ValidationError("embedding_dim must be >= 1");
}

// ---------------------------------------------------------------------------

RowAccumulator::RowAccumulator(std::size_t n_rows, std::size_t dim)
    : dim_(dim), slot_of_(n_rows, -1) {}

std::span<double> RowAccumulator::row(std::size_t r) {
  auto& slot = slot_of_[r];
  if (slot < 0) {
    slot = static_cast<std::int64_t>(touched_.size());
    touched_.push_back(r);
    values_.resize(values_.size() + dim_, 0.0);
  }
  return {values_.data() + static_cast<std::size_t>(slot) * dim_, dim_};
}

std::vector<double> RowAccumulator::get(std::size_t r) const {
  if (r >= slot_of_.size() || slot_of_[r] < 0) return std::vector<double>(dim_, 0.0);
  const auto v = values(static_cast<std::size_t>(slot_of_[r]));
  return {v.begin(), v.end()};
}

void RowAccumulator::clear() {
  for (auto r : touched_) slot_of_[r] = -1;
  touched_.clear();
  values_.clear();
}

std::vector<double> batch_weights(Objective o, std::span<const Interaction> batch,
                                  const PropensityTable* pt) {
  const double n = static_cast<double>(batch.size());
  std::vector<double> w(batch.size(), 1.0 / n);
  if (o == Objective::Naive || o == Objective::SSTE) return w;
  if (!pt) throw ValidationError("IPS/SNIPS training needs a propensity table");
  double inv_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = (*pt)[batch[i].item];
    if (!(p > 0.0)) throw ValidationError("propensity must be positive");
    w[i] = 1.0 / p;
    inv_sum += w[i];
  }
  const double norm = o == Objective::IPS ? n : inv_sum;
  for (auto& x : w) x /= norm;
  return w;
}

BatchGradient batch_gradient(const MfModel& m, Branch b, std::span<const Interaction> batch,
                             std::span<const double> weights) {
  if (weights.size() != batch.size()) throw ValidationError("weights misaligned with batch");
  BatchGradient g;
  g.branch = b;
  g.user_factors = RowAccumulator(m.n_users(), m.k());
  g.item_factors = RowAccumulator(m.n_items(), m.k());
  g.user_bias = RowAccumulator(m.n_users(), 1);
  g.item_bias = RowAccumulator(m.n_items(), 1);
  const auto& head = m.head(b);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& x = batch[j];
    const auto pu = m.user_factors(x.user);
    const auto qi = m.item_factors(x.item);
    double z = 0.0;
    for (std::size_t f = 0; f < m.k(); ++f) z += pu[f] * qi[f];
    z += head.user_bias[x.user] + head.item_bias[x.item] + head.global_bias;

    const double bce = bce_from_logit(z, x.label);
    g.raw_loss_sum += bce;
    g.loss += weights[j] * bce;

    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    const double r = weights[j] * (p - static_cast<double>(x.label));
    auto gu = g.user_factors.row(x.user);
    auto gi = g.item_factors.row(x.item);
    for (std::size_t f = 0; f < m.k(); ++f) {
      gu[f] += r * qi[f];
      gi[f] += r * pu[f];
    }
    g.user_bias.row(x.user)[0] += r;
    g.item_bias.row(x.item)[0] += r;
    g.global_bias += r;
  }
  return g;
}

// ---------------------------------------------------------------------------

Adam::Adam(const MfModel& m)
    : user_factors_(m.n_users() * m.k()),
      item_factors_(m.n_items() * m.k()),
      user_bias_{Moments(m.n_users()), Moments(m.n_users())},
      item_bias_{Moments(m.n_items()), Moments(m.n_items())},
      global_bias_{Moments(1), Moments(1)} {}

void Adam::update(double& param, double grad, Moments& mo, std::size_t idx, double lr) const {
  mo.m[idx] = kBeta1 * mo.m[idx] + (1.0 - kBeta1) * grad;
  mo.v[idx] = kBeta2 * mo.v[idx] + (1.0 - kBeta2) * grad * grad;
  const double mhat = mo.m[idx] / (1.0 - std::pow(kBeta1, double(t_)));
  const double vhat = mo.v[idx] / (1.0 - std::pow(kBeta2, double(t_)));
  param -= lr * mhat / (std::sqrt(vhat) + kEps);
}

void Adam::step(MfModel& m, const BatchGradient& g, double lr, double l2_lambda) {
  ++t_;
  const std::size_t k = m.k();
  const int bi = g.branch == Branch::Tilde ? 0 : 1;
  auto& head = m.head(g.branch);

  const auto& users = g.user_factors.touched();
  for (std::size_t s = 0; s < users.size(); ++s) {
    auto row = m.user_factors(UserId(users[s]));
    const auto grad = g.user_factors.values(s);
    for (std::size_t f = 0; f < k; ++f)
      update(row[f], grad[f] + l2_lambda * row[f], user_factors_, users[s] * k + f, lr);
  }
  const auto& items = g.item_factors.touched();
  for (std::size_t s = 0; s < items.size(); ++s) {
    auto row = m.item_factors(ItemId(items[s]));
    const auto grad = g.item_factors.values(s);
    for (std::size_t f = 0; f < k; ++f)
      update(row[f], grad[f] + l2_lambda * row[f], item_factors_, items[s] * k + f, lr);
  }
  const auto& ub = g.user_bias.touched();
  for (std::size_t s = 0; s < ub.size(); ++s) {
    double& p = head.user_bias[ub[s]];
    update(p, g.user_bias.values(s)[0] + l2_lambda * p, user_bias_[bi], ub[s], lr);
  }
  const auto& ib = g.item_bias.touched();
  for (std::size_t s = 0; s < ib.size(); ++s) {
    double& p = head.item_bias[ib[s]];
    update(p, g.item_bias.values(s)[0] + l2_lambda * p, item_bias_[bi], ib[s], lr);
  }
  update(head.global_bias, g.global_bias + l2_lambda * head.global_bias, global_bias_[bi], 0, lr);
}

// ---------------------------------------------------------------------------

namespace {
double sq_norm(const std::vector<double>& v) {
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

double head_sq_norm(const BranchHead& h) {
  return sq_norm(h.user_bias) + sq_norm(h.item_bias) + h.global_bias * h.global_bias;
}

double mean_bce(const MfModel& m, Branch b, const Dataset& d) {
  double s = 0.0;
  for (const auto& x : d.interactions) s += bce_from_logit(logit(m, b, x.user, x.item), x.label);
  return d.empty() ? 0.0 : s / static_cast<double>(d.size());
}

std::vector<Interaction> concat(std::span<const Dataset> parts) {
  std::vector<Interaction> all;
  for (const auto& d : parts) all.insert(all.end(), d.interactions.begin(), d.interactions.end());
  return all;
}

std::size_t n_batches(std::size_t n, std::size_t b) { return (n + b - 1) / b; }

constexpr std::uint64_t kShuffleD = 0x44;
constexpr std::uint64_t kShuffleA = 0x41;
}  // namespace

double regularization(const MfModel& m, double l2_lambda) {
  const double shared = sq_norm(m.user_table()) + sq_norm(m.item_table());
  return 0.5 * l2_lambda *
         ((shared + head_sq_norm(m.head(Branch::Tilde))) + (shared + head_sq_norm(m.head(Branch::Hat))));
}

EpochLoss objective_terms(const MfModel& m, const Dataset& d_tr, std::span<const Dataset> a_tr,
                          double l2_lambda) {
  EpochLoss l;
  l.d_tr = mean_bce(m, Branch::Tilde, d_tr);
  const auto all = concat(a_tr);
  double s = 0.0;
  for (const auto& x : all) s += bce_from_logit(logit(m, Branch::Hat, x.user, x.item), x.label);
  l.a_tr = all.empty() ? 0.0 : s / static_cast<double>(all.size());
  l.reg = regularization(m, l2_lambda);
  l.total = l.d_tr + l.a_tr + l.reg;
  return l;
}

Trainer::Trainer(MfModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), adam_(model) {
  cfg_.validate();
}

void Trainer::check(const EpochLoss& loss) const {
  for (double v : {loss.d_tr, loss.a_tr, loss.total})
    if (!std::isfinite(v) || v > cfg_.divergence_loss)
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch_) +
                            " (loss " + std::to_string(v) + ")");
  if (!model_.all_finite())
    throw DivergenceError("non-finite parameters at epoch " + std::to_string(epoch_));
}

EpochLoss Trainer::sste_epoch(const Dataset& d_tr, std::span<const Dataset> a_tr) {
  if (d_tr.empty()) throw ValidationError("SSTE epoch needs a nonempty training set");
  auto aux = concat(a_tr);
  if (aux.empty()) throw ValidationError("SSTE epoch needs a nonempty auxiliary training set");
  ++epoch_;

  std::vector<Interaction> main = d_tr.interactions;
  Engine rng_d(derive_seed(cfg_.seed, epoch_, kShuffleD));
  Engine rng_a(derive_seed(cfg_.seed, epoch_, kShuffleA));
  shuffle(std::span(main), rng_d);
  shuffle(std::span(aux), rng_a);

  const std::size_t bs = cfg_.batch_size;
  const std::size_t nd = n_batches(main.size(), bs);
  const std::size_t na = n_batches(aux.size(), bs);
  std::size_t done_d = 0, done_a = 0;
  double sum_d = 0.0, sum_a = 0.0;
  const std::span<const Interaction> main_span(main), aux_span(aux);
  while (done_d < nd || done_a < na) {
    // Bresenham-style merge keeps the two batch streams evenly interleaved.
    const bool take_d = done_a >= na || (done_d < nd && done_d * na <= done_a * nd);
    const auto& src = take_d ? main_span : aux_span;
    const std::size_t idx = take_d ? done_d++ : done_a++;
    const auto lo = idx * bs;
    const auto batch = src.subspan(lo, std::min(bs, src.size() - lo));
    const auto w = batch_weights(Objective::Naive, batch, nullptr);
    const auto branch = take_d ? Branch::Tilde : Branch::Hat;
    const auto g = batch_gradient(model_, branch, batch, w);
    (take_d ? sum_d : sum_a) += g.raw_loss_sum;
    adam_.step(model_, g, cfg_.learning_rate, cfg_.l2_lambda);
  }

  EpochLoss loss;
  loss.d_tr = sum_d / static_cast<double>(main.size());
  loss.a_tr = sum_a / static_cast<double>(aux.size());
  loss.reg = regularization(model_, cfg_.l2_lambda);
  loss.total = loss.d_tr + loss.a_tr + loss.reg;
  check(loss);
  return loss;
}

EpochLoss Trainer::baseline_epoch(const Dataset& d_tr, const PropensityTable* pt) {
  if (d_tr.empty()) throw ValidationError("training set is empty");
  if (cfg_.objective == Objective::SSTE)
    throw ValidationError("baseline_epoch called with the SSTE objective");
  ++epoch_;
  std::vector<Interaction> main = d_tr.interactions;
  Engine rng(derive_seed(cfg_.seed, epoch_, kShuffleD));
  shuffle(std::span(main), rng);

  const std::size_t bs = cfg_.batch_size;
  double sum = 0.0;
  const std::span<const Interaction> all(main);
  for (std::size_t lo = 0; lo < all.size(); lo += bs) {
    const auto batch = all.subspan(lo, std::min(bs, all.size() - lo));
    const auto w = batch_weights(cfg_.objective, batch, pt);
    const auto g = batch_gradient(model_, Branch::Hat, batch, w);
    sum += g.raw_loss_sum;
    adam_.step(model_, g, cfg_.learning_rate, cfg_.l2_lambda);
  }
  EpochLoss loss;
  loss.a_tr = sum / static_cast<double>(main.size());
  loss.reg = regularization(model_, cfg_.l2_lambda);
  loss.total = loss.d_tr + loss.a_tr + loss.reg;
  check(loss);
  return loss;
}

// ---------------------------------------------------------------------------

bool EarlyStopping::update(std::size_t epoch, double score) {
  if (score > best_) {
    best_ = score;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  epochs_since_best_ = epoch - best_epoch_;
  return false;
}

FitResult fit(const FitInputs& in, const TrainConfig& cfg) {
  cfg.validate();
  if (!in.train || !in.val) throw ValidationError("fit needs train and validation sets");
  const auto& train = *in.train;
  const auto& val = *in.val;
  auto same_dims = [&](const Dataset& d) {
    return d.n_users == train.n_users && d.n_items == train.n_items;
  };
  bool consistent = same_dims(val);
  for (const auto& d : in.aux_train) consistent = consistent && same_dims(d);
  for (const auto& d : in.aux_val) consistent = consistent && same_dims(d);
  if (!consistent) throw ValidationError("datasets disagree on vocabulary sizes");
  if (cfg.objective == Objective::SSTE && in.aux_train.empty())
    throw ValidationError("SSTE needs at least one auxiliary training subset");

  MfModel model = init(train.n_users, train.n_items, cfg.embedding_dim,
                       InitSpec{cfg.init_scale, derive_seed(cfg.seed, 0, 0x696e6974)});
  Trainer trainer(model, cfg);
  EarlyStopping stopper(cfg.patience);
  FitResult result;
  result.model = model;

  std::vector<Dataset> resampled;
  std::span<const Dataset> aux_train = in.aux_train;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (epoch > 1 && cfg.objective == Objective::SSTE && in.resample_train) {
      resampled = in.resample_train(epoch - 1);
      aux_train = resampled;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = cfg.objective == Objective::SSTE ? trainer.sste_epoch(train, aux_train)
                                                : trainer.baseline_epoch(train, in.propensity);
    rec.report = self_evaluate(model, val, in.aux_val);
    if (stopper.update(epoch, rec.report.modified_score)) result.model = model;

    auto& st = result.state;
    st.epoch = epoch;
    st.best_score = stopper.best_score();
    st.best_epoch = stopper.best_epoch();
    st.epochs_since_best = stopper.epochs_since_best();
    st.history.push_back(rec);
    if (in.on_epoch) in.on_epoch(rec);
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace sste
