#include "sste/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "sste/error.hpp"
#include "sste/random.hpp"

namespace sste {

std::string_view to_string(Branch b) { return b == Branch::Tilde ? "tilde" : "hat"; }

MfModel::MfModel(std::size_t n_users, std::size_t n_items, std::size_t k)
    : n_users_(n_users),
      n_items_(n_items),
      k_(k),
      user_factors_(n_users * k, 0.0),
      item_factors_(n_items * k, 0.0) {
  for (auto* h : {&tilde_, &hat_}) {
    h->user_bias.assign(n_users, 0.0);
    h->item_bias.assign(n_items, 0.0);
  }
}

std::size_t MfModel::parameter_count() const {
  return user_factors_.size() + item_factors_.size() +
         2 * (n_users_ + n_items_ + 1);
}

bool MfModel::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(user_factors_) && finite(item_factors_) && finite(tilde_.user_bias) &&
         finite(tilde_.item_bias) && finite(hat_.user_bias) && finite(hat_.item_bias) &&
         std::isfinite(tilde_.global_bias) && std::isfinite(hat_.global_bias);
}

MfModel init(std::size_t n_users, std::size_t n_items, std::size_t k, const InitSpec& spec) {
  if (n_users == 0 || n_items == 0 || k == 0)
    throw ValidationError("model dimensions must be positive");
  if (!(spec.scale >= 0.0) || !std::isfinite(spec.scale))
    throw ValidationError("init scale must be finite and non-negative");
  MfModel m(n_users, n_items, k);
  Engine rng(spec.seed);
  for (auto& x : m.user_table()) x = uniform(rng, -spec.scale, spec.scale);
  for (auto& x : m.item_table()) x = uniform(rng, -spec.scale, spec.scale);
  return m;
}

namespace {
void check_ids(const MfModel& m, UserId u, ItemId i) {
  if (u >= m.n_users() || i >= m.n_items())
    throw ValidationError("id out of range: user " + std::to_string(u) + ", item " +
                          std::to_string(i));
}

double sigmoid(double z) {
  // Keeps the result strictly inside (0,1) for any finite logit.
  constexpr double lo = 0x1.0p-60;
  constexpr double hi = 1.0 - 0x1.0p-53;
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, lo, hi);
}
}  // namespace

double logit(const MfModel& m, Branch b, UserId u, ItemId i) {
  check_ids(m, u, i);
  const auto pu = m.user_factors(u);
  const auto qi = m.item_factors(i);
  double z = 0.0;
  for (std::size_t f = 0; f < m.k(); ++f) z += pu[f] * qi[f];
  const auto& h = m.head(b);
  return z + h.user_bias[u] + h.item_bias[i] + h.global_bias;
}

double predict(const MfModel& m, Branch b, UserId u, ItemId i) { return sigmoid(logit(m, b, u, i)); }

std::vector<double> predict_all(const MfModel& m, Branch b, const Dataset& d) {
  std::vector<double> out(d.size());
  for (std::size_t j = 0; j < d.size(); ++j)
    out[j] = predict(m, b, d.interactions[j].user, d.interactions[j].item);
  return out;
}

double bce_from_logit(double z, int label) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  return softplus - static_cast<double>(label) * z;
}

double instance_loss(const MfModel& m, Branch b, UserId u, ItemId i, int label, double weight) {
  return weight * bce_from_logit(logit(m, b, u, i), label);
}

SparseGradient gradients(const MfModel& m, Branch b, UserId u, ItemId i, int label,
                         double weight) {
  if (!(weight >= 0.0)) throw ValidationError("instance weight must be >= 0");
  const double z = logit(m, b, u, i);
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  const double r = weight == 0.0 ? 0.0 : weight * (p - static_cast<double>(label));

  SparseGradient g;
  g.branch = b;
  g.user = u;
  g.item = i;
  const auto pu = m.user_factors(u);
  const auto qi = m.item_factors(i);
  g.user_factor.resize(m.k());
  g.item_factor.resize(m.k());
  for (std::size_t f = 0; f < m.k(); ++f) {
    g.user_factor[f] = r * qi[f];
    g.item_factor[f] = r * pu[f];
  }
  g.user_bias = r;
  g.item_bias = r;
  g.global_bias = r;
  return g;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {
constexpr std::string_view kMagic = "SSTE-MF-CHECKPOINT";
constexpr int kVersion = 1;

void put(std::ostream& out, double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.write(buf, ptr - buf);
}

void put_row(std::ostream& out, std::span<const double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j) out << ' ';
    put(out, row[j]);
  }
  out << '\n';
}

template <class T>
void put_ids(std::ostream& out, const std::vector<T>& ids) {
  for (std::size_t j = 0; j < ids.size(); ++j) out << (j ? " " : "") << ids[j];
  out << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) throw ParseError(line_ + 1, "unexpected end of checkpoint");
    ++line_;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }

  void expect(std::string_view want) {
    const auto got = line();
    if (got != want) throw ParseError(line_, "expected '" + std::string(want) + "'");
  }

  template <class T>
  std::vector<T> values(std::size_t n) {
    const auto s = line();
    std::vector<T> out;
    out.reserve(n);
    const char* p = s.data();
    const char* end = s.data() + s.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      T v{};
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw ParseError(line_, "malformed number");
      out.push_back(v);
      p = next;
    }
    if (out.size() != n)
      throw ParseError(line_, "expected " + std::to_string(n) + " values, got " +
                                  std::to_string(out.size()));
    return out;
  }

  std::size_t line_no() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};
}  // namespace

void write_checkpoint(std::ostream& out, const MfModel& m, const Vocabulary* vocab) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "dims " << m.n_users() << ' ' << m.n_items() << ' ' << m.k() << '\n';
  out << "user_factors\n";
  for (std::size_t u = 0; u < m.n_users(); ++u) put_row(out, m.user_factors(UserId(u)));
  out << "item_factors\n";
  for (std::size_t i = 0; i < m.n_items(); ++i) put_row(out, m.item_factors(ItemId(i)));
  for (auto b : {Branch::Tilde, Branch::Hat}) {
    const auto& h = m.head(b);
    out << "head " << to_string(b) << '\n';
    put_row(out, h.user_bias);
    put_row(out, h.item_bias);
    put(out, h.global_bias);
    out << '\n';
  }
  if (vocab) {
    if (vocab->n_users() != m.n_users() || vocab->n_items() != m.n_items())
      throw ValidationError("vocabulary size does not match model dimensions");
    out << "vocab 1\n";
    put_ids(out, vocab->raw_users());
    put_ids(out, vocab->raw_items());
  } else {
    out << "vocab 0\n";
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  {
    const auto header = r.line();
    if (header != std::string(kMagic) + ' ' + std::to_string(kVersion))
      throw ParseError(1, "not an SSTE checkpoint (or unsupported version)");
  }
  std::size_t nu = 0, ni = 0, k = 0;
  {
    std::istringstream dims(r.line());
    std::string tag;
    if (!(dims >> tag >> nu >> ni >> k) || tag != "dims" || nu == 0 || ni == 0 || k == 0)
      throw ParseError(r.line_no(), "malformed dims line");
  }
  Checkpoint cp;
  cp.model = MfModel(nu, ni, k);
  auto& m = cp.model;
  r.expect("user_factors");
  for (std::size_t u = 0; u < nu; ++u) {
    const auto row = r.values<double>(k);
    std::copy(row.begin(), row.end(), m.user_factors(UserId(u)).begin());
  }
  r.expect("item_factors");
  for (std::size_t i = 0; i < ni; ++i) {
    const auto row = r.values<double>(k);
    std::copy(row.begin(), row.end(), m.item_factors(ItemId(i)).begin());
  }
  for (auto b : {Branch::Tilde, Branch::Hat}) {
    r.expect("head " + std::string(to_string(b)));
    auto& h = m.head(b);
    h.user_bias = r.values<double>(nu);
    h.item_bias = r.values<double>(ni);
    h.global_bias = r.values<double>(1)[0];
  }
  const auto vocab_line = r.line();
  if (vocab_line == "vocab 1") {
    auto users = r.values<std::int64_t>(nu);
    auto items = r.values<std::int64_t>(ni);
    cp.vocab = Vocabulary::from_raw(std::move(users), std::move(items));
  } else if (vocab_line != "vocab 0") {
    throw ParseError(r.line_no(), "malformed vocab line");
  }
  r.expect("end");
  if (!m.all_finite()) throw ValidationError("checkpoint contains non-finite parameters");
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const MfModel& m,
                     const Vocabulary* vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_checkpoint(out, m, vocab);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace sste
