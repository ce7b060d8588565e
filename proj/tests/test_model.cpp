#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sste/error.hpp"
#include "sste/model.hpp"

using namespace sste;

namespace {

MfModel random_model(std::size_t nu, std::size_t ni, std::size_t k, std::uint64_t seed) {
  auto m = init(nu, ni, k, {0.5, seed});
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Branch b : {Branch::Tilde, Branch::Hat}) {
    for (auto& x : m.head(b).user_bias) x = u(rng);
    for (auto& x : m.head(b).item_bias) x = u(rng);
    m.head(b).global_bias = u(rng);
  }
  return m;
}

double bias_sum(const MfModel& m, Branch b, UserId u, ItemId i) {
  const auto& h = m.head(b);
  return h.user_bias[u] + h.item_bias[i] + h.global_bias;
}

}  // namespace

TEST_CASE("zero parameters predict one half") {
  MfModel m(3, 4, 2);
  for (Branch b : {Branch::Tilde, Branch::Hat})
    for (UserId u = 0; u < 3; ++u)
      for (ItemId i = 0; i < 4; ++i) CHECK(predict(m, b, u, i) == 0.5);
  auto tiny = init(3, 4, 2, {1e-300, 1});
  CHECK(predict(tiny, Branch::Hat, 1, 1) == doctest::Approx(0.5));
}

TEST_CASE("branch heads are isolated") {
  MfModel m(2, 2, 3);
  m.head(Branch::Hat).global_bias = std::log(3.0);
  CHECK(predict(m, Branch::Hat, 0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(predict(m, Branch::Tilde, 0, 0) == 0.5);

  auto r = random_model(5, 6, 4, 3);
  const double before = predict(r, Branch::Tilde, 2, 3);
  r.head(Branch::Hat).user_bias[2] += 1.0;
  r.head(Branch::Hat).item_bias[3] -= 2.0;
  CHECK(predict(r, Branch::Tilde, 2, 3) == before);
}

TEST_CASE("branches differ only through their bias sums") {
  auto m = random_model(7, 9, 5, 11);
  for (UserId u = 0; u < 7; ++u)
    for (ItemId i = 0; i < 9; ++i) {
      const double diff = logit(m, Branch::Hat, u, i) - logit(m, Branch::Tilde, u, i);
      CHECK(diff == doctest::Approx(bias_sum(m, Branch::Hat, u, i) -
                                    bias_sum(m, Branch::Tilde, u, i))
                        .epsilon(1e-12));
    }
}

TEST_CASE("shared factors couple both branches") {
  auto m = random_model(4, 4, 3, 5);
  const double t = predict(m, Branch::Tilde, 1, 2), h = predict(m, Branch::Hat, 1, 2);
  m.user_factors(1)[0] += 0.3;
  CHECK(predict(m, Branch::Tilde, 1, 2) != t);
  CHECK(predict(m, Branch::Hat, 1, 2) != h);
}

TEST_CASE("init is deterministic, bounded, with zero biases") {
  auto a = init(20, 30, 6, {0.01, 4});
  auto b = init(20, 30, 6, {0.01, 4});
  CHECK(a == b);
  CHECK_FALSE(a == init(20, 30, 6, {0.01, 5}));
  for (double x : a.user_table()) CHECK(std::abs(x) <= 0.01);
  for (double x : a.head(Branch::Hat).item_bias) CHECK(x == 0.0);
  CHECK(a.head(Branch::Tilde).global_bias == 0.0);
  CHECK(init(1, 1, 1, {0.01, 0}).parameter_count() == 8);
}

TEST_CASE("out-of-range ids are rejected") {
  MfModel m(2, 2, 1);
  CHECK_THROWS_AS(predict(m, Branch::Hat, 2, 0), ValidationError);
  CHECK_THROWS_AS(predict(m, Branch::Hat, 0, 5), ValidationError);
}

TEST_CASE("predictions never saturate") {
  MfModel m(1, 1, 1);
  m.head(Branch::Hat).global_bias = 800.0;
  const double hi = predict(m, Branch::Hat, 0, 0);
  CHECK(hi < 1.0);
  m.head(Branch::Hat).global_bias = -800.0;
  const double lo = predict(m, Branch::Hat, 0, 0);
  CHECK(lo > 0.0);
  CHECK(std::isfinite(instance_loss(m, Branch::Hat, 0, 0, 1, 1.0)));
  CHECK(bce_from_logit(-800.0, 1) == doctest::Approx(800.0));
  CHECK(bce_from_logit(0.0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("zero weight gives exactly zero gradient") {
  auto m = random_model(3, 3, 4, 8);
  auto g = gradients(m, Branch::Tilde, 1, 2, 1, 0.0);
  for (double x : g.user_factor) CHECK(x == 0.0);
  for (double x : g.item_factor) CHECK(x == 0.0);
  CHECK(g.user_bias == 0.0);
  CHECK(g.item_bias == 0.0);
  CHECK(g.global_bias == 0.0);
  CHECK_THROWS_AS(gradients(m, Branch::Tilde, 1, 2, 1, -1.0), ValidationError);
}

TEST_CASE("gradient vanishes at a fitted point") {
  MfModel m(1, 1, 2);
  m.head(Branch::Hat).global_bias = 40.0;
  auto g = gradients(m, Branch::Hat, 0, 0, 1, 1.0);
  CHECK(std::abs(g.global_bias) < 1e-15);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = random_model(6, 7, 4, 100 + trial);
    const UserId u = static_cast<UserId>(rng() % 6);
    const ItemId i = static_cast<ItemId>(rng() % 7);
    const int y = static_cast<int>(rng() % 2);
    const Branch b = rng() % 2 ? Branch::Hat : Branch::Tilde;
    const double w = 0.25 + static_cast<double>(rng() % 100) / 50.0;
    const auto g = gradients(m, b, u, i, y, w);

    const int which = static_cast<int>(rng() % 5);
    const std::size_t j = rng() % 4;
    double* param = nullptr;
    double analytic = 0.0;
    switch (which) {
      case 0: param = &m.user_factors(u)[j]; analytic = g.user_factor[j]; break;
      case 1: param = &m.item_factors(i)[j]; analytic = g.item_factor[j]; break;
      case 2: param = &m.head(b).user_bias[u]; analytic = g.user_bias; break;
      case 3: param = &m.head(b).item_bias[i]; analytic = g.item_bias; break;
      default: param = &m.head(b).global_bias; analytic = g.global_bias; break;
    }
    const double h = 1e-5, x0 = *param;
    *param = x0 + h;
    const double up = instance_loss(m, b, u, i, y, w);
    *param = x0 - h;
    const double down = instance_loss(m, b, u, i, y, w);
    *param = x0;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic));
    CHECK(rel < 1e-4);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("gradients do not touch the other head") {
  auto m = random_model(3, 3, 2, 1);
  auto g = gradients(m, Branch::Hat, 0, 1, 1, 1.0);
  CHECK(g.branch == Branch::Hat);
  CHECK(g.user == 0);
  CHECK(g.item == 1);
}

TEST_CASE("checkpoint round trip is exact") {
  auto m = random_model(5, 4, 3, 17);
  auto v = Vocabulary::from_raw({10, 20, 30, 40, 50}, {7, 8, 9, 11});
  std::stringstream buf;
  write_checkpoint(buf, m, &v);
  auto cp = read_checkpoint(buf);
  CHECK(cp.model == m);
  REQUIRE(cp.vocab.has_value());
  CHECK(*cp.vocab == v);

  std::stringstream plain;
  write_checkpoint(plain, m);
  CHECK_FALSE(read_checkpoint(plain).vocab.has_value());

  std::stringstream bad("NOT-A-CHECKPOINT\n");
  CHECK_THROWS_AS(read_checkpoint(bad), ParseError);
  std::stringstream truncated(buf.str().substr(0, 60));
  CHECK_THROWS(read_checkpoint(truncated));
}
