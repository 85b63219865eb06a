#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adamhf/atsa.hpp"

using namespace adamhf;

namespace {

Tensor<double> random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(static_cast<size_t>(r) * c);
  for (auto& x : v) x = d(rng);
  return Tensor<double>::from({r, c}, std::move(v));
}

void fill(Tensor<double>& t, double v) {
  std::fill(t.mut_value().begin(), t.mut_value().end(), v);
}

TokenSeq<double> random_seq(int n, int d, std::mt19937_64& rng) {
  return make_seq(random_mat(n, d, rng), random_mat(1, d, rng), Modality::Patho);
}

}  // namespace

TEST_CASE("budget formula: neutral allocator with bounds 8..64") {
  std::mt19937_64 rng(1);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 8, 64, rng);
  fill(p.alloc.w, 0.0);
  fill(p.alloc.b, 0.0);
  auto cls = flatten(random_mat(1, 4, rng));
  // gate = sigmoid(0) = 0.5 -> round(8 + 0.5 * (64 - 8)) = 36
  CHECK(priority_allocator(p, cls, 100) == 36);
  // the upper bound shrinks to N first: round(8 + 0.5 * (20 - 8)) = 14
  CHECK(priority_allocator(p, cls, 20) == 14);
  // N below k_min collapses both bounds to N
  CHECK(priority_allocator(p, cls, 4) == 4);
  CHECK(priority_allocator(p, cls, 1) == 1);
  // saturated allocator hits the bounds
  fill(p.alloc.b, 50.0);
  CHECK(priority_allocator(p, cls, 100) == 64);
  fill(p.alloc.b, -50.0);
  CHECK(priority_allocator(p, cls, 100) == 8);
}

TEST_CASE("retention ratio is a clamped sigmoid") {
  std::mt19937_64 rng(2);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 1, 8, rng);
  auto cls = flatten(random_mat(1, 4, rng));
  fill(p.refine.w, 0.0);
  fill(p.refine.b, 0.0);
  CHECK(selective_refiner(p, cls) == doctest::Approx(0.5));
  fill(p.refine.b, 100.0);
  CHECK(selective_refiner(p, cls) == doctest::Approx(0.9));
  fill(p.refine.b, -100.0);
  CHECK(selective_refiner(p, cls) == doctest::Approx(0.1));
  fill(p.refine.b, 1.0);
  CHECK(selective_refiner(p, cls) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("parameter validation") {
  std::mt19937_64 rng(3);
  ParamStore<double> ps;
  CHECK_THROWS_AS(AtsaParams<double>::init(ps, "a", 5, 1, 8, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(AtsaParams<double>::init(ps, "b", 4, 0, 8, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(AtsaParams<double>::init(ps, "c", 4, 9, 8, rng),
                  std::invalid_argument);
}

TEST_CASE("scores form a distribution over the tokens") {
  std::mt19937_64 rng(4);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 6, 1, 8, rng);
  auto x = random_seq(7, 6, rng);
  auto s = score_tokens(p, x.non_class(), x.cls());
  REQUIRE(s.size() == 7);
  double total = 0;
  for (double v : s.value()) {
    CHECK(v > 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("replayed 4-token case: keep the top token, pool the other three") {
  std::mt19937_64 rng(5);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 1, 8, rng);
  auto x = random_seq(4, 4, rng);
  auto scores = score_tokens(p, x.non_class(), x.cls());

  AtsaTrace tr;
  tr.k = 2;
  tr.n_keep = 1;
  tr.kept = {0};
  tr.pool_order = {1, 2, 3};
  auto out = select_and_aggregate(p, x, nullptr, &tr);
  REQUIRE(out.tokens.shape() == std::vector<int>{3, 4});

  // every token is scaled by N * s_i before selection
  for (int c = 0; c < 4; ++c) {
    const double scaled0 = 4.0 * scores.value()[0] * x.non_class().value()[c];
    CHECK(out.tokens.value()[c] == doctest::Approx(scaled0));
    double pooled = 0;
    for (int i : {1, 2, 3})
      pooled += 4.0 * scores.value()[i] * x.non_class().value()[i * 4 + c] / 3.0;
    CHECK(out.tokens.value()[4 + c] == doctest::Approx(pooled));
    CHECK(out.tokens.value()[8 + c] == doctest::Approx(x.cls().value()[c]));
  }

  AtsaTrace bad = tr;
  bad.pool_order = {1, 2};
  CHECK_THROWS_AS(select_and_aggregate(p, x, nullptr, &bad), std::logic_error);
}

TEST_CASE("budget covering the sequence keeps every scaled token in order") {
  std::mt19937_64 rng(6);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 6, 8, rng);
  auto x = random_seq(5, 4, rng);  // N=5 <= k_min -> K = N
  auto scores = score_tokens(p, x.non_class(), x.cls());
  AtsaTrace tr;
  auto out = select_and_aggregate(p, x, &tr);
  REQUIRE(out.tokens.shape() == std::vector<int>{6, 4});
  CHECK(tr.n_keep == 5);
  CHECK(tr.kept == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(tr.pool_order.empty());
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 4; ++c)
      CHECK(out.tokens.value()[i * 4 + c] ==
            doctest::Approx(5.0 * scores.value()[i] * x.non_class().value()[i * 4 + c]));
}

TEST_CASE("a budget of one pools everything into a single token") {
  std::mt19937_64 rng(7);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 1, 1, rng);
  auto x = random_seq(6, 4, rng);
  AtsaTrace tr;
  auto out = select_and_aggregate(p, x, &tr);
  CHECK(tr.k == 1);
  CHECK(tr.n_keep == 0);
  REQUIRE(out.tokens.shape() == std::vector<int>{2, 4});
  // the pooled token is the mean of all scaled tokens
  auto scores = score_tokens(p, x.non_class(), x.cls());
  for (int c = 0; c < 4; ++c) {
    double want = 0;
    for (int i = 0; i < 6; ++i)
      want += 6.0 * scores.value()[i] * x.non_class().value()[i * 4 + c] / 6.0;
    CHECK(out.tokens.value()[c] == doctest::Approx(want));
  }
}

TEST_CASE("natural selection keeps the top scorers, ties to the lower index") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    ParamStore<double> ps;
    auto p = AtsaParams<double>::init(ps, "a" + std::to_string(trial), 4, 2,
                                      5, rng);
    const int n = 4 + static_cast<int>(rng() % 8);
    auto x = random_seq(n, 4, rng);
    AtsaTrace tr;
    auto out = select_and_aggregate(p, x, &tr);
    CHECK(out.tokens.dim(0) == std::min(tr.k, n) + 1);
    CHECK(tr.k >= 1);
    CHECK(tr.k <= n);
    if (tr.k >= 2 && tr.k < n) {
      CHECK(tr.n_keep >= 1);
      CHECK(tr.n_keep <= tr.k - 1);
      CHECK(tr.alpha >= 0.1);
      CHECK(tr.alpha <= 0.9);
    }
    // kept + pool_order is a permutation of 0..n-1: score-descending when the
    // budget actually prunes, plain index order when it covers the sequence
    std::vector<int> order = tr.kept;
    order.insert(order.end(), tr.pool_order.begin(), tr.pool_order.end());
    std::vector<int> want(n);
    std::iota(want.begin(), want.end(), 0);
    if (tr.k < n)
      std::stable_sort(want.begin(), want.end(), [&](int a, int b) {
        return tr.scores[a] > tr.scores[b];
      });
    CHECK(order == want);
  }
}

TEST_CASE("missing modality passes through untouched") {
  std::mt19937_64 rng(9);
  ParamStore<double> ps;
  auto p = AtsaParams<double>::init(ps, "a", 4, 2, 5, rng);
  auto ph = placeholder_seq(random_mat(1, 4, rng), Modality::Geno);
  auto out = select_and_aggregate(p, ph);
  CHECK(out.tokens.value() == ph.tokens.value());
  CHECK_FALSE(out.present);
}

TEST_CASE("the scorer receives gradient through kept and pooled paths") {
  std::mt19937_64 rng(10);
  ParamStore<float> ps;
  auto p = AtsaParams<float>::init(ps, "a", 4, 2, 3, rng);
  std::normal_distribution<float> d(0, 1);
  std::vector<float> v(7 * 4);
  for (auto& e : v) e = d(rng);
  TokenSeq<float> x;
  x.tokens = Tensor<float>::from({7, 4}, std::move(v));
  auto out = select_and_aggregate(p, x);
  sum(out.tokens).backward();
  double g = 0;
  for (float e : p.score_mlp.l1.w.grad()) g += std::abs(e);
  CHECK(g > 0.0);
}
