#include <doctest.h>

#include <cmath>
#include <random>

#include "adamhf/flops.hpp"
#include "adamhf/fusion.hpp"

using namespace adamhf;

namespace {

Tensor<double> vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor<double>::from({n}, std::move(v));
}

Tensor<double> random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return vec(std::move(v));
}

}  // namespace

TEST_CASE("append_one") {
  auto v = append_one(vec({2.0, -3.0}));
  CHECK(v.value() == std::vector<double>{2.0, -3.0, 1.0});
  CHECK_THROWS_AS(append_one(Tensor<double>::zeros({2, 2})), std::invalid_argument);
}

TEST_CASE("rank-1 scalar-output fusion closed form") {
  // x_p=[2,1], x_g=[3,1], factors w_p=[1,0], w_g=[1,0] -> (2.1)(3.1)=6
  LowRankFusionParams<double> p;
  p.rank = 1;
  p.n_h = 1;
  p.w_p = Tensor<double>::from({2, 1}, {1.0, 0.0});
  p.w_g = Tensor<double>::from({2, 1}, {1.0, 0.0});
  p.bias = Tensor<double>::zeros({1});
  auto out = low_rank_fuse(vec({2.0, 1.0}), vec({3.0, 1.0}), p);
  CHECK(out.item() == doctest::Approx(6.0));
  // zero factors leave only the bias
  p.w_p = Tensor<double>::zeros({2, 1});
  p.bias = Tensor<double>::from({1}, {0.75});
  CHECK(low_rank_fuse(vec({2.0, 1.0}), vec({3.0, 1.0}), p).item() ==
        doctest::Approx(0.75));
}

TEST_CASE("low-rank fusion equals the materialized sum-of-outer-products tensor") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const int lp = 2 + static_cast<int>(rng() % 5);
    const int lg = 2 + static_cast<int>(rng() % 5);
    const int rank = 1 + static_cast<int>(rng() % 4);
    const int nh = 1 + static_cast<int>(rng() % 3);
    ParamStore<double> ps;
    auto p = LowRankFusionParams<double>::init(ps, "f" + std::to_string(trial), lp,
                                               lg, rank, nh, rng);
    std::normal_distribution<double> d(0, 1);
    for (auto& b : p.bias.mut_value()) b = d(rng);
    auto x_p = random_vec(lp, rng);
    auto x_g = random_vec(lg, rng);

    // W[a][b][h] = sum_i w_p[a][i,h] * w_g[b][i,h]
    std::vector<double> w(static_cast<size_t>(lp) * lg * nh, 0.0);
    for (int a = 0; a < lp; ++a)
      for (int b = 0; b < lg; ++b)
        for (int h = 0; h < nh; ++h)
          for (int i = 0; i < rank; ++i)
            w[(static_cast<size_t>(a) * lg + b) * nh + h] +=
                p.w_p.value()[a * rank * nh + i * nh + h] *
                p.w_g.value()[b * rank * nh + i * nh + h];
    auto want = explicit_bilinear_fuse(x_p.value(), x_g.value(), w, p.bias.value());
    auto got = low_rank_fuse(x_p, x_g, p);
    REQUIRE(got.size() == want.size());
    for (size_t h = 0; h < want.size(); ++h)
      CHECK(std::abs(got.value()[h] - want[h]) <= 1e-6);
  }
}

TEST_CASE("fusion rejects bad shapes and ranks") {
  std::mt19937_64 rng(2);
  ParamStore<double> ps;
  CHECK_THROWS_AS(LowRankFusionParams<double>::init(ps, "f", 3, 3, 0, 2, rng),
                  std::invalid_argument);
  auto p = LowRankFusionParams<double>::init(ps, "g", 3, 4, 2, 2, rng);
  CHECK_THROWS_AS(low_rank_fuse(random_vec(2, rng), random_vec(4, rng), p),
                  std::invalid_argument);
  CHECK_THROWS_AS(low_rank_fuse(random_vec(3, rng), random_vec(3, rng), p),
                  std::invalid_argument);
}

TEST_CASE("blend endpoints and linearity") {
  auto local = vec({1.0, 3.0});
  auto global = vec({5.0, -1.0});
  CHECK(blend(local, global, 1.0).value() == std::vector<double>{1.0, 3.0});
  CHECK(blend(local, global, 0.0).value() == std::vector<double>{5.0, -1.0});
  auto b = blend(local, global, 0.2);
  CHECK(b.value()[0] == doctest::Approx(0.2 * 1.0 + 0.8 * 5.0));
  CHECK(b.value()[1] == doctest::Approx(0.2 * 3.0 + 0.8 * (-1.0)));
  // linear in beta: midpoint of the endpoint blends
  auto b25 = blend(local, global, 0.25);
  auto b75 = blend(local, global, 0.75);
  auto b50 = blend(local, global, 0.5);
  for (int i = 0; i < 2; ++i)
    CHECK(b50.value()[i] == doctest::Approx(0.5 * (b25.value()[i] + b75.value()[i])));
  CHECK_THROWS_AS(blend(local, global, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(blend(local, global, 1.1), std::invalid_argument);
}

TEST_CASE("hazard head squashes into (0,1) and validates width") {
  std::mt19937_64 rng(3);
  ParamStore<double> ps;
  auto head = Mlp2<double>::init(ps, "h", 3, 4, 4, rng);
  auto out = hazard_head(random_vec(3, rng), head, 4);
  REQUIRE(out.size() == 4);
  for (double h : out.value()) {
    CHECK(h > 0.0);
    CHECK(h < 1.0);
  }
  CHECK_THROWS_AS(hazard_head(random_vec(3, rng), head, 1), std::invalid_argument);
  CHECK_THROWS_AS(hazard_head(random_vec(3, rng), head, 5), std::logic_error);
}

TEST_CASE("global fusion is the mlp on the concatenated class tokens") {
  std::mt19937_64 rng(4);
  ParamStore<double> ps;
  auto mlp = Mlp2<double>::init(ps, "g", 6, 4, 2, rng);
  auto a = random_vec(3, rng);
  auto b = random_vec(3, rng);
  auto got = global_fuse(a, b, mlp);
  auto want = mlp(concat_vec<double>({a, b}));
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(got.value()[i] == doctest::Approx(want.value()[i]));
}

TEST_CASE("low-rank cost grows linearly while the explicit path grows quadratically") {
  std::mt19937_64 rng(5);
  auto cost_pair = [&](int len) {
    ParamStore<double> ps;
    auto p = LowRankFusionParams<double>::init(ps, "f" + std::to_string(len), len,
                                               len, 4, 8, rng);
    auto x_p = random_vec(len, rng);
    auto x_g = random_vec(len, rng);
    FlopLedger lr;
    {
      FlopScope scope(lr);
      low_rank_fuse(x_p, x_g, p);
    }
    FlopLedger ex;
    {
      FlopScope scope(ex);
      std::vector<double> w(static_cast<size_t>(len) * len * 8, 0.0);
      explicit_bilinear_fuse(x_p.value(), x_g.value(), w, std::vector<double>(8, 0.0));
    }
    return std::pair<long long, long long>{lr.total(), ex.total()};
  };
  auto [lr_small, ex_small] = cost_pair(16);
  auto [lr_big, ex_big] = cost_pair(64);
  // 4x the operand length: linear path ~4x, explicit path ~16x
  const double lr_ratio = static_cast<double>(lr_big) / lr_small;
  const double ex_ratio = static_cast<double>(ex_big) / ex_small;
  CHECK(lr_ratio < 5.0);
  CHECK(ex_ratio > 14.0);
  CHECK(ex_big > lr_big);
}
