#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "adamhf/backbone.hpp"

using namespace adamhf;

namespace {

Tensor<double> mat(int r, int c, std::vector<double> v) {
  return Tensor<double>::from({r, c}, std::move(v));
}

Tensor<double> random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(static_cast<size_t>(r) * c);
  for (auto& x : v) x = d(rng);
  return mat(r, c, std::move(v));
}

void fill(Tensor<double>& t, double v) {
  std::fill(t.mut_value().begin(), t.mut_value().end(), v);
}

TokenSeq<double> random_seq(int n, int d, Modality m, std::mt19937_64& rng) {
  return make_seq(random_mat(n, d, rng), random_mat(1, d, rng), m);
}

}  // namespace

TEST_CASE("token sequence layout: class token at the last row") {
  auto seq = make_seq(mat(2, 3, {1, 2, 3, 4, 5, 6}), mat(1, 3, {7, 8, 9}),
                      Modality::Geno);
  CHECK(seq.n() == 2);
  CHECK(seq.d() == 3);
  CHECK(seq.cls().value() == std::vector<double>{7, 8, 9});
  CHECK(seq.non_class().value() == std::vector<double>{1, 2, 3, 4, 5, 6});

  auto ph = placeholder_seq(mat(1, 3, {1, 1, 1}), Modality::Patho);
  CHECK(ph.n() == 0);
  CHECK_FALSE(ph.present);
  CHECK(ph.cls().value() == std::vector<double>{1, 1, 1});
}

TEST_CASE("transformer block with zeroed output paths is the identity") {
  std::mt19937_64 rng(1);
  ParamStore<double> ps;
  auto block = TransformerBlock<double>::init(ps, "b", 4, rng);
  fill(block.wo.w, 0.0);
  fill(block.wo.b, 0.0);
  fill(block.ff2.w, 0.0);
  fill(block.ff2.b, 0.0);
  auto x = random_seq(3, 4, Modality::Patho, rng);
  auto y = block(x);
  REQUIRE(y.tokens.size() == x.tokens.size());
  for (size_t i = 0; i < x.tokens.size(); ++i)
    CHECK(y.tokens.value()[i] == doctest::Approx(x.tokens.value()[i]));
}

TEST_CASE("transformer attention rows sum to one; missing passes through") {
  std::mt19937_64 rng(2);
  ParamStore<double> ps;
  auto block = TransformerBlock<double>::init(ps, "b", 8, rng);
  auto x = random_seq(5, 8, Modality::Geno, rng);
  auto attn = block.attention_weights(x);
  REQUIRE(attn.shape() == std::vector<int>{6, 6});
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 6; ++j) s += attn.value()[i * 6 + j];
    CHECK(s == doctest::Approx(1.0));
  }
  auto ph = placeholder_seq(random_mat(1, 8, rng), Modality::Patho);
  auto out = block(ph);
  CHECK(out.tokens.value() == ph.tokens.value());
}

TEST_CASE("positional conv: zero kernel is the identity, class token untouched") {
  std::mt19937_64 rng(3);
  ParamStore<double> ps;
  auto epeg = Epeg<double>::init(ps, "e", 4, rng);
  fill(epeg.kernel, 0.0);
  auto x = random_seq(6, 4, Modality::Patho, rng);
  auto y = epeg(x);
  CHECK(y.tokens.value() == x.tokens.value());

  // with a nonzero kernel the class token is still bit-identical
  auto epeg2 = Epeg<double>::init(ps, "e2", 4, rng);
  auto y2 = epeg2(x);
  CHECK(y2.cls().value() == x.cls().value());
  CHECK(y2.non_class().value() != x.non_class().value());

  CHECK_THROWS_AS(epeg(random_seq(2, 4, Modality::Geno, rng)), std::logic_error);
}

TEST_CASE("positional conv single-token closed form") {
  // one token s: depthwise conv sees only the center tap w_c, so the
  // residual output is s * (1 + w_c) per channel.
  std::mt19937_64 rng(4);
  ParamStore<double> ps;
  auto epeg = Epeg<double>::init(ps, "e", 3, rng);
  auto x = make_seq(mat(1, 3, {2.0, -1.0, 0.5}), random_mat(1, 3, rng),
                    Modality::Patho);
  auto y = epeg(x);
  const auto& k = epeg.kernel.value();  // [7×3], center row 3
  for (int c = 0; c < 3; ++c) {
    const double s = x.non_class().value()[c];
    CHECK(y.non_class().value()[c] == doctest::Approx(s * (1.0 + k[3 * 3 + c])));
  }
}

TEST_CASE("cross-modal attention with single tokens reduces to projections") {
  std::mt19937_64 rng(5);
  ParamStore<double> ps;
  auto cross = CrossModalAttention<double>::init(ps, "c", 3, rng);
  auto x_p = random_seq(1, 3, Modality::Patho, rng);
  auto x_g = random_seq(1, 3, Modality::Geno, rng);
  auto [out_g, out_p] = cross(x_g, x_p);
  auto want_p = matmul(x_p.non_class(), cross.w_p2);
  auto want_g = matmul(x_g.non_class(), cross.w_g2);
  for (int c = 0; c < 3; ++c) {
    CHECK(out_p.non_class().value()[c] == doctest::Approx(want_p.value()[c]));
    CHECK(out_g.non_class().value()[c] == doctest::Approx(want_g.value()[c]));
  }
  CHECK(out_p.cls().value() == x_p.cls().value());
  CHECK(out_g.cls().value() == x_g.cls().value());
}

TEST_CASE("cross-modal attention hand-computed 2x3 case") {
  // d = 2, identity projections everywhere, so X = x_p x_gᵀ directly.
  ParamStore<double> ps;
  CrossModalAttention<double> cross;
  cross.w_p1 = mat(2, 2, {1, 0, 0, 1});
  cross.w_g1 = mat(2, 2, {1, 0, 0, 1});
  cross.w_p2 = mat(2, 2, {1, 0, 0, 1});
  cross.w_g2 = mat(2, 2, {1, 0, 0, 1});
  std::vector<double> pv{1, 0, 0, 1};           // 2 pathology tokens
  std::vector<double> gv{1, 0, 0, 1, 1, 1};     // 3 genomic tokens
  auto x_p = make_seq(mat(2, 2, pv), mat(1, 2, {0, 0}), Modality::Patho);
  auto x_g = make_seq(mat(3, 2, gv), mat(1, 2, {0, 0}), Modality::Geno);
  auto [out_g, out_p] = cross(x_g, x_p);

  // scores X[i][j] = p_i · g_j
  double X[2][3];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      X[i][j] = pv[i * 2] * gv[j * 2] + pv[i * 2 + 1] * gv[j * 2 + 1];
  // column softmax -> mix of pathology tokens per genomic token
  REQUIRE(out_p.non_class().shape() == std::vector<int>{3, 2});
  for (int j = 0; j < 3; ++j) {
    double z = std::exp(X[0][j]) + std::exp(X[1][j]);
    for (int c = 0; c < 2; ++c) {
      double want = (std::exp(X[0][j]) * pv[c] + std::exp(X[1][j]) * pv[2 + c]) / z;
      CHECK(out_p.non_class().value()[j * 2 + c] == doctest::Approx(want));
    }
  }
  // row softmax -> mix of genomic tokens per pathology token
  REQUIRE(out_g.non_class().shape() == std::vector<int>{2, 2});
  for (int i = 0; i < 2; ++i) {
    double z = std::exp(X[i][0]) + std::exp(X[i][1]) + std::exp(X[i][2]);
    for (int c = 0; c < 2; ++c) {
      double want = 0;
      for (int j = 0; j < 3; ++j) want += std::exp(X[i][j]) * gv[j * 2 + c];
      CHECK(out_g.non_class().value()[i * 2 + c] == doctest::Approx(want / z));
    }
  }
}

TEST_CASE("cross-modal attention is invariant to a constant score shift") {
  std::mt19937_64 rng(6);
  ParamStore<double> ps;
  auto cross = CrossModalAttention<double>::init(ps, "c", 4, rng);
  auto x_p = random_seq(3, 4, Modality::Patho, rng);
  auto x_g = random_seq(2, 4, Modality::Geno, rng);
  auto [g0, p0] = cross(x_g, x_p, 0.0);
  auto [g1, p1] = cross(x_g, x_p, 2.5);
  for (size_t i = 0; i < p0.tokens.size(); ++i)
    CHECK(p1.tokens.value()[i] == doctest::Approx(p0.tokens.value()[i]));
  for (size_t i = 0; i < g0.tokens.size(); ++i)
    CHECK(g1.tokens.value()[i] == doctest::Approx(g0.tokens.value()[i]));
}

TEST_CASE("permuting pathology tokens leaves the pathology summary unchanged") {
  std::mt19937_64 rng(7);
  ParamStore<double> ps;
  auto cross = CrossModalAttention<double>::init(ps, "c", 4, rng);
  auto x_p = random_seq(4, 4, Modality::Patho, rng);
  auto x_g = random_seq(3, 4, Modality::Geno, rng);
  auto [g0, p0] = cross(x_g, x_p);

  std::vector<int> perm{2, 0, 3, 1};
  auto x_p2 = make_seq(gather_rows(x_p.non_class(), perm), as_row(x_p.cls()),
                       Modality::Patho);
  auto [g1, p1] = cross(x_g, x_p2);
  // the pathology output aggregates over pathology tokens, so it is invariant
  for (size_t i = 0; i < p0.tokens.size(); ++i)
    CHECK(p1.tokens.value()[i] == doctest::Approx(p0.tokens.value()[i]));
  // the genomic output rows follow the pathology permutation
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(g1.non_class().value()[r * 4 + c] ==
            doctest::Approx(g0.non_class().value()[perm[r] * 4 + c]));
}

TEST_CASE("cross-modal attention with a missing side projects the present one") {
  std::mt19937_64 rng(8);
  ParamStore<double> ps;
  auto cross = CrossModalAttention<double>::init(ps, "c", 4, rng);
  auto x_p = random_seq(3, 4, Modality::Patho, rng);
  auto ph_g = placeholder_seq(random_mat(1, 4, rng), Modality::Geno);
  auto [g, p] = cross(ph_g, x_p);
  CHECK_FALSE(g.present);
  auto want = matmul(x_p.non_class(), cross.w_p2);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(p.non_class().value()[i] == doctest::Approx(want.value()[i]));

  auto ph_p = placeholder_seq(random_mat(1, 4, rng), Modality::Patho);
  CHECK_THROWS_AS(cross(ph_g, ph_p), std::logic_error);
}
