#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "adamhf/special.hpp"
#include "adamhf/survival.hpp"

using namespace adamhf;

namespace {
Tensor<double> haz(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor<double>::from({n}, std::move(v));
}
}  // namespace

TEST_CASE("censored nll closed forms") {
  // uncensored event at bin 2 with flat hazards 0.5:
  // -log f_s(1) - log f_h(2) = -log 0.5 - log 0.5 = 2 ln 2
  CHECK(nll_loss(haz({0.5, 0.5}), 2, 0).item() == doctest::Approx(2 * std::log(2.0)));
  // censored at bin 1: -log f_s(1) = ln 2
  CHECK(nll_loss(haz({0.5, 0.5}), 1, 1).item() == doctest::Approx(std::log(2.0)));
  // certain event at bin 1 with h_1 -> 1 gives ~0 loss (clamped, not inf)
  CHECK(nll_loss(haz({1.0, 0.5}), 1, 0).item() == doctest::Approx(0.0).epsilon(1e-5));
  // impossible observation stays finite thanks to the clamp
  CHECK(std::isfinite(nll_loss(haz({0.0, 0.0}), 1, 0).item()));
  CHECK_THROWS_AS(nll_loss(haz({0.5, 0.5}), 0, 0), std::logic_error);
  CHECK_THROWS_AS(nll_loss(haz({0.5, 0.5}), 3, 0), std::logic_error);
}

TEST_CASE("nll gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> vals(4);
    for (auto& v : vals) v = u(rng);
    const int t = 1 + static_cast<int>(rng() % 4);
    const int c = static_cast<int>(rng() % 2);
    auto h = haz(vals);
    h.set_requires_grad(true);
    auto loss = nll_loss(h, t, c);
    loss.backward();
    const auto& g = h.grad();
    for (int i = 0; i < 4; ++i) {
      const double eps = 1e-6;
      auto lo = vals, hi = vals;
      lo[i] -= eps;
      hi[i] += eps;
      const double fd =
          (nll_loss(haz(hi), t, c).item() - nll_loss(haz(lo), t, c).item()) / (2 * eps);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("align loss closed forms") {
  auto a = haz({1.0, -1.0});
  auto b = haz({0.0, 0.0});
  CHECK(align_loss(a, b).item() == doctest::Approx(1.0));
  CHECK(align_loss(a, a).item() == doctest::Approx(0.0));
  CHECK_THROWS_AS(align_loss(a, haz({0.0, 0.0, 0.0})), std::logic_error);
}

TEST_CASE("risk_from_hazards closed form and invariants") {
  auto r = risk_from_hazards({0.5, 0.5});
  REQUIRE(r.survival.size() == 2);
  CHECK(r.survival[0] == doctest::Approx(0.5));
  CHECK(r.survival[1] == doctest::Approx(0.25));
  CHECK(r.risk == doctest::Approx(1.25));
  CHECK(r.predicted_time == doctest::Approx(0.75));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> h(1 + rng() % 6);
    for (auto& v : h) v = u(rng);
    auto out = risk_from_hazards(h);
    const int T = static_cast<int>(h.size());
    double prev = 1.0;
    for (double s : out.survival) {
      CHECK(s >= 0.0);
      CHECK(s <= prev + 1e-12);
      prev = s;
    }
    CHECK(out.risk >= 0.0);
    CHECK(out.risk <= T);
    CHECK(out.predicted_time >= 0.0);
    CHECK(out.predicted_time <= T);
    CHECK(out.risk + out.predicted_time == doctest::Approx(T));
  }
}

TEST_CASE("printed concordance formula on hand cases") {
  auto rec = [](double pt, int t, int c) {
    PredRecord p;
    p.predicted_time = pt;
    p.t = t;
    p.c = c;
    return p;
  };
  // two uncensored samples, predicted times 1 < 2: only the ordered pair
  // (1,2) scores, giving 1 / (2*1) = 0.5
  CHECK(c_index_paper({rec(1, 1, 0), rec(2, 2, 0)}) == doctest::Approx(0.5));
  // everything censored scores zero
  CHECK(c_index_paper({rec(1, 1, 1), rec(2, 2, 1)}) == doctest::Approx(0.0));
  // equal predicted times: the strict inequality never fires
  CHECK(c_index_paper({rec(1, 1, 0), rec(1, 2, 0)}) == doctest::Approx(0.0));
}

TEST_CASE("harrell concordance") {
  auto rec = [](double risk, int t, int c) {
    PredRecord p;
    p.risk = risk;
    p.t = t;
    p.c = c;
    return p;
  };
  // perfectly anti-monotone risk vs time
  std::vector<PredRecord> perfect;
  for (int i = 1; i <= 6; ++i) perfect.push_back(rec(10.0 - i, i, 0));
  CHECK(c_index_harrell(perfect).value() == doctest::Approx(1.0));
  // censored later sample still comparable against the earlier event
  CHECK(c_index_harrell({rec(2, 1, 0), rec(1, 2, 1)}).value() == doctest::Approx(1.0));
  // risk tie scores half
  CHECK(c_index_harrell({rec(1, 1, 0), rec(1, 2, 0)}).value() == doctest::Approx(0.5));
  // no comparable pair -> undefined
  CHECK_FALSE(c_index_harrell({rec(1, 1, 1), rec(2, 2, 1)}).has_value());
  CHECK_FALSE(c_index_harrell({rec(1, 2, 0), rec(2, 1, 1)}).has_value());

  // random predictions land near one half
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PredRecord> rnd;
  for (int i = 0; i < 1000; ++i)
    rnd.push_back(rec(u(rng), 1 + static_cast<int>(rng() % 4), rng() % 10 < 3 ? 1 : 0));
  const double c = c_index_harrell(rnd).value();
  CHECK(c > 0.45);
  CHECK(c < 0.55);

  // invariant under any strictly increasing transform of the risks
  auto base = rnd;
  auto warped = rnd;
  for (auto& p : warped) p.risk = std::exp(3.0 * p.risk) + 7.0;
  CHECK(c_index_harrell(warped).value() == doctest::Approx(c_index_harrell(base).value()));
}

TEST_CASE("kaplan-meier closed forms") {
  auto obs = [](int t, int c) { return Observation{t, c}; };
  // one event at each of bins 1,2,3
  auto km = km_curve({obs(1, 0), obs(2, 0), obs(3, 0)}, "low");
  REQUIRE(km.survival.size() == 3);
  CHECK(km.survival[0] == doctest::Approx(2.0 / 3));
  CHECK(km.survival[1] == doctest::Approx(1.0 / 3));
  CHECK(km.survival[2] == doctest::Approx(0.0));
  CHECK(km.event_times == std::vector<int>{1, 2, 3});
  CHECK(km.at_risk == std::vector<int>{3, 2, 1});
  CHECK(km.group == "low");
  // all censored: no event times, the estimate never drops
  auto km2 = km_curve({obs(1, 1), obs(2, 1)});
  CHECK(km2.event_times.empty());
  CHECK(km2.survival.empty());
  // single event
  auto km3 = km_curve({obs(2, 0)});
  REQUIRE(km3.survival.size() == 1);
  CHECK(km3.survival[0] == doctest::Approx(0.0));
}

TEST_CASE("kaplan-meier matches a brute-force product-limit oracle") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    std::vector<Observation> group;
    for (int i = 0; i < n; ++i)
      group.push_back({1 + static_cast<int>(rng() % 4), static_cast<int>(rng() % 2)});
    auto km = km_curve(group);
    // oracle: walk distinct event bins in order, S *= (1 - d/r)
    double s = 1.0;
    size_t idx = 0;
    for (int bin = 1; bin <= 4; ++bin) {
      int d = 0, r = 0;
      for (const auto& o : group) {
        if (o.t >= bin) ++r;
        if (o.t == bin && o.c == 0) ++d;
      }
      if (d == 0) continue;
      s *= 1.0 - static_cast<double>(d) / r;
      REQUIRE(idx < km.survival.size());
      CHECK(km.event_times[idx] == bin);
      CHECK(km.at_risk[idx] == r);
      CHECK(km.survival[idx] == doctest::Approx(s));
      ++idx;
    }
    CHECK(idx == km.survival.size());
  }
}

TEST_CASE("log-rank statistic") {
  auto obs = [](int t, int c) { return Observation{t, c}; };
  // identical groups: no separation
  std::vector<Observation> g{obs(1, 0), obs(2, 0), obs(3, 1), obs(4, 0)};
  auto same = log_rank(g, g);
  CHECK(same.defined);
  CHECK(same.chi_square == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(same.p_value == doctest::Approx(1.0));

  // the chi-square(1) tail used for the p-value hits the textbook point
  CHECK(chi2_1_sf(3.841) == doctest::Approx(0.05).epsilon(1e-3));

  // strong constructed separation: early events vs late events, n=20
  std::vector<Observation> early, late;
  for (int i = 0; i < 10; ++i) {
    early.push_back(obs(1 + (i % 2), 0));
    late.push_back(obs(3 + (i % 2), 0));
  }
  auto sep = log_rank(early, late);
  CHECK(sep.defined);
  CHECK(sep.p_value < 0.01);

  // no events at all -> statistic undefined
  auto none = log_rank({obs(1, 1)}, {obs(2, 1)});
  CHECK_FALSE(none.defined);
}
