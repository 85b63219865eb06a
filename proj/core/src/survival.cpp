#include "adamhf/survival.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "adamhf/special.hpp"

namespace adamhf {

double c_index_paper(const std::vector<PredRecord>& preds) {
  const int n = static_cast<int>(preds.size());
  if (n < 2) throw std::logic_error("c_index_paper: need at least 2 predictions");
  long long hits = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (preds[i].predicted_time < preds[j].predicted_time && preds[j].c == 0) ++hits;
    }
  return static_cast<double>(hits) / (static_cast<double>(n) * (n - 1));
}

std::optional<double> c_index_harrell(const std::vector<PredRecord>& preds) {
  const int n = static_cast<int>(preds.size());
  double concordant = 0;
  long long comparable = 0;
  for (int i = 0; i < n; ++i) {
    if (preds[i].c != 0) continue;
    for (int j = 0; j < n; ++j) {
      if (preds[i].t >= preds[j].t || i == j) continue;
      ++comparable;
      if (preds[i].risk > preds[j].risk) concordant += 1.0;
      else if (preds[i].risk == preds[j].risk) concordant += 0.5;
    }
  }
  if (comparable == 0) return std::nullopt;
  return concordant / static_cast<double>(comparable);
}

KMCurve km_curve(const std::vector<Observation>& group, const std::string& label) {
  if (group.empty()) throw std::logic_error("km_curve: empty group");
  // events[t] = deaths at bin t; risk set entering bin t = #{t_i >= t}.
  std::map<int, int> events;
  for (const auto& o : group)
    if (o.c == 0) events[o.t] += 1;
  KMCurve curve;
  curve.group = label;
  double s = 1.0;
  for (const auto& [t, d] : events) {
    int at_risk = 0;
    for (const auto& o : group)
      if (o.t >= t) ++at_risk;
    s *= 1.0 - static_cast<double>(d) / at_risk;
    curve.event_times.push_back(t);
    curve.at_risk.push_back(at_risk);
    curve.survival.push_back(s);
  }
  return curve;
}

LogRankResult log_rank(const std::vector<Observation>& a, const std::vector<Observation>& b) {
  if (a.empty() || b.empty()) throw std::logic_error("log_rank: empty group");
  std::map<int, std::pair<int, int>> events;  // bin -> (deaths in a, deaths in b)
  for (const auto& o : a)
    if (o.c == 0) events[o.t].first += 1;
  for (const auto& o : b)
    if (o.c == 0) events[o.t].second += 1;
  LogRankResult res;
  if (events.empty()) return res;  // no events anywhere: undefined

  double observed_minus_expected = 0;
  double variance = 0;
  for (const auto& [t, d] : events) {
    int n1 = 0, n2 = 0;
    for (const auto& o : a)
      if (o.t >= t) ++n1;
    for (const auto& o : b)
      if (o.t >= t) ++n2;
    const int n = n1 + n2;
    const int deaths = d.first + d.second;
    if (n < 1 || deaths == 0) continue;
    const double e1 = static_cast<double>(deaths) * n1 / n;
    observed_minus_expected += d.first - e1;
    if (n > 1)
      variance += static_cast<double>(deaths) * n1 * n2 * (n - deaths) /
                  (static_cast<double>(n) * n * (n - 1));
  }
  res.defined = true;
  if (variance <= 0) {
    res.chi_square = 0;
    res.p_value = 1;
    return res;
  }
  res.chi_square = observed_minus_expected * observed_minus_expected / variance;
  res.p_value = chi2_1_sf(res.chi_square);
  return res;
}

}  // namespace adamhf
