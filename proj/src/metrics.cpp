#include "mac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mac/errors.hpp"

namespace mac {

namespace {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassScores s;
  s.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  s.recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  s.f1 = safe_ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
  return s;
}

/// Twice the average 1-based rank of each value, so ties stay integral.
std::vector<long long> doubled_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<long long> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank ((i+1) + (j+1)) / 2
    const auto doubled = static_cast<long long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled;
    i = j + 1;
  }
  return ranks;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: scores and labels differ in length");
  const auto ranks = doubled_ranks(scores);
  long long positives = 0;
  long long rank_sum = 0;  // doubled
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++positives;
      rank_sum += ranks[i];
    }
  }
  const long long negatives = static_cast<long long>(labels.size()) - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("roc_auc: need both classes");
  // 2U = 2 * (rank sum - n1(n1+1)/2); dividing by 2 n1 n0 keeps half-integers exact.
  const long long twice_u = rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / 2.0 / static_cast<double>(positives * negatives);
}

EvalReport classification_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ContractError("classification_metrics: length mismatch");
  EvalReport r;
  auto& c = r.confusion;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  r.true_as_positive = class_scores(c.tp, c.fp, c.fn);
  r.fake_as_positive = class_scores(c.tn, c.fn, c.fp);
  r.f1_macro = (r.true_as_positive.f1 + r.fake_as_positive.f1) / 2.0;
  r.f1_micro = safe_ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  return r;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  EvalReport r = classification_metrics(scores, labels, threshold);
  r.auc = roc_auc(scores, labels);
  return r;
}

EvalReport mean_report(std::span<const EvalReport> reports) {
  EvalReport out;
  if (reports.empty()) return out;
  const double n = static_cast<double>(reports.size());
  bool all_auc = true;
  double auc = 0.0;
  auto accumulate = [n](ClassScores& dst, const ClassScores& src) {
    dst.f1 += src.f1 / n;
    dst.precision += src.precision / n;
    dst.recall += src.recall / n;
  };
  for (const auto& r : reports) {
    if (r.auc) auc += *r.auc / n;
    else all_auc = false;
    out.f1_macro += r.f1_macro / n;
    out.f1_micro += r.f1_micro / n;
    accumulate(out.true_as_positive, r.true_as_positive);
    accumulate(out.fake_as_positive, r.fake_as_positive);
    out.confusion.tp += r.confusion.tp;
    out.confusion.fp += r.confusion.fp;
    out.confusion.tn += r.confusion.tn;
    out.confusion.fn += r.confusion.fn;
  }
  if (all_auc) out.auc = auc;
  return out;
}

double wilcoxon_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("wilcoxon: paired samples differ in length");
  if (a.size() < 5) throw ContractError("wilcoxon: need at least 5 pairs");

  std::vector<double> magnitudes;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;
    magnitudes.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  const std::size_t n = magnitudes.size();
  if (n == 0) throw UndefinedMetricError("wilcoxon: every difference is zero");

  const auto ranks = doubled_ranks(magnitudes);
  long long observed = 0;  // doubled W+
  for (std::size_t i = 0; i < n; ++i)
    if (positive[i]) observed += ranks[i];

  if (n <= 20) {
    // Exact null: each rank independently signed. counts[s] = number of
    // sign assignments whose doubled W+ equals s.
    const long long total = std::accumulate(ranks.begin(), ranks.end(), 0LL);
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long long reach = 0;
    for (long long r : ranks) {
      for (long long s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    double tail = 0.0;
    for (long long s = observed; s <= total; ++s) tail += counts[static_cast<std::size_t>(s)];
    return tail / std::ldexp(1.0, static_cast<int>(n));
  }

  const double nn = static_cast<double>(n);
  const double w = static_cast<double>(observed) / 2.0;
  const double mean = nn * (nn + 1.0) / 4.0;
  double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::vector<double> sorted = magnitudes;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    variance -= (t * t * t - t) / 48.0;
    i = j + 1;
  }
  if (variance <= 0.0) throw UndefinedMetricError("wilcoxon: zero variance");
  const double z = (w - mean - 0.5) / std::sqrt(variance);
  return normal_upper_tail(z);
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  auto scores = [](const ClassScores& s) {
    nlohmann::ordered_json j;
    j["f1"] = s.f1;
    j["precision"] = s.precision;
    j["recall"] = s.recall;
    return j;
  };
  nlohmann::ordered_json j;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
  j["f1_macro"] = r.f1_macro;
  j["f1_micro"] = r.f1_micro;
  j["true_news_as_positive"] = scores(r.true_as_positive);
  j["fake_news_as_positive"] = scores(r.fake_as_positive);
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  return j;
}

}  // namespace mac
