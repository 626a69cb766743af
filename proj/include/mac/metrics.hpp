#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include <json.hpp>

namespace mac {

struct ClassScores {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Counts with true news (label 1) as the positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct EvalReport {
  std::optional<double> auc;  // true news as positive
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  ClassScores true_as_positive;
  ClassScores fake_as_positive;
  Confusion confusion;
};

/// Mann-Whitney AUC; tied scores contribute 1/2. Throws
/// UndefinedMetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Thresholded metrics (prediction = score >= threshold). Zero denominators
/// yield 0. `auc` is left empty.
EvalReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                  double threshold = 0.5);

/// classification_metrics plus roc_auc.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Field-wise mean of reports; confusion counts are summed.
EvalReport mean_report(std::span<const EvalReport> reports);

/// One-sided paired Wilcoxon signed-rank test of a > b. Zero differences
/// are dropped and tied magnitudes get average ranks. Exact null
/// distribution for up to 20 nonzero pairs, normal approximation with
/// continuity correction beyond.
double wilcoxon_one_sided(std::span<const double> a, std::span<const double> b);

nlohmann::ordered_json to_json(const EvalReport& report);

}  // namespace mac
