#pragma once

// Binary classification metrics. Undefined ratios (zero denominators) are
// empty optionals, never 0.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace immunokit::metrics {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// prob >= threshold counts as a positive call.
ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> probs,
                          double threshold = 0.5);

struct DerivedMetrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  // 0 when precision and recall are both 0; undefined when either is.
  std::optional<double> f1;
};

// Throws ValidationError on an all-zero matrix.
DerivedMetrics derived_metrics(const ConfusionMatrix& cm);

// Mann-Whitney AUC with average ranks, so each tied pair contributes 1/2.
// Throws ValidationError unless both classes are present.
double roc_auc(std::span<const int> labels, std::span<const double> probs);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // recall for PR, false-positive rate for ROC
  double y = 0.0;  // precision for PR, true-positive rate for ROC
};

// Thresholds at `points` quantiles of the distinct probability values
// (the smallest and, for points >= 2, the largest included). Thresholds
// below the largest one reaching full recall are dropped: they only add
// false positives. Sorted by recall ascending.
// Throws ValidationError when no label is positive.
std::vector<CurvePoint> pr_curve(std::span<const int> labels, std::span<const double> probs,
                                 std::size_t points = 100);
// One point per distinct probability plus (0, 0); sorted by FPR then TPR.
std::vector<CurvePoint> roc_curve(std::span<const int> labels, std::span<const double> probs);

nlohmann::ordered_json metrics_json(const ConfusionMatrix& cm, std::optional<double> auc = {});
// Rows are actual 0/1, columns predicted 0/1.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm);
void write_pr_csv(std::ostream& out, const std::vector<CurvePoint>& curve);
void write_roc_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

}  // namespace immunokit::metrics
