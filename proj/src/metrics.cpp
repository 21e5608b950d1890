#include "immunokit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::metrics {

namespace {

void check_inputs(std::span<const int> labels, std::span<const double> probs) {
  if (labels.empty()) throw ValidationError("empty batch");
  if (labels.size() != probs.size()) throw ValidationError("label and probability counts differ");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
  }
  for (double p : probs) {
    if (std::isnan(p)) throw ValidationError("probability is NaN");
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> probs,
                          double threshold) {
  check_inputs(labels, probs);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool called = probs[i] >= threshold;
    if (labels[i]) {
      called ? ++cm.tp : ++cm.fn;
    } else {
      called ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

DerivedMetrics derived_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("confusion matrix is empty");
  DerivedMetrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  if (m.precision && m.recall) {
    const double p = *m.precision, r = *m.recall;
    m.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return m;
}

double roc_auc(std::span<const int> labels, std::span<const double> probs) {
  check_inputs(labels, probs);
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && probs[order[j]] == probs[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ValidationError("AUC needs both classes present");
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<CurvePoint> pr_curve(std::span<const int> labels, std::span<const double> probs,
                                 std::size_t points) {
  check_inputs(labels, probs);
  if (points == 0) throw ValidationError("curve needs at least one point");
  const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0) throw ValidationError("precision-recall curve needs a positive label");

  std::vector<double> distinct(probs.begin(), probs.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> thresholds;
  if (points >= distinct.size()) {
    thresholds = distinct;
  } else if (points == 1) {
    thresholds = {distinct.front()};
  } else {
    for (std::size_t q = 0; q < points; ++q) {
      const auto idx = static_cast<std::size_t>(std::llround(
          static_cast<double>(q) * static_cast<double>(distinct.size() - 1) /
          static_cast<double>(points - 1)));
      thresholds.push_back(distinct[idx]);
    }
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  }

  std::vector<CurvePoint> curve;
  // Descending, so the sweep can stop at the first threshold reaching full recall.
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    const double t = *it;
    const auto cm = confusion(labels, probs, t);
    // tp + fp >= 1 because t is one of the probabilities.
    curve.push_back({t, static_cast<double>(cm.tp) / static_cast<double>(positives),
                     static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp)});
    if (cm.tp == positives) break;
  }
  std::sort(curve.begin(), curve.end(), [](const CurvePoint& a, const CurvePoint& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.threshold > b.threshold;
  });
  return curve;
}

std::vector<CurvePoint> roc_curve(std::span<const int> labels, std::span<const double> probs) {
  check_inputs(labels, probs);
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw ValidationError("ROC curve needs both classes present");
  std::vector<double> distinct(probs.begin(), probs.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<CurvePoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
    const auto cm = confusion(labels, probs, *it);
    curve.push_back({*it, static_cast<double>(cm.fp) / static_cast<double>(negatives),
                     static_cast<double>(cm.tp) / static_cast<double>(positives)});
  }
  return curve;
}

nlohmann::ordered_json metrics_json(const ConfusionMatrix& cm, std::optional<double> auc) {
  const auto m = derived_metrics(cm);
  nlohmann::ordered_json j;
  j["tp"] = cm.tp;
  j["tn"] = cm.tn;
  j["fp"] = cm.fp;
  j["fn"] = cm.fn;
  j["total"] = cm.total();
  j["accuracy"] = m.accuracy;
  j["precision"] = optional_json(m.precision);
  j["recall"] = optional_json(m.recall);
  j["f1"] = optional_json(m.f1);
  if (auc) j["roc_auc"] = *auc;
  return j;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  out << "actual,predicted_0,predicted_1\n";
  out << "0," << cm.tn << ',' << cm.fp << '\n';
  out << "1," << cm.fn << ',' << cm.tp << '\n';
}

void write_pr_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "threshold,recall,precision\n";
  for (const auto& p : curve) {
    out << format_number(p.threshold) << ',' << format_number(p.x) << ',' << format_number(p.y)
        << '\n';
  }
}

void write_roc_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve) {
    out << (std::isinf(p.threshold) ? std::string("inf") : format_number(p.threshold)) << ','
        << format_number(p.x) << ',' << format_number(p.y) << '\n';
  }
}

}  // namespace immunokit::metrics
