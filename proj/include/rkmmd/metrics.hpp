#pragma once

#include "rkmmd/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

// Confusion matrix and precision / recall / F1 reporting.

namespace rkmmd {

/// counts[t][p]: samples of true class t predicted as p.
struct ConfusionMatrix {
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(counts.size()); }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : counts) {
      for (auto v : row) t += v;
    }
    return t;
  }

  static ConfusionMatrix from_counts(std::vector<std::vector<std::int64_t>> counts,
                                     std::vector<std::string> names = {}) {
    const std::size_t c = counts.size();
    if (c == 0) throw InputError("confusion matrix needs at least one class");
    for (const auto& row : counts) {
      if (row.size() != c) throw InputError("confusion matrix must be square");
      for (auto v : row) {
        if (v < 0) throw InputError("confusion matrix counts must be >= 0");
      }
    }
    if (names.empty()) {
      for (std::size_t i = 0; i < c; ++i) names.push_back(std::to_string(i));
    }
    if (names.size() != c) throw InputError("class name count does not match confusion matrix");
    return ConfusionMatrix{std::move(counts), std::move(names)};
  }
};

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                                 int num_classes, std::vector<std::string> class_names = {}) {
  if (truth.size() != predicted.size()) throw InputError("confusion: label lists differ in length");
  if (num_classes < 1) throw InputError("confusion: need at least one class");
  std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(num_classes),
                                                std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw InputError("confusion: label out of range at position " + std::to_string(i));
    }
    ++counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return ConfusionMatrix::from_counts(std::move(counts), std::move(class_names));
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  AverageMetrics macro_avg;
  AverageMetrics weighted_avg;
  std::int64_t total = 0;
};

/// Per-class and aggregate metrics. A ratio with a zero denominator is 0 (no
/// predictions of a class gives precision 0, no true samples gives recall 0,
/// P + R = 0 gives F1 0), so every aggregate is always defined.
inline ClassificationReport report(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw InputError("report: confusion matrix has no samples");
  const int c = cm.num_classes();
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };

  ClassificationReport r;
  r.class_names = cm.class_names;
  r.total = total;
  std::int64_t correct = 0;
  for (int k = 0; k < c; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::int64_t predicted = 0;
    std::int64_t actual = 0;
    for (int j = 0; j < c; ++j) {
      predicted += cm.counts[static_cast<std::size_t>(j)][ku];
      actual += cm.counts[ku][static_cast<std::size_t>(j)];
    }
    const auto tp = static_cast<double>(cm.counts[ku][ku]);
    correct += cm.counts[ku][ku];
    ClassMetrics m;
    m.precision = ratio(tp, static_cast<double>(predicted));
    m.recall = ratio(tp, static_cast<double>(actual));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.support = actual;
    r.per_class.push_back(m);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.macro_avg.precision += m.precision / c;
    r.macro_avg.recall += m.recall / c;
    r.macro_avg.f1 += m.f1 / c;
    r.weighted_avg.precision += w * m.precision;
    r.weighted_avg.f1 += w * m.f1;
  }
  // Support-weighted recall is sum_k TP_k / total, i.e. the accuracy.
  r.weighted_avg.recall = r.accuracy;
  r.macro_f1 = r.macro_avg.f1;
  return r;
}

/// Aligned text table: one row per class, accuracy, macro and weighted averages.
inline std::string format_report_table(const ClassificationReport& r) {
  std::size_t width = std::string("Weighted Avg.").size();
  for (const auto& n : r.class_names) width = std::max(width, n.size());
  std::string out;
  char buf[256];
  auto row = [&](const std::string& label, const std::string& p, const std::string& rc,
                 const std::string& f, std::int64_t support) {
    std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s  %9lld\n", static_cast<int>(width), label.c_str(),
                  p.c_str(), rc.c_str(), f.c_str(), static_cast<long long>(support));
    out += buf;
  };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(width), "", "Precision",
                "Recall", "F1-Score", "Support");
  out += buf;
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    row(r.class_names[k], num(m.precision), num(m.recall), num(m.f1), m.support);
  }
  out += "\n";
  row("Accuracy", "-", "-", num(r.accuracy), r.total);
  row("Macro Avg.", num(r.macro_avg.precision), num(r.macro_avg.recall), num(r.macro_avg.f1), r.total);
  row("Weighted Avg.", num(r.weighted_avg.precision), num(r.weighted_avg.recall), num(r.weighted_avg.f1),
      r.total);
  return out;
}

inline nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    classes.push_back({{"class", r.class_names[k]},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  auto avg = [](const AverageMetrics& a) {
    return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  return {{"record", "classification_report"},
          {"per_class", classes},
          {"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"macro_avg", avg(r.macro_avg)},
          {"weighted_avg", avg(r.weighted_avg)},
          {"total", r.total}};
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"record", "confusion_matrix"}, {"classes", cm.class_names}, {"counts", cm.counts}};
}

}  // namespace rkmmd
