#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace cpcl {

/// PCL (label 1) is the positive class for recall and precision.
struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  /// Names of metrics that hit a zero denominator and were reported as 0.
  std::vector<std::string> warnings;

  long total() const { return tp + fp + tn + fn; }
};

MetricsReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels);
/// Recomputes every metric from the confusion counts alone.
MetricsReport metrics_from_counts(long tp, long fp, long tn, long fn);

/// Metric means over repeated runs (e.g. seeds).
struct MeanMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};
MeanMetrics mean_metrics(const std::vector<MetricsReport>& reports);

nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const MeanMetrics& m);

/// Plain-text table with columns Model | Accuracy | F1_m | Recall | Precision.
std::string format_metrics_table(const std::vector<std::pair<std::string, MeanMetrics>>& rows);

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);
/// Student-t CDF with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Two-sided paired t-test on a - b. Throws when every difference is identical.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace cpcl
