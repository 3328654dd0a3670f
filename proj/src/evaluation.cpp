#include "cpcl/evaluation.hpp"

#include "cpcl/core.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace cpcl {

namespace {

double safe_ratio(double num, double den, const char* name, std::vector<std::string>& warnings) {
  if (den == 0.0) {
    warnings.emplace_back(name);
    return 0.0;
  }
  return num / den;
}

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace

MetricsReport metrics_from_counts(long tp, long fp, long tn, long fn) {
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  const double n = static_cast<double>(r.total());
  require(n > 0, "metrics: no samples");
  r.accuracy = static_cast<double>(tp + tn) / n;
  r.precision = safe_ratio(tp, tp + fp, "precision", r.warnings);
  r.recall = safe_ratio(tp, tp + fn, "recall", r.warnings);
  std::vector<std::string> ignored;
  const double neg_precision = safe_ratio(tn, tn + fn, "neg_precision", ignored);
  const double neg_recall = safe_ratio(tn, tn + fp, "neg_recall", ignored);
  r.macro_f1 = 0.5 * (f1(r.precision, r.recall) + f1(neg_precision, neg_recall));
  return r;
}

MetricsReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels) {
  require(preds.size() == labels.size(), "compute_metrics: length mismatch (" +
                                             std::to_string(preds.size()) + " vs " +
                                             std::to_string(labels.size()) + ")");
  require(!preds.empty(), "compute_metrics: empty input");
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    require((preds[i] == 0 || preds[i] == 1) && (labels[i] == 0 || labels[i] == 1),
            "compute_metrics: values must be 0 or 1");
    if (preds[i] == 1) {
      labels[i] == 1 ? ++tp : ++fp;
    } else {
      labels[i] == 0 ? ++tn : ++fn;
    }
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

MeanMetrics mean_metrics(const std::vector<MetricsReport>& reports) {
  MeanMetrics m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.accuracy += r.accuracy;
    m.macro_f1 += r.macro_f1;
    m.recall += r.recall;
    m.precision += r.precision;
  }
  const double n = static_cast<double>(reports.size());
  m.accuracy /= n;
  m.macro_f1 /= n;
  m.recall /= n;
  m.precision /= n;
  return m;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"accuracy", r.accuracy}, {"f1m", r.macro_f1},   {"recall", r.recall},
          {"precision", r.precision}, {"tp", r.tp},         {"fp", r.fp},
          {"tn", r.tn},               {"fn", r.fn},         {"warnings", r.warnings}};
}

nlohmann::json to_json(const MeanMetrics& m) {
  return {{"accuracy", m.accuracy}, {"f1m", m.macro_f1}, {"recall", m.recall}, {"precision", m.precision}};
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MeanMetrics>>& rows) {
  std::size_t width = 5;
  for (const auto& [name, m] : rows) width = std::max(width, name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Model"
     << " | Accuracy | F1_m   | Recall | Precision\n";
  os << std::string(width, '-') << "-+----------+--------+--------+----------\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, m] : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << name << " | " << std::setw(8)
       << m.accuracy << " | " << std::setw(6) << m.macro_f1 << " | " << std::setw(6) << m.recall
       << " | " << m.precision << "\n";
  }
  return os.str();
}

double incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "incomplete_beta: a and b must be positive");
  require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fastest for x < (a + 1) / (a + b + 2).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  require(df > 0.0, "student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "paired_t_test: length mismatch");
  require(a.size() >= 2, "paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    throw InvalidArgument("paired_t_test: all differences are identical (zero variance)");
  }
  TTestResult r;
  r.df = static_cast<int>(n - 1);
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t));
  r.p = std::clamp(r.p, 0.0, 1.0);
  return r;
}

}  // namespace cpcl
