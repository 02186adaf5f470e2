#pragma once

#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace otss {

struct LabelCounts {
  long tp = 0, fp = 0, fn = 0;
  long support() const { return tp + fn; }
};

using LabelSet = std::set<int>;

inline std::map<int, LabelCounts> confusion_counts(
    const std::vector<LabelSet>& pred, const std::vector<LabelSet>& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("confusion_counts: length mismatch");
  std::map<int, LabelCounts> counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int l : pred[i]) {
      if (gold[i].count(l))
        ++counts[l].tp;
      else
        ++counts[l].fp;
    }
    for (int l : gold[i])
      if (!pred[i].count(l)) ++counts[l].fn;
  }
  return counts;
}

struct MetricsReport {
  double microP = 0, microR = 0, microF1 = 0;
  double maF1 = 0, weF1 = 0, ebF1 = 0;
  std::map<int, LabelCounts> per_label;
};

struct MetricsOptions {
  // maF1 averages over labels observed in gold or predictions; set this with
  // a label-space size to average over all V labels instead.
  int macro_over_all_labels = 0;
};

namespace detail {

inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

inline double f1(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace detail

// Division-by-zero convention: every ratio with a zero denominator is 0,
// except the per-sample F1 of an empty-gold/empty-prediction pair, which is 1.
inline MetricsReport evaluate(const std::vector<LabelSet>& pred,
                              const std::vector<LabelSet>& gold,
                              const MetricsOptions& opts = {}) {
  if (pred.empty()) throw std::invalid_argument("evaluate: empty corpus");
  MetricsReport r;
  r.per_label = confusion_counts(pred, gold);
  long tp = 0, fp = 0, fn = 0;
  for (const auto& [l, c] : r.per_label) {
    (void)l;
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  r.microP = detail::safe_div(tp, tp + fp);
  r.microR = detail::safe_div(tp, tp + fn);
  r.microF1 = detail::f1(r.microP, r.microR);

  double ma_sum = 0, we_sum = 0, support_sum = 0;
  long ma_count = 0;
  for (const auto& [l, c] : r.per_label) {
    (void)l;
    double p = detail::safe_div(c.tp, c.tp + c.fp);
    double rec = detail::safe_div(c.tp, c.tp + c.fn);
    double f = detail::f1(p, rec);
    ma_sum += f;
    ++ma_count;
    we_sum += f * static_cast<double>(c.support());
    support_sum += static_cast<double>(c.support());
  }
  long ma_denom = opts.macro_over_all_labels > 0
                      ? opts.macro_over_all_labels
                      : ma_count;
  r.maF1 = detail::safe_div(ma_sum, static_cast<double>(ma_denom));
  r.weF1 = detail::safe_div(we_sum, support_sum);

  double eb_sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].empty() && gold[i].empty()) {
      eb_sum += 1.0;
      continue;
    }
    long itp = 0;
    for (int l : pred[i]) itp += gold[i].count(l) ? 1 : 0;
    eb_sum += detail::safe_div(2.0 * static_cast<double>(itp),
                               static_cast<double>(pred[i].size() + gold[i].size()));
  }
  r.ebF1 = eb_sum / static_cast<double>(pred.size());
  return r;
}

inline void print_report_text(const MetricsReport& r, std::ostream& out) {
  char buf[96];
  auto row = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "  %-8s %.6f\n", name, v);
    out << buf;
  };
  out << "metric    value\n";
  row("microP", r.microP);
  row("microR", r.microR);
  row("microF1", r.microF1);
  row("maF1", r.maF1);
  row("weF1", r.weF1);
  row("ebF1", r.ebF1);
}

inline void print_report_kv(const MetricsReport& r, std::ostream& out) {
  char buf[64];
  auto kv = [&](const char* name, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.6f\n", name, v);
    out << buf;
  };
  kv("microP", r.microP);
  kv("microR", r.microR);
  kv("microF1", r.microF1);
  kv("maF1", r.maF1);
  kv("weF1", r.weF1);
  kv("ebF1", r.ebF1);
}

}  // namespace otss
