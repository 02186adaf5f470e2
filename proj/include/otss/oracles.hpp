#pragma once

// Independent reference implementations used by the verification suites and
// the test oracles. Nothing here shares code with the production paths it
// checks: matching is exhaustive search, OT is a min-cost-flow solve, metrics
// are a direct pairwise recount.

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

#include "otss/metrics.hpp"

namespace otss::oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Minimum-cost injection by exhaustive search over all column choices.
struct BruteMatch {
  std::vector<int> cols;
  double cost = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void brute_rec(const Mat& c, int row, std::vector<int>& cur,
                      std::vector<char>& used, double acc, BruteMatch& best) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  if (row == n) {
    if (acc < best.cost) {
      best.cost = acc;
      best.cols = cur;
    }
    return;
  }
  for (int j = 0; j < m; ++j) {
    if (used[j]) continue;
    used[j] = 1;
    cur[row] = j;
    brute_rec(c, row + 1, cur, used, acc + c(row, j), best);
    used[j] = 0;
  }
}

}  // namespace detail

inline BruteMatch brute_force_assignment(const Mat& c) {
  if (c.rows() > c.cols())
    throw std::invalid_argument("brute force assignment: rows > cols");
  BruteMatch best;
  std::vector<int> cur(c.rows());
  std::vector<char> used(c.cols(), 0);
  detail::brute_rec(c, 0, cur, used, 0.0, best);
  return best;
}

// Exact discrete OT via successive shortest augmenting paths on the bipartite
// supply/demand graph (capacities live only on source and sink arcs, so at
// most n+m augmentations occur).
inline double exact_ot(const Mat& c, const Vec& mu, const Vec& nu) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  Vec supply = mu, demand = nu;
  Mat flow = Mat::Zero(n, m);
  const double inf = std::numeric_limits<double>::infinity();
  const double tiny = 1e-15;
  double total = 0.0;
  while (true) {
    int src = -1;
    for (int i = 0; i < n; ++i)
      if (supply(i) > tiny) {
        src = i;
        break;
      }
    if (src < 0) break;
    // Bellman-Ford over nodes: rows 0..n-1, cols n..n+m-1. Residual arcs:
    // i->j with cost c(i,j); j->i with cost -c(i,j) when flow(i,j) > 0.
    std::vector<double> dist(n + m, inf);
    std::vector<int> prev(n + m, -1);
    for (int i = 0; i < n; ++i)
      if (supply(i) > tiny) dist[i] = 0.0;
    for (int pass = 0; pass < n + m; ++pass) {
      bool changed = false;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          if (dist[i] + c(i, j) < dist[n + j] - 1e-18) {
            dist[n + j] = dist[i] + c(i, j);
            prev[n + j] = i;
            changed = true;
          }
          if (flow(i, j) > tiny && dist[n + j] - c(i, j) < dist[i] - 1e-18) {
            dist[i] = dist[n + j] - c(i, j);
            prev[i] = n + j;
            changed = true;
          }
        }
      if (!changed) break;
    }
    int sink = -1;
    double best = inf;
    for (int j = 0; j < m; ++j)
      if (demand(j) > tiny && dist[n + j] < best) {
        best = dist[n + j];
        sink = j;
      }
    if (sink < 0)
      throw std::runtime_error("exact_ot: no augmenting path (unbalanced input?)");
    // bottleneck along the path
    double push = std::min(demand(sink), inf);
    int node = n + sink;
    while (prev[node] != -1) {
      int p = prev[node];
      if (node >= n && p < n) {
        // forward arc, unlimited capacity
      } else {
        push = std::min(push, flow(node, p - n));
      }
      node = p;
    }
    push = std::min(push, supply(node));
    node = n + sink;
    while (prev[node] != -1) {
      int p = prev[node];
      if (node >= n && p < n)
        flow(p, node - n) += push;
      else
        flow(node, p - n) -= push;
      node = p;
    }
    supply(node) -= push;
    demand(sink) -= push;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) total += flow(i, j) * c(i, j);
  return total;
}

// Direct recount of all six metrics from label-sample pairs, written against
// the definitions rather than the production accumulation scheme.
inline MetricsReport recount_metrics(const std::vector<LabelSet>& pred,
                                     const std::vector<LabelSet>& gold) {
  MetricsReport r;
  std::set<int> labels;
  for (const auto& s : pred) labels.insert(s.begin(), s.end());
  for (const auto& s : gold) labels.insert(s.begin(), s.end());
  double tp = 0, fpos = 0, fneg = 0;
  double ma = 0, we = 0, support = 0;
  for (int l : labels) {
    double ltp = 0, lfp = 0, lfn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      bool inp = pred[i].count(l) != 0, ing = gold[i].count(l) != 0;
      if (inp && ing) ++ltp;
      if (inp && !ing) ++lfp;
      if (!inp && ing) ++lfn;
    }
    tp += ltp;
    fpos += lfp;
    fneg += lfn;
    double p = ltp + lfp > 0 ? ltp / (ltp + lfp) : 0;
    double rec = ltp + lfn > 0 ? ltp / (ltp + lfn) : 0;
    double f = p + rec > 0 ? 2 * p * rec / (p + rec) : 0;
    ma += f;
    we += f * (ltp + lfn);
    support += ltp + lfn;
    r.per_label[l] = LabelCounts{static_cast<long>(ltp), static_cast<long>(lfp),
                                 static_cast<long>(lfn)};
  }
  r.microP = tp + fpos > 0 ? tp / (tp + fpos) : 0;
  r.microR = tp + fneg > 0 ? tp / (tp + fneg) : 0;
  r.microF1 = r.microP + r.microR > 0
                  ? 2 * r.microP * r.microR / (r.microP + r.microR)
                  : 0;
  r.maF1 = labels.empty() ? 0 : ma / static_cast<double>(labels.size());
  r.weF1 = support > 0 ? we / support : 0;
  double eb = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].empty() && gold[i].empty()) {
      eb += 1;
      continue;
    }
    double itp = 0;
    for (int l : pred[i]) itp += gold[i].count(l) ? 1 : 0;
    double denom = static_cast<double>(pred[i].size() + gold[i].size());
    eb += denom > 0 ? 2 * itp / denom : 0;
  }
  r.ebF1 = eb / static_cast<double>(pred.size());
  return r;
}

}  // namespace otss::oracle
