#pragma once

#include <Eigen/Dense>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "otss/data.hpp"

namespace otss {

using Mat = Eigen::MatrixXd;

enum class Scheme { All, FirstN, Auto };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::All: return "all";
    case Scheme::FirstN: return "first-n";
    default: return "auto";
  }
}

struct HungarianResult {
  std::vector<int> cols;  // row i -> column cols[i]
  double cost = 0.0;      // sum of matched entries, accumulated in row order
};

namespace detail {

// Jonker-Volgenant shortest augmenting path, rows <= cols.
inline std::vector<int> jv_solve(const Mat& c) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> cols(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) cols[p[j] - 1] = j - 1;
  return cols;
}

inline double row_order_cost(const Mat& c, const std::vector<int>& cols) {
  double s = 0.0;
  for (int i = 0; i < static_cast<int>(cols.size()); ++i) s += c(i, cols[i]);
  return s;
}

}  // namespace detail

// Exact minimum-cost injection of rows into columns. Among cost-equal optima
// the lexicographically smallest column vector is returned.
inline HungarianResult hungarian(const Mat& c) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  if (n > m)
    throw std::invalid_argument("hungarian: rows (" + std::to_string(n) +
                                ") exceed cols (" + std::to_string(m) + ")");
  if (!c.allFinite())
    throw std::invalid_argument("hungarian: non-finite cost entries");
  std::vector<int> cur = detail::jv_solve(c);
  double best = detail::row_order_cost(c, cur);

  // Lexicographic tie-break: fix rows top-down, probing smaller columns whose
  // completion still achieves the optimal total.
  std::vector<char> used(m, 0);
  double fixed = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int cand = 0; cand < cur[i]; ++cand) {
      if (used[cand]) continue;
      // submatrix over remaining rows / free columns excluding cand
      std::vector<int> freecols;
      for (int j = 0; j < m; ++j)
        if (!used[j] && j != cand) freecols.push_back(j);
      Mat sub(n - i - 1, static_cast<int>(freecols.size()));
      for (int r = i + 1; r < n; ++r)
        for (std::size_t k = 0; k < freecols.size(); ++k)
          sub(r - i - 1, static_cast<int>(k)) = c(r, freecols[k]);
      std::vector<int> subcols =
          sub.rows() > 0 ? detail::jv_solve(sub) : std::vector<int>{};
      double total = fixed + c(i, cand);
      for (int r = 0; r < static_cast<int>(subcols.size()); ++r)
        total += sub(r, subcols[r]);
      if (total <= best) {
        best = total;
        cur[i] = cand;
        for (int r = 0; r < static_cast<int>(subcols.size()); ++r)
          cur[i + 1 + r] = freecols[subcols[r]];
        break;
      }
    }
    used[cur[i]] = 1;
    fixed += c(i, cur[i]);
  }
  return HungarianResult{cur, detail::row_order_cost(c, cur)};
}

// Matching cost of Eq-style pairing: entry (j, i) = -p_slot(gold_j).
// `probs` holds one distribution per generation slot, row-major N x (V+1).
inline Mat match_cost(const std::vector<int>& gold, const Mat& probs,
                      const std::vector<int>& slots) {
  if (gold.empty()) throw std::invalid_argument("match_cost: no gold labels");
  if (slots.empty()) throw std::invalid_argument("match_cost: empty slot range");
  Mat c(static_cast<int>(gold.size()), static_cast<int>(slots.size()));
  for (std::size_t j = 0; j < gold.size(); ++j)
    for (std::size_t i = 0; i < slots.size(); ++i)
      c(static_cast<int>(j), static_cast<int>(i)) = -probs(slots[i], gold[j]);
  return c;
}

// Slot -> target for all N generation slots; unmatched slots carry null_id.
struct FullAssignment {
  std::vector<int> targets;   // length N
  int null_id = -1;
  double matched_cost = 0.0;  // sum over matched (non-null) slots
};

namespace detail {

inline FullAssignment assign_impl(std::vector<int> gold, const Mat& probs,
                                  int null_id, bool first_n) {
  const int N = static_cast<int>(probs.rows());
  FullAssignment out;
  out.null_id = null_id;
  out.targets.assign(N, null_id);
  if (static_cast<int>(gold.size()) > N) {
    std::cerr << "warning: sample has " << gold.size() << " labels but only "
              << N << " generation slots; truncating gold labels\n";
    gold.resize(N);
  }
  if (gold.empty()) return out;
  const int n = static_cast<int>(gold.size());
  std::vector<int> slots;
  for (int i = 0; i < (first_n ? n : N); ++i) slots.push_back(i);
  Mat c = match_cost(gold, probs, slots);
  HungarianResult h = hungarian(c);
  for (int j = 0; j < n; ++j) out.targets[slots[h.cols[j]]] = gold[j];
  out.matched_cost = h.cost;
  return out;
}

}  // namespace detail

// Scheme 1: match gold labels against all N distributions.
inline FullAssignment assign_all(const std::vector<int>& gold, const Mat& probs,
                                 int null_id) {
  return detail::assign_impl(gold, probs, null_id, false);
}

// Scheme 2: match gold labels against the first n distributions only.
inline FullAssignment assign_first_n(const std::vector<int>& gold,
                                     const Mat& probs, int null_id) {
  return detail::assign_impl(gold, probs, null_id, true);
}

struct SchemeRecommendation {
  Scheme scheme;
  double proportion;  // fraction of samples with label size <= mean
  double mean_label_size;
};

// Empirical rule: when fewer than half the samples sit at or below the mean
// label size, first-n matching tends to work better.
template <typename SampleRange>
inline SchemeRecommendation recommend_scheme(const SampleRange& samples) {
  std::size_t count = 0;
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += static_cast<double>(s.labels.size());
    ++count;
  }
  if (count == 0) throw std::invalid_argument("recommend_scheme: empty corpus");
  double mean = sum / static_cast<double>(count);
  std::size_t le = 0;
  for (const auto& s : samples)
    if (static_cast<double>(s.labels.size()) <= mean) ++le;
  double prop = static_cast<double>(le) / static_cast<double>(count);
  return SchemeRecommendation{prop < 0.5 ? Scheme::FirstN : Scheme::All, prop,
                              mean};
}

}  // namespace otss
