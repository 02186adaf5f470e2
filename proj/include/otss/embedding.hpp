#pragma once

#include <Eigen/Dense>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otss/data.hpp"
#include "otss/rng.hpp"

namespace otss {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// rows x d table; row ownership (vocab vs label space) is the caller's.
struct EmbeddingTable {
  Mat rows;
  int dim() const { return static_cast<int>(rows.cols()); }
};

inline Mat seeded_uniform(int rows, int cols, Rng& rng, double lo = -0.1,
                          double hi = 0.1) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Reads `token v1 ... vd` lines. Tokens absent from the file receive seeded
// uniform rows in [-0.1, 0.1] so runs are reproducible without full coverage.
inline EmbeddingTable load_embeddings(std::istream& in, const Vocab& vocab,
                                      int d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("embedding dimension must be positive");
  Rng rng(seed);
  EmbeddingTable table;
  table.rows = seeded_uniform(static_cast<int>(vocab.size()), d, rng);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> vals;
    double v;
    while (is >> v) vals.push_back(v);
    if (static_cast<int>(vals.size()) != d)
      throw std::runtime_error(token + ": expected " + std::to_string(d) +
                               " values, got " + std::to_string(vals.size()));
    int id = vocab.id(token);
    if (id == Vocab::kUnk && token != vocab.token(Vocab::kUnk)) continue;
    for (int j = 0; j < d; ++j) table.rows(id, j) = vals[j];
  }
  if (!table.rows.allFinite())
    throw std::runtime_error("embedding table contains NaN/Inf");
  return table;
}

// Label rows are the mean of the label words' vectors. Labels with no
// in-vocabulary lexical content fall back to seeded random rows. Layout:
// rows 0..V-1 real labels, row V the null label (all zeros), row V+1 the
// reserved BOS row used as the first decoder input.
inline EmbeddingTable label_embeddings(const LabelSpace& labels,
                                       const EmbeddingTable& words,
                                       const Vocab& vocab, std::uint64_t seed) {
  const int d = words.dim();
  const int V = labels.size();
  Rng rng(Rng::mix(seed, 0x1abe1));
  EmbeddingTable table;
  table.rows = Mat::Zero(V + 2, d);
  for (int i = 0; i < V; ++i) {
    Vec sum = Vec::Zero(d);
    int count = 0;
    for (const auto& w : split_ws(labels.label(i))) {
      int id = vocab.id(w);
      if (id == Vocab::kUnk && w != vocab.token(Vocab::kUnk)) continue;
      sum += words.rows.row(id).transpose();
      ++count;
    }
    if (count > 0) {
      table.rows.row(i) = (sum / count).transpose();
    } else {
      for (int j = 0; j < d; ++j) table.rows(i, j) = rng.uniform(-0.1, 0.1);
    }
  }
  // row V stays zero (null label); BOS row is seeded random
  for (int j = 0; j < d; ++j) table.rows(V + 1, j) = rng.uniform(-0.1, 0.1);
  return table;
}

}  // namespace otss
