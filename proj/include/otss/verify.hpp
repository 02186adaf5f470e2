#pragma once

// Self-check suites behind `otseq2set verify`: each pits a production path
// against its independent oracle from oracles.hpp.

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "otss/assignment.hpp"
#include "otss/loss.hpp"
#include "otss/metrics.hpp"
#include "otss/model.hpp"
#include "otss/oracles.hpp"
#include "otss/rng.hpp"
#include "otss/train.hpp"
#include "otss/transport.hpp"

namespace otss::verify {

struct SuiteResult {
  std::string name;
  bool pass = false;
  int trials = 0;
  double worst = 0.0;  // worst deviation observed
  std::string detail;
};

// Hungarian vs exhaustive injection search; exact cost equality required.
inline SuiteResult hungarian_suite(int trials = 1000, std::uint64_t seed = 42,
                                   bool inject_fault = false) {
  Rng rng(seed);
  SuiteResult r{"hungarian", true, trials};
  for (int t = 0; t < trials; ++t) {
    int n = static_cast<int>(rng.range(1, 6));
    int m = static_cast<int>(rng.range(n, 8));
    Mat c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = rng.uniform(-1.0, 1.0);
    // Fault hook: a large discount on one edge forces it into the solution,
    // so the solved cost is guaranteed to drift from the oracle's.
    if (inject_fault && t == trials / 2) c(0, 0) -= 10.0;
    double got = hungarian(c).cost;
    if (inject_fault && t == trials / 2) c(0, 0) += 10.0;
    double want = oracle::brute_force_assignment(c).cost;
    double dev = std::abs(got - want);
    r.worst = std::max(r.worst, dev);
    if (got != want) {
      r.pass = false;
      r.detail = "cost mismatch at trial " + std::to_string(t);
      break;
    }
  }
  return r;
}

// IPOT vs exact min-cost-flow OT on small random instances.
inline SuiteResult ot_suite(int trials = 200, std::uint64_t seed = 7,
                            double tol = 1e-3, bool inject_fault = false) {
  Rng rng(seed);
  SuiteResult r{"ot", true, trials};
  for (int t = 0; t < trials; ++t) {
    int n = static_cast<int>(rng.range(1, 5));
    int m = static_cast<int>(rng.range(1, 5));
    Mat c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = rng.uniform(0.0, 2.0);
    Vec mu(n), nu(m);
    for (int i = 0; i < n; ++i) mu(i) = 0.05 + rng.next_double();
    for (int j = 0; j < m; ++j) nu(j) = 0.05 + rng.next_double();
    mu /= mu.sum();
    nu /= nu.sum();
    double got = ipot(c, mu, nu).distance;
    double want = oracle::exact_ot(c, mu, nu) + (inject_fault ? 0.1 : 0.0);
    double dev = std::abs(got - want);
    r.worst = std::max(r.worst, dev);
    if (dev > tol) {
      r.pass = false;
      r.detail = "gap " + std::to_string(dev) + " at trial " + std::to_string(t);
      break;
    }
  }
  return r;
}

struct GradCheckReport {
  std::map<std::string, double> rel_err;  // per parameter array
  double max_rel = 0.0;
};

inline double loss_value(const Model& model, const Sample& s,
                         const LossConfig& cfg) {
  ForwardPass fp = model.generate(s.tokens, /*train=*/false);
  return total_loss(model, fp, s.labels, cfg).total;
}

// Central finite differences of the full combined loss against the analytic
// gradients, per parameter array. The solver runs to tight tolerance so the
// transport plan behaves as the exact argmin (envelope condition).
inline GradCheckReport grad_check(Model& model, const Sample& s, LossConfig cfg,
                                  double step = 1e-5) {
  cfg.ipot.outer_iters = 2000;
  cfg.ipot.tol = 1e-14;
  ForwardPass fp = model.generate(s.tokens, /*train=*/false);
  LossBreakdown lb = total_loss(model, fp, s.labels, cfg);
  ParamMap analytic = backward(fp, lb.total_var);

  GradCheckReport rep;
  for (auto& [name, p] : model.params()) {
    Mat fd = Mat::Zero(p.rows(), p.cols());
    for (int i = 0; i < p.rows(); ++i) {
      for (int j = 0; j < p.cols(); ++j) {
        double saved = p(i, j);
        p(i, j) = saved + step;
        double up = loss_value(model, s, cfg);
        p(i, j) = saved - step;
        double down = loss_value(model, s, cfg);
        p(i, j) = saved;
        fd(i, j) = (up - down) / (2.0 * step);
      }
    }
    double denom = std::max({fd.norm(), analytic.at(name).norm(), 1e-8});
    double rel = (fd - analytic.at(name)).norm() / denom;
    rep.rel_err[name] = rel;
    rep.max_rel = std::max(rep.max_rel, rel);
  }
  return rep;
}

inline ModelConfig tiny_config(int vin = 25, int v = 20) {
  ModelConfig cfg;
  cfg.input_vocab = vin;
  cfg.num_labels = v;
  cfg.embed_dim = 6;
  cfg.label_embed_dim = 6;
  cfg.hidden = 16;
  cfg.enc_layers = 2;
  cfg.dec_layers = 1;
  cfg.bottleneck = 0;
  cfg.kernel_sizes = {3, 4};
  cfg.conv_stride = 2;
  cfg.max_gen_len = 5;
  cfg.dropout = 0.2;
  return cfg;
}

inline SuiteResult grad_suite(std::uint64_t seed = 11, double tol = 1e-4,
                              bool inject_fault = false) {
  ModelConfig cfg = tiny_config();
  Model model(cfg, seed);
  // The default small init leaves some gate gradients at the finite-difference
  // noise floor (~1e-9), which would make the relative error meaningless.
  // Scaling the weights keeps every parameter array well-conditioned.
  for (auto& [name, p] : model.params()) p *= 5.0;
  Rng rng(Rng::mix(seed, 3));
  Sample s;
  for (int i = 0; i < 8; ++i)
    s.tokens.push_back(static_cast<int>(rng.index(cfg.input_vocab)));
  for (int l : {2, 5, 9}) s.labels.push_back(l);
  LossConfig lc;
  lc.lambda = 2.0;
  GradCheckReport rep = grad_check(model, s, lc);
  SuiteResult r{"grad", true, static_cast<int>(rep.rel_err.size())};
  r.worst = rep.max_rel + (inject_fault ? 1.0 : 0.0);
  if (r.worst > tol) {
    r.pass = false;
    for (const auto& [name, rel] : rep.rel_err)
      if (rel == rep.max_rel) r.detail = "worst array: " + name;
  }
  return r;
}

// evaluate() vs the pairwise recount oracle on random corpora.
inline SuiteResult metrics_suite(int trials = 100, std::uint64_t seed = 23,
                                 bool inject_fault = false) {
  Rng rng(seed);
  SuiteResult r{"metrics", true, trials};
  for (int t = 0; t < trials; ++t) {
    int docs = static_cast<int>(rng.range(1, 50));
    int labels = static_cast<int>(rng.range(1, 20));
    std::vector<LabelSet> pred(docs), gold(docs);
    for (int i = 0; i < docs; ++i) {
      for (int l = 0; l < labels; ++l) {
        if (rng.next_double() < 0.2) pred[i].insert(l);
        if (rng.next_double() < 0.2) gold[i].insert(l);
      }
    }
    MetricsReport got = evaluate(pred, gold);
    MetricsReport want = oracle::recount_metrics(pred, gold);
    if (inject_fault && t == trials / 2) got.microF1 += 0.01;
    double dev = 0.0;
    bool eq = got.microP == want.microP && got.microR == want.microR &&
              got.microF1 == want.microF1 && got.maF1 == want.maF1 &&
              got.weF1 == want.weF1 && got.ebF1 == want.ebF1;
    dev = std::max({std::abs(got.microF1 - want.microF1),
                    std::abs(got.maF1 - want.maF1),
                    std::abs(got.weF1 - want.weF1),
                    std::abs(got.ebF1 - want.ebF1)});
    r.worst = std::max(r.worst, dev);
    if (!eq) {
      r.pass = false;
      r.detail = "mismatch at trial " + std::to_string(t);
      break;
    }
  }
  return r;
}

inline void print_suite(const SuiteResult& r, std::ostream& out) {
  out << (r.pass ? "PASS" : "FAIL") << " " << r.name << " trials=" << r.trials
      << " worst=" << r.worst;
  if (!r.detail.empty()) out << " (" << r.detail << ")";
  out << "\n";
}

}  // namespace otss::verify
