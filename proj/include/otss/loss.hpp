#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "otss/assignment.hpp"
#include "otss/model.hpp"
#include "otss/tape.hpp"
#include "otss/transport.hpp"

namespace otss {

struct LossConfig {
  double lambda_null = 0.2;  // down-weight for null-slot log terms
  double lambda = 8.0;       // OT regularizer weight
  Scheme scheme = Scheme::All;
  IpotParams ipot;

  void validate() const {
    if (lambda_null <= 0.0 || lambda_null > 1.0)
      throw std::invalid_argument("lambda_null must be in (0, 1]");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  }
};

inline constexpr double kProbClamp = 1e-12;

// Negative log-likelihood of the reordered target sequence; null-slot terms
// scaled by lambda_null. Probabilities are clamped below before the log.
inline double bipartite_loss(const FullAssignment& assignment, const Mat& probs,
                             double lambda_null) {
  double loss = 0.0;
  for (int i = 0; i < static_cast<int>(assignment.targets.size()); ++i) {
    double p = probs(i, assignment.targets[i]);
    double coeff = assignment.targets[i] == assignment.null_id ? lambda_null : 1.0;
    loss -= coeff * std::log(p < kProbClamp ? kProbClamp : p);
  }
  return loss;
}

struct LossBreakdown {
  double lb = 0.0;
  double lot = 0.0;
  double total = 0.0;
  FullAssignment assignment;
  Mat gamma;          // transport plan used (empty when OT skipped)
  bool ot_skipped = false;
  Var total_var, lb_var, lot_var;
};

namespace detail {

// Fused tape node for <C, Gamma> with the cosine cost recomputed inside and
// Gamma held constant. Gradients flow into the per-step mixed embeddings and
// the gold rows of the label table.
inline Var semantic_ot_node(Tape& tape, const std::vector<Var>& mixed,
                            Var label_table, const std::vector<int>& gold,
                            const Mat& gamma, double distance) {
  Mat value(1, 1);
  value(0, 0) = distance;
  return tape.custom(std::move(value), [mixed, label_table, gold, gamma](
                                           Tape& t, int out) {
    double g_out = t.out_grad(out);
    if (g_out == 0.0) return;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      Vec g = t.val(label_table).row(gold[j]).transpose();
      double ng = g.norm();
      double B = ng + kCosineEps;
      for (std::size_t i = 0; i < mixed.size(); ++i) {
        double w = gamma(static_cast<int>(i), static_cast<int>(j)) * g_out;
        if (w == 0.0) continue;
        const Vec a = t.val(mixed[i]).col(0);
        double na = a.norm();
        double A = na + kCosineEps;
        double dot = a.dot(g);
        Vec da = -g / (A * B);
        if (na > 0.0) da += (dot / (A * A * B)) * (a / na);
        Vec dg = -a / (A * B);
        if (ng > 0.0) dg += (dot / (A * B * B)) * (g / ng);
        t.grad(mixed[i]).col(0) += w * da;
        t.grad(label_table).row(gold[j]) += w * dg.transpose();
      }
    }
  });
}

}  // namespace detail

// Runs assignment + bipartite loss + semantic OT over a recorded forward pass
// and returns both the numbers and the tape node for backward. The assignment
// indices and the transport plan are constants of the backward pass.
inline LossBreakdown total_loss(const Model& model, ForwardPass& fp,
                                const std::vector<int>& gold,
                                const LossConfig& cfg) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  const int N = mc.max_gen_len;
  PredictionSequence seq = fp.predictions();

  LossBreakdown out;
  out.assignment = cfg.scheme == Scheme::FirstN
                       ? assign_first_n(gold, seq.probs, mc.null_id())
                       : assign_all(gold, seq.probs, mc.null_id());

  std::vector<int> targets = out.assignment.targets;
  std::vector<double> coeffs(N, 1.0);
  for (int i = 0; i < N; ++i)
    if (targets[i] == mc.null_id()) coeffs[i] = cfg.lambda_null;
  out.lb_var = fp.tape.matched_nll(fp.p, targets, coeffs, kProbClamp);
  out.lb = fp.tape.scalar(out.lb_var);

  // OT runs against the gold labels directly, independent of the assignment
  std::vector<int> ot_gold = gold;
  if (static_cast<int>(ot_gold.size()) > N) ot_gold.resize(N);

  if (ot_gold.empty()) {
    out.ot_skipped = true;
    out.lot_var = fp.tape.leaf(Mat::Zero(1, 1));
  } else {
    // The ground cost lives in the fixed anchor space, not the trainable
    // label table: with a trainable cost space the regularizer's cheapest
    // descent direction is collapsing the embeddings, which destroys the
    // semantics it is supposed to enforce. The anchor leaf is not registered
    // as a parameter, so gradients flow only into the distributions p_t.
    Var anchor = fp.tape.leaf(model.label_anchor());
    std::vector<Var> mixed;
    for (Var p : fp.p)
      mixed.push_back(fp.tape.rows_weighted_sum(anchor, p, mc.num_labels + 1));
    Mat mixed_vals(mc.label_embed_dim, N);
    for (int i = 0; i < N; ++i) mixed_vals.col(i) = fp.tape.val(mixed[i]).col(0);
    Mat cost(N, static_cast<int>(ot_gold.size()));
    for (std::size_t j = 0; j < ot_gold.size(); ++j) {
      Vec g = model.label_anchor().row(ot_gold[j]).transpose();
      if (g.isZero(0.0))
        throw std::invalid_argument("cosine cost: gold label " +
                                    std::to_string(ot_gold[j]) +
                                    " has an all-zero embedding");
      for (int i = 0; i < N; ++i)
        cost(i, static_cast<int>(j)) = cosine_distance(mixed_vals.col(i), g);
    }
    Vec mu = Vec::Constant(N, 1.0 / N);
    Vec nu = Vec::Constant(static_cast<int>(ot_gold.size()),
                           1.0 / static_cast<double>(ot_gold.size()));
    TransportPlan plan = ipot(cost, mu, nu, cfg.ipot);
    out.gamma = plan.gamma;
    out.lot_var = detail::semantic_ot_node(fp.tape, mixed, anchor, ot_gold,
                                           plan.gamma, plan.distance);
  }
  out.lot = fp.tape.scalar(out.lot_var);
  out.total_var = fp.tape.axpy(out.lb_var, out.lot_var, cfg.lambda);
  out.total = fp.tape.scalar(out.total_var);
  return out;
}

// Gradients of every parameter array with respect to the recorded loss.
inline ParamMap backward(ForwardPass& fp, Var loss) {
  fp.tape.backward(loss);
  ParamMap grads;
  for (const auto& [name, leaf] : fp.leaves) {
    Mat g = fp.tape.grad(leaf);
    if (!g.allFinite())
      throw std::runtime_error("NaN gradient in parameter " + name);
    grads[name] = std::move(g);
  }
  return grads;
}

}  // namespace otss
