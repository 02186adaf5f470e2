#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

#include "otss/data.hpp"
#include "otss/loss.hpp"
#include "otss/metrics.hpp"
#include "otss/model.hpp"

namespace otss {

struct TrainConfig {
  int epochs = 20;
  int batch = 32;
  double lr = 1e-3;
  double clip_norm = 8.0;
  double val_frac = 0.1;
  std::uint64_t seed = 1;
  int workers = 1;
  LossConfig loss;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const {
    if (epochs < 1 || batch < 1 || lr <= 0 || clip_norm <= 0 || workers < 1)
      throw std::invalid_argument("train config: counts and rates must be positive");
    if (val_frac < 0.0 || val_frac >= 1.0)
      throw std::invalid_argument("train config: validation fraction in [0,1)");
    loss.validate();
  }
};

struct AdamState {
  struct Moments {
    Mat m, v;
  };
  std::map<std::string, Moments> moments;
  long step = 0;
  double current_lr = 0.0;
};

// Standard bias-corrected Adam update over all parameter arrays.
inline void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  for (const auto& [name, g] : grads)
    if (!g.allFinite())
      throw std::runtime_error("adam: NaN gradient for " + name);
  ++state.step;
  state.current_lr = lr;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const Mat& g = grads.at(name);
    auto& mo = state.moments[name];
    if (mo.m.size() == 0) {
      mo.m = Mat::Zero(p.rows(), p.cols());
      mo.v = Mat::Zero(p.rows(), p.cols());
    }
    mo.m = beta1 * mo.m + (1.0 - beta1) * g;
    mo.v = beta2 * mo.v + (1.0 - beta2) * g.cwiseProduct(g);
    Mat mhat = mo.m / bc1;
    Mat vhat = mo.v / bc2;
    p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

// Cosine annealing without restarts.
inline double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0)
    throw std::invalid_argument("cosine_lr: total_steps must be positive");
  double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_grads(ParamMap& grads, double max_norm) {
  if (max_norm <= 0) throw std::invalid_argument("clip_grads: max_norm > 0 required");
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    (void)name;
    sq += g.squaredNorm();
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      (void)name;
      g *= s;
    }
  }
  return norm;
}

struct SplitCorpus {
  std::vector<Sample> train, val;
};

// Seeded shuffle; the last `val_frac` of it becomes the validation split.
inline SplitCorpus split_corpus(const std::vector<Sample>& samples,
                                double val_frac, std::uint64_t seed) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x5917));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.index(i)]);
  std::size_t n_val = static_cast<std::size_t>(
      val_frac * static_cast<double>(samples.size()));
  SplitCorpus out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i + n_val < order.size())
      out.train.push_back(samples[order[i]]);
    else
      out.val.push_back(samples[order[i]]);
  }
  return out;
}

struct EpochStats {
  double mean_loss = 0, mean_lb = 0, mean_lot = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainState {
  AdamState adam;
  long step = 0;
  long total_steps = 0;
};

namespace detail {

struct SampleResult {
  ParamMap grads;
  double loss = 0, lb = 0, lot = 0;
};

inline SampleResult sample_pass(const Model& model, const Sample& s,
                                const LossConfig& loss_cfg,
                                std::uint64_t noise_seed) {
  ForwardPass fp = model.generate(s.tokens, /*train=*/true, noise_seed);
  LossBreakdown lb = total_loss(model, fp, s.labels, loss_cfg);
  SampleResult r;
  r.grads = backward(fp, lb.total_var);
  r.loss = lb.total;
  r.lb = lb.lb;
  r.lot = lb.lot;
  return r;
}

}  // namespace detail

// One pass over the training split. Per-batch: mean-loss gradients, global
// clipping, one Adam step, cosine schedule advanced per batch. Per-sample
// work may run on a worker pool; gradients are reduced in sample order, so
// results do not depend on the worker count.
inline EpochStats train_epoch(Model& model, const std::vector<Sample>& samples,
                              const TrainConfig& cfg, TrainState& state,
                              int epoch) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(Rng::mix(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.index(i)]);

  EpochStats stats;
  std::size_t done = 0;
  while (done < order.size()) {
    std::size_t bsz = std::min<std::size_t>(cfg.batch, order.size() - done);
    std::vector<detail::SampleResult> results(bsz);
    auto run = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) {
        const Sample& s = samples[order[done + k]];
        std::uint64_t noise = Rng::mix(
            cfg.seed, 0xab5 + static_cast<std::uint64_t>(epoch) * 1000003 +
                          order[done + k]);
        results[k] = detail::sample_pass(model, s, cfg.loss, noise);
      }
    };
    int workers = std::min<int>(cfg.workers, static_cast<int>(bsz));
    if (workers <= 1) {
      run(0, bsz);
    } else {
      std::vector<std::thread> pool;
      std::size_t chunk = (bsz + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(bsz, lo + chunk);
        if (lo < hi) pool.emplace_back(run, lo, hi);
      }
      for (auto& t : pool) t.join();
    }

    ParamMap grads;
    for (const auto& [name, p] : model.params())
      grads[name] = Mat::Zero(p.rows(), p.cols());
    for (const auto& r : results) {
      for (auto& [name, g] : grads) g += r.grads.at(name);
      stats.mean_loss += r.loss;
      stats.mean_lb += r.lb;
      stats.mean_lot += r.lot;
    }
    double inv = 1.0 / static_cast<double>(bsz);
    for (auto& [name, g] : grads) {
      (void)name;
      g *= inv;
    }
    clip_grads(grads, cfg.clip_norm);
    double lr = cosine_lr(state.step, state.total_steps, cfg.lr);
    adam_step(model.params(), grads, state.adam, lr, cfg.beta1, cfg.beta2, cfg.eps);
    ++state.step;
    stats.lr = lr;
    done += bsz;
  }
  double n = static_cast<double>(order.size());
  stats.mean_loss /= n;
  stats.mean_lb /= n;
  stats.mean_lot /= n;
  stats.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0).count();
  return stats;
}

// Predicted label sets for a sample list under the current parameters.
inline std::vector<LabelSet> predict_sets(const Model& model,
                                          const std::vector<Sample>& samples) {
  std::vector<LabelSet> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    ForwardPass fp = model.generate(s.tokens, /*train=*/false);
    auto ids = predict_labels(fp.argmax, model.config().null_id());
    out.emplace_back(ids.begin(), ids.end());
  }
  return out;
}

inline std::vector<LabelSet> gold_sets(const std::vector<Sample>& samples) {
  std::vector<LabelSet> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.emplace_back(s.labels.begin(), s.labels.end());
  return out;
}

}  // namespace otss
