#include <catch2/catch_amalgamated.hpp>

#include "otss/train.hpp"
#include "otss/verify.hpp"

using namespace otss;

namespace {

std::vector<Sample> toy_corpus(int docs, int vocab, int labels,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int d = 0; d < docs; ++d) {
    Sample s;
    int len = static_cast<int>(rng.range(4, 8));
    for (int i = 0; i < len; ++i)
      s.tokens.push_back(static_cast<int>(rng.index(vocab)));
    int n = static_cast<int>(rng.range(1, 3));
    while (static_cast<int>(s.labels.size()) < n) {
      int l = static_cast<int>(rng.index(labels));
      if (std::find(s.labels.begin(), s.labels.end(), l) == s.labels.end())
        s.labels.push_back(l);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Model toy_model(std::uint64_t seed) {
  ModelConfig cfg = verify::tiny_config(15, 9);
  return Model(cfg, seed);
}

}  // namespace

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  ParamMap params{{"w", Mat::Random(3, 3)}};
  ParamMap grads{{"w", Mat::Zero(3, 3)}};
  ParamMap before = params;
  AdamState st;
  adam_step(params, grads, st, 0.1);
  CHECK(params.at("w") == before.at("w"));
  CHECK(st.step == 1);
}

TEST_CASE("adam first step moves each entry by about lr in the sign direction") {
  ParamMap params{{"w", Mat::Zero(2, 2)}};
  Mat g(2, 2);
  g << 1.0, -2.0, 0.5, -0.25;
  AdamState st;
  adam_step(params, {{"w", g}}, st, 0.01);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double expect = -0.01 * (g(i, j) > 0 ? 1.0 : -1.0);
      CHECK(params.at("w")(i, j) == Catch::Approx(expect).margin(1e-5));
    }
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamMap params{{"w", Mat::Zero(1, 1)}};
  Mat g(1, 1);
  g(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  ParamMap before = params;
  CHECK_THROWS_WITH(adam_step(params, {{"w", g}}, st, 0.1),
                    Catch::Matchers::ContainsSubstring("w"));
  CHECK(params.at("w") == before.at("w"));  // rejected before any update
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 0.5) == Catch::Approx(0.5));
  CHECK(cosine_lr(50, 100, 0.5) == Catch::Approx(0.25));
  CHECK(cosine_lr(100, 100, 0.5) == Catch::Approx(0.0).margin(1e-12));
  CHECK_THROWS_AS(cosine_lr(0, 0, 0.5), std::invalid_argument);
  // monotone non-increasing along the run
  double prev = cosine_lr(0, 40, 1.0);
  for (int s = 1; s <= 40; ++s) {
    double cur = cosine_lr(s, 40, 1.0);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  ParamMap grads{{"a", Mat::Constant(2, 2, 3.0)}, {"b", Mat::Constant(1, 2, 4.0)}};
  // global norm = sqrt(4*9 + 2*16) = sqrt(68)
  double pre = clip_grads(grads, 1.0);
  CHECK(pre == Catch::Approx(std::sqrt(68.0)));
  double sq = grads.at("a").squaredNorm() + grads.at("b").squaredNorm();
  CHECK(std::sqrt(sq) == Catch::Approx(1.0));
  // ratios preserved
  CHECK(grads.at("b")(0, 0) / grads.at("a")(0, 0) == Catch::Approx(4.0 / 3.0));
  // under the cap: untouched
  ParamMap small{{"a", Mat::Constant(1, 1, 0.5)}};
  CHECK(clip_grads(small, 1.0) == Catch::Approx(0.5));
  CHECK(small.at("a")(0, 0) == 0.5);
  CHECK_THROWS_AS(clip_grads(small, 0.0), std::invalid_argument);
}

TEST_CASE("split_corpus is a seeded partition") {
  auto samples = toy_corpus(20, 15, 9, 1);
  SplitCorpus a = split_corpus(samples, 0.25, 9);
  CHECK(a.train.size() == 15);
  CHECK(a.val.size() == 5);
  SplitCorpus b = split_corpus(samples, 0.25, 9);
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].tokens == b.train[i].tokens);
  SplitCorpus c = split_corpus(samples, 0.25, 10);
  bool same = true;
  for (std::size_t i = 0; i < a.train.size(); ++i)
    same = same && a.train[i].tokens == c.train[i].tokens;
  CHECK(!same);
  SplitCorpus none = split_corpus(samples, 0.0, 1);
  CHECK(none.train.size() == 20);
  CHECK(none.val.empty());
}

TEST_CASE("train_epoch is deterministic for a fixed seed") {
  auto samples = toy_corpus(8, 15, 9, 2);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  auto run = [&]() {
    Model m = toy_model(3);
    TrainState st;
    st.total_steps = 4;
    EpochStats e1 = train_epoch(m, samples, cfg, st, 0);
    EpochStats e2 = train_epoch(m, samples, cfg, st, 1);
    (void)e1;
    return std::pair{m.params(), e2.mean_loss};
  };
  auto [p1, l1] = run();
  auto [p2, l2] = run();
  CHECK(l1 == l2);
  for (const auto& [name, m] : p1) CHECK(p2.at(name) == m);
}

TEST_CASE("results do not depend on the worker count") {
  auto samples = toy_corpus(6, 15, 9, 3);
  auto run = [&](int workers) {
    Model m = toy_model(4);
    TrainConfig cfg;
    cfg.batch = 6;
    cfg.workers = workers;
    cfg.seed = 7;
    TrainState st;
    st.total_steps = 2;
    EpochStats e = train_epoch(m, samples, cfg, st, 0);
    return std::pair{m.params(), e.mean_loss};
  };
  auto [p1, l1] = run(1);
  auto [p4, l4] = run(4);
  CHECK(l1 == l4);
  for (const auto& [name, m] : p1) CHECK(p4.at(name) == m);
}

TEST_CASE("epoch stats report the annealed learning rate") {
  auto samples = toy_corpus(8, 15, 9, 4);
  Model m = toy_model(5);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.lr = 0.01;
  TrainState st;
  st.total_steps = 8;  // 2 batches per epoch, 4 epochs
  double prev = cfg.lr + 1;
  for (int epoch = 0; epoch < 4; ++epoch) {
    EpochStats e = train_epoch(m, samples, cfg, st, epoch);
    CHECK(e.lr < prev);
    CHECK(e.lr <= cfg.lr);
    prev = e.lr;
  }
  CHECK(st.step == 8);
}

TEST_CASE("a few epochs reduce the mean training loss") {
  auto samples = toy_corpus(12, 15, 9, 6);
  Model m = toy_model(6);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.lr = 3e-3;
  cfg.loss.lambda = 1.0;
  TrainState st;
  st.total_steps = 3 * 10;
  double first = train_epoch(m, samples, cfg, st, 0).mean_loss;
  double last = 0;
  for (int epoch = 1; epoch < 10; ++epoch)
    last = train_epoch(m, samples, cfg, st, epoch).mean_loss;
  CHECK(last < first);
}

TEST_CASE("predict_sets and gold_sets agree on shapes") {
  auto samples = toy_corpus(5, 15, 9, 7);
  Model m = toy_model(7);
  auto pred = predict_sets(m, samples);
  auto gold = gold_sets(samples);
  REQUIRE(pred.size() == samples.size());
  REQUIRE(gold.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(gold[i].size() == samples[i].labels.size());
    for (int l : pred[i]) {
      CHECK(l >= 0);
      CHECK(l < m.config().null_id());
    }
  }
  CHECK_NOTHROW(evaluate(pred, gold));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.val_frac = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
