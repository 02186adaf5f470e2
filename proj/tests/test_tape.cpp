#include <catch2/catch_amalgamated.hpp>

#include "otss/rng.hpp"
#include "otss/tape.hpp"

using namespace otss;

namespace {

Mat random_mat(int r, int c, Rng& rng, double a = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-a, a);
  return m;
}

// finite-difference check of d(scalar out)/d(each input entry)
void fd_check(const std::vector<Mat>& inputs,
              const std::function<Var(Tape&, const std::vector<Var>&)>& fn,
              double tol = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  Var out = fn(tape, leaves);
  REQUIRE(tape.val(out).size() == 1);
  tape.backward(out);

  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int i = 0; i < inputs[k].rows(); ++i) {
      for (int j = 0; j < inputs[k].cols(); ++j) {
        auto eval = [&](double delta) {
          std::vector<Mat> shifted = inputs;
          shifted[k](i, j) += delta;
          Tape t2;
          std::vector<Var> l2;
          for (const auto& m : shifted) l2.push_back(t2.leaf(m));
          return t2.scalar(fn(t2, l2));
        };
        double fd = (eval(h) - eval(-h)) / (2 * h);
        double an = tape.grad(leaves[k])(i, j);
        CHECK_THAT(an, Catch::Matchers::WithinAbs(fd, tol) ||
                           Catch::Matchers::WithinRel(fd, tol));
      }
    }
  }
}

Var sum_all(Tape& t, Var m) {
  // weighted sum so gradients are not uniform
  const int rows = static_cast<int>(t.val(m).rows());
  const int cols = static_cast<int>(t.val(m).cols());
  Mat w(rows, cols);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) w(i, j) = 0.3 + 0.1 * (i + 2 * j);
  Var wv = t.leaf(w);
  Var prod = t.cwise_mul(m, wv);
  // reduce via matmul with ones
  Var ones_r = t.leaf(Mat::Ones(1, rows));
  Var ones_c = t.leaf(Mat::Ones(cols, 1));
  return t.matmul(t.matmul(ones_r, prod), ones_c);
}

}  // namespace

TEST_CASE("tape: matmul/add/tanh/sigmoid gradients match finite differences") {
  Rng rng(1);
  Mat A = random_mat(3, 4, rng), B = random_mat(4, 2, rng), C = random_mat(3, 2, rng);
  fd_check({A, B, C}, [](Tape& t, const std::vector<Var>& v) {
    Var y = t.add(t.matmul(v[0], v[1]), v[2]);
    return sum_all(t, t.tanh_(t.sigmoid_(y)));
  });
}

TEST_CASE("tape: matmul_nt and matmul_tn gradients") {
  Rng rng(2);
  Mat A = random_mat(3, 4, rng), B = random_mat(5, 4, rng), x = random_mat(3, 1, rng);
  fd_check({A, B, x}, [](Tape& t, const std::vector<Var>& v) {
    Var y = t.matmul_nt(v[0], v[1]);       // 3x5
    Var z = t.matmul_tn(y, v[2]);          // 5x1
    return sum_all(t, z);
  });
}

TEST_CASE("tape: softmax output is a distribution and its gradient checks") {
  Rng rng(3);
  Mat x = random_mat(6, 1, rng, 2.0);
  Tape t;
  Var v = t.leaf(x);
  Var s = t.softmax(v);
  CHECK(t.val(s).sum() == Catch::Approx(1.0).margin(1e-12));
  CHECK(t.val(s).minCoeff() >= 0.0);
  fd_check({x}, [](Tape& t2, const std::vector<Var>& v2) {
    return sum_all(t2, t2.softmax(v2[0]));
  });
}

TEST_CASE("tape: broadcast add, vcat, stack_rows, pick_row gradients") {
  Rng rng(4);
  Mat M = random_mat(4, 3, rng), v = random_mat(3, 1, rng), a = random_mat(2, 1, rng);
  fd_check({M, v, a}, [](Tape& t, const std::vector<Var>& vars) {
    Var y = t.add_broadcast_row(vars[0], vars[1]);  // 4x3
    Var r = t.pick_row(y, 2);                       // 3x1
    Var cat = t.vcat({r, vars[2]});                 // 5x1
    Var st = t.stack_rows({cat, cat});              // 2x5
    return sum_all(t, st);
  });
}

TEST_CASE("tape: gru_cell gradient matches finite differences") {
  Rng rng(5);
  int in = 4, h = 3;
  std::vector<Mat> inputs = {random_mat(in, 1, rng), random_mat(h, 1, rng)};
  for (int k = 0; k < 6; ++k)
    inputs.push_back(k % 2 == 0 ? random_mat(h, in, rng) : random_mat(h, h, rng));
  fd_check(inputs, [](Tape& t, const std::vector<Var>& v) {
    Tape::GruWeights w{v[2], v[3], v[4], v[5], v[6], v[7]};
    return sum_all(t, t.gru_cell(v[0], v[1], w));
  });
}

TEST_CASE("tape: depthwise_conv gradient, stride and boundary renorm") {
  Rng rng(6);
  Mat X = random_mat(7, 2, rng), w = random_mat(4, 1, rng);
  fd_check({X, w}, [](Tape& t, const std::vector<Var>& v) {
    Var taps = t.softmax(v[1]);
    return sum_all(t, t.depthwise_conv(v[0], taps, 2, 2));
  });
}

TEST_CASE("tape: depthwise_conv preserves constant rows (convex combination)") {
  Rng rng(7);
  Mat X(9, 3);
  for (int i = 0; i < 9; ++i) X.row(i) << 1.5, -2.0, 0.25;
  Tape t;
  Var taps = t.softmax(t.leaf(random_mat(5, 1, rng, 2.0)));
  Var y = t.depthwise_conv(t.leaf(X), taps, 3, 2);
  REQUIRE(t.val(y).rows() == 3);  // ceil(9/3)
  for (int i = 0; i < 3; ++i) {
    CHECK(t.val(y)(i, 0) == Catch::Approx(1.5));
    CHECK(t.val(y)(i, 1) == Catch::Approx(-2.0));
    CHECK(t.val(y)(i, 2) == Catch::Approx(0.25));
  }
}

TEST_CASE("tape: depthwise_conv output bounded by input channel range") {
  Rng rng(8);
  Mat X = random_mat(11, 2, rng, 3.0);
  Tape t;
  Var taps = t.softmax(t.leaf(random_mat(4, 1, rng)));
  Var y = t.depthwise_conv(t.leaf(X), taps, 1, 2);
  REQUIRE(t.val(y).rows() == 11);
  for (int ch = 0; ch < 2; ++ch) {
    CHECK(t.val(y).col(ch).maxCoeff() <= X.col(ch).maxCoeff() + 1e-12);
    CHECK(t.val(y).col(ch).minCoeff() >= X.col(ch).minCoeff() - 1e-12);
  }
}

TEST_CASE("tape: matched_nll value and gradient") {
  Rng rng(9);
  Mat logits1 = random_mat(5, 1, rng), logits2 = random_mat(5, 1, rng);
  fd_check({logits1, logits2}, [](Tape& t, const std::vector<Var>& v) {
    Var p1 = t.softmax(v[0]);
    Var p2 = t.softmax(v[1]);
    return t.matched_nll({p1, p2}, {3, 1}, {1.0, 0.2});
  });
}

TEST_CASE("tape: rows_weighted_sum gradient") {
  Rng rng(10);
  Mat E = random_mat(6, 3, rng), logits = random_mat(4, 1, rng);
  fd_check({E, logits}, [](Tape& t, const std::vector<Var>& v) {
    Var p = t.softmax(v[1]);
    return sum_all(t, t.rows_weighted_sum(v[0], p, 4));
  });
}
