#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace otss {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over Eigen matrices. Vectors are column matrices; scalars
// are 1x1. Hot paths of the model (GRU cell, depth-wise convolution, the loss
// heads) are fused nodes with hand-written backward rules to keep the node
// count per sample small.
class Tape {
 public:
  // References returned by val()/grad() are invalidated by the next node push.
  Mat& val(Var v) { return nodes_[v.i].val; }
  const Mat& val(Var v) const { return nodes_[v.i].val; }
  Mat& grad(Var v) { return nodes_[v.i].grad; }
  double scalar(Var v) const { return nodes_[v.i].val(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  Var leaf(Mat m) { return push(std::move(m), nullptr); }

  Var matmul(Var a, Var b) {
    return push(val(a) * val(b), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes_[out].grad;
      t.grad(a).noalias() += g * t.val(b).transpose();
      t.grad(b).noalias() += t.val(a).transpose() * g;
    });
  }

  // A^T * B without materializing the transpose node
  Var matmul_tn(Var a, Var b) {
    return push(val(a).transpose() * val(b), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes_[out].grad;
      t.grad(a).noalias() += t.val(b) * g.transpose();
      t.grad(b).noalias() += t.val(a) * g;
    });
  }

  // A * B^T
  Var matmul_nt(Var a, Var b) {
    return push(val(a) * val(b).transpose(), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes_[out].grad;
      t.grad(a).noalias() += g * t.val(b);
      t.grad(b).noalias() += g.transpose() * t.val(a);
    });
  }

  Var add(Var a, Var b) {
    return push(val(a) + val(b), [a, b](Tape& t, int out) {
      t.grad(a) += t.nodes_[out].grad;
      t.grad(b) += t.nodes_[out].grad;
    });
  }

  // M + 1 v^T, v a column vector of length cols(M)
  Var add_broadcast_row(Var m, Var v) {
    Mat out = val(m);
    out.rowwise() += val(v).col(0).transpose();
    return push(std::move(out), [m, v](Tape& t, int out_i) {
      const Mat& g = t.nodes_[out_i].grad;
      t.grad(m) += g;
      t.grad(v).col(0) += g.colwise().sum().transpose();
    });
  }

  Var scale(Var a, double c) {
    return push(val(a) * c, [a, c](Tape& t, int out) {
      t.grad(a) += c * t.nodes_[out].grad;
    });
  }

  Var cwise_mul(Var a, Var b) {
    return push(val(a).cwiseProduct(val(b)), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes_[out].grad;
      t.grad(a) += g.cwiseProduct(t.val(b));
      t.grad(b) += g.cwiseProduct(t.val(a));
    });
  }

  Var tanh_(Var a) {
    return push(val(a).array().tanh().matrix(), [a](Tape& t, int out) {
      const Mat& y = t.nodes_[out].val;
      t.grad(a).array() +=
          t.nodes_[out].grad.array() * (1.0 - y.array().square());
    });
  }

  Var sigmoid_(Var a) {
    Mat y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    return push(std::move(y), [a](Tape& t, int out) {
      const Mat& y = t.nodes_[out].val;
      t.grad(a).array() +=
          t.nodes_[out].grad.array() * y.array() * (1.0 - y.array());
    });
  }

  // softmax over a column vector
  Var softmax(Var a) {
    const Mat& x = val(a);
    Mat y = (x.array() - x.maxCoeff()).exp().matrix();
    y /= y.sum();
    return push(std::move(y), [a](Tape& t, int out) {
      const Mat& y = t.nodes_[out].val;
      const Mat& g = t.nodes_[out].grad;
      double dot = (y.array() * g.array()).sum();
      t.grad(a).array() += y.array() * (g.array() - dot);
    });
  }

  // vertical concatenation of column vectors
  Var vcat(const std::vector<Var>& parts) {
    int rows = 0;
    for (Var p : parts) rows += static_cast<int>(val(p).rows());
    Mat out(rows, 1);
    int at = 0;
    for (Var p : parts) {
      int r = static_cast<int>(val(p).rows());
      out.block(at, 0, r, 1) = val(p);
      at += r;
    }
    return push(std::move(out), [parts](Tape& t, int out_i) {
      const Mat& g = t.nodes_[out_i].grad;
      int at = 0;
      for (Var p : parts) {
        int r = static_cast<int>(t.val(p).rows());
        t.grad(p) += g.block(at, 0, r, 1);
        at += r;
      }
    });
  }

  // column vectors h_i (n x 1) -> matrix with row i = h_i^T
  Var stack_rows(const std::vector<Var>& rows) {
    int n = static_cast<int>(val(rows[0]).rows());
    Mat out(static_cast<int>(rows.size()), n);
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.row(static_cast<int>(i)) = val(rows[i]).col(0).transpose();
    return push(std::move(out), [rows](Tape& t, int out_i) {
      const Mat& g = t.nodes_[out_i].grad;
      for (std::size_t i = 0; i < rows.size(); ++i)
        t.grad(rows[i]).col(0) += g.row(static_cast<int>(i)).transpose();
    });
  }

  // row i of M as a column vector
  Var pick_row(Var m, int i) {
    return push(val(m).row(i).transpose(), [m, i](Tape& t, int out) {
      t.grad(m).row(i) += t.nodes_[out].grad.col(0).transpose();
    });
  }

  // E.topRows(nrows)^T * p  (probability-weighted mix of embedding rows)
  Var rows_weighted_sum(Var e, Var p, int nrows) {
    Mat out = val(e).topRows(nrows).transpose() * val(p);
    return push(std::move(out), [e, p, nrows](Tape& t, int out_i) {
      const Mat& g = t.nodes_[out_i].grad;
      t.grad(e).topRows(nrows).noalias() += t.val(p) * g.transpose();
      t.grad(p).noalias() += t.val(e).topRows(nrows) * g;
    });
  }

  // GRU cell without biases:
  //   z = sigmoid(Wz x + Uz h), r = sigmoid(Wr x + Ur h)
  //   hb = tanh(Wh x + Uh (r.h)), h' = (1-z).h + z.hb
  struct GruWeights {
    Var Wz, Uz, Wr, Ur, Wh, Uh;
  };
  Var gru_cell(Var x, Var h, const GruWeights& w) {
    const Mat& xv = val(x);
    const Mat& hv = val(h);
    Vec z = (1.0 / (1.0 + (-(val(w.Wz) * xv + val(w.Uz) * hv).array()).exp()));
    Vec r = (1.0 / (1.0 + (-(val(w.Wr) * xv + val(w.Ur) * hv).array()).exp()));
    Vec rh = r.array() * hv.col(0).array();
    Vec hb = (val(w.Wh) * xv + val(w.Uh) * rh).array().tanh();
    Mat out = ((1.0 - z.array()) * hv.col(0).array() + z.array() * hb.array());
    auto zc = std::make_shared<Vec>(std::move(z));
    auto rc = std::make_shared<Vec>(std::move(r));
    auto rhc = std::make_shared<Vec>(std::move(rh));
    auto hbc = std::make_shared<Vec>(std::move(hb));
    return push(std::move(out), [x, h, w, zc, rc, rhc, hbc](Tape& t, int out_i) {
      const Vec g = t.nodes_[out_i].grad.col(0);
      const Vec& z = *zc;
      const Vec& r = *rc;
      const Vec& rh = *rhc;
      const Vec& hb = *hbc;
      const Vec hv = t.val(h).col(0);
      const Mat& xv = t.val(x);
      Vec dz = (hb - hv).array() * g.array() * z.array() * (1.0 - z.array());
      Vec dhb = z.array() * g.array() * (1.0 - hb.array().square());
      Vec dh = (1.0 - z.array()) * g.array();
      t.grad(w.Wh).noalias() += dhb * xv.transpose();
      t.grad(w.Uh).noalias() += dhb * rh.transpose();
      Vec drh = t.val(w.Uh).transpose() * dhb;
      Vec dr = drh.array() * hv.array() * r.array() * (1.0 - r.array());
      dh.array() += drh.array() * r.array();
      t.grad(w.Wz).noalias() += dz * xv.transpose();
      t.grad(w.Uz).noalias() += dz * hv.transpose();
      dh.noalias() += t.val(w.Uz).transpose() * dz;
      t.grad(w.Wr).noalias() += dr * xv.transpose();
      t.grad(w.Ur).noalias() += dr * hv.transpose();
      dh.noalias() += t.val(w.Ur).transpose() * dr;
      t.grad(h).col(0) += dh;
      t.grad(x).noalias() += t.val(w.Wz).transpose() * dz +
                             t.val(w.Wr).transpose() * dr +
                             t.val(w.Wh).transpose() * dhb;
    });
  }

  // Depth-wise convolution with a single tap vector u shared across channels.
  // X is (l x C); output row j covers input rows j*stride - pad + [0, ks).
  // Taps falling outside the input are dropped and the window renormalized,
  // so each output stays a convex combination of input rows.
  Var depthwise_conv(Var x, Var u, int stride, int pad) {
    const Mat& X = val(x);
    const Vec& taps = val(u).col(0);
    const int l = static_cast<int>(X.rows());
    const int ks = static_cast<int>(taps.size());
    const int k = (l + stride - 1) / stride;
    Mat out = Mat::Zero(k, X.cols());
    auto sums = std::make_shared<Vec>(Vec::Zero(k));
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int tpos = 0; tpos < ks; ++tpos) {
        int i = j * stride - pad + tpos;
        if (i < 0 || i >= l) continue;
        out.row(j) += taps(tpos) * X.row(i);
        s += taps(tpos);
      }
      (*sums)(j) = s;
      out.row(j) /= s;
    }
    return push(std::move(out), [x, u, stride, pad, sums](Tape& t, int out_i) {
      const Mat& g = t.nodes_[out_i].grad;
      const Mat& X = t.val(x);
      const Mat& Y = t.nodes_[out_i].val;
      const Vec& taps = t.val(u).col(0);
      const int l = static_cast<int>(X.rows());
      const int ks = static_cast<int>(taps.size());
      for (int j = 0; j < static_cast<int>(Y.rows()); ++j) {
        double s = (*sums)(j);
        for (int tpos = 0; tpos < ks; ++tpos) {
          int i = j * stride - pad + tpos;
          if (i < 0 || i >= l) continue;
          t.grad(x).row(i) += (taps(tpos) / s) * g.row(j);
          t.grad(u)(tpos, 0) += ((X.row(i) - Y.row(j)) / s).dot(g.row(j));
        }
      }
    });
  }

  // -sum_i coeff_i log(max(p_i[target_i], clamp)) over per-step distributions
  Var matched_nll(const std::vector<Var>& dists, const std::vector<int>& targets,
                  const std::vector<double>& coeffs, double clamp = 1e-12) {
    double loss = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
      double p = val(dists[i])(targets[i], 0);
      loss -= coeffs[i] * std::log(p < clamp ? clamp : p);
    }
    Mat out(1, 1);
    out(0, 0) = loss;
    return push(std::move(out), [dists, targets, coeffs, clamp](Tape& t, int out_i) {
      double g = t.nodes_[out_i].grad(0, 0);
      for (std::size_t i = 0; i < dists.size(); ++i) {
        double p = t.val(dists[i])(targets[i], 0);
        if (p >= clamp) t.grad(dists[i])(targets[i], 0) -= g * coeffs[i] / p;
      }
    });
  }

  // a + c*b on scalars
  Var axpy(Var a, Var b, double c) {
    Mat out(1, 1);
    out(0, 0) = scalar(a) + c * scalar(b);
    return push(std::move(out), [a, b, c](Tape& t, int out_i) {
      double g = t.nodes_[out_i].grad(0, 0);
      t.grad(a)(0, 0) += g;
      t.grad(b)(0, 0) += g * c;
    });
  }

  // escape hatch for fused nodes defined outside the tape (loss heads)
  Var custom(Mat value, std::function<void(Tape&, int)> back) {
    return push(std::move(value), std::move(back));
  }
  double out_grad(int node) const { return nodes_[node].grad(0, 0); }

  void backward(Var out) {
    grad(out).setConstant(1.0);
    for (int i = out.i; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

  void check_finite(Var v, const std::string& name) const {
    if (!val(v).allFinite())
      throw std::runtime_error("non-finite values in " + name);
  }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&, int)> back;
  };

  Var push(Mat v, std::function<void(Tape&, int)> back) {
    Node n;
    n.grad = Mat::Zero(v.rows(), v.cols());
    n.val = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace otss
