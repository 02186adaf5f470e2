#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "otss/rng.hpp"
#include "otss/tape.hpp"

namespace otss {

struct ModelConfig {
  int input_vocab = 0;      // Vin, including UNK
  int num_labels = 0;       // V, real labels; output dimension is V+1
  int embed_dim = 300;
  int label_embed_dim = 300;
  int hidden = 512;         // split across the two encoder directions
  int enc_layers = 2;
  int dec_layers = 1;
  int bottleneck = 0;       // b, 0 disables the bottleneck output layer
  std::vector<int> kernel_sizes = {3, 7, 15, 30};
  int conv_stride = 3;      // applied in the last convolution layer
  int max_gen_len = 8;      // N
  int max_input_len = 500;
  double dropout = 0.2;

  int attn_dim() const { return hidden; }
  int out_in_dim() const { return hidden + 2 * hidden + label_embed_dim; }  // z
  int bos_id() const { return num_labels + 1; }
  int null_id() const { return num_labels; }

  void validate() const {
    if (input_vocab < 1 || num_labels < 1)
      throw std::invalid_argument("model config: vocab and label sizes required");
    if (hidden < 2 || hidden % 2 != 0)
      throw std::invalid_argument("model config: hidden size must be even");
    if (max_gen_len < 1)
      throw std::invalid_argument("model config: max generation length >= 1");
    if (enc_layers < 1 || dec_layers < 1)
      throw std::invalid_argument("model config: layer counts must be positive");
    if (kernel_sizes.empty() || conv_stride < 1)
      throw std::invalid_argument("model config: invalid convolution settings");
    for (int k : kernel_sizes)
      if (k < 1) throw std::invalid_argument("model config: kernel size < 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("model config: dropout must be in [0,1)");
  }
};

// Named parameter arrays. A plain ordered map keeps checkpoint layout and
// gradient reductions deterministic.
using ParamMap = std::map<std::string, Mat>;

inline const std::vector<std::string> kGruGates = {"Wz", "Uz", "Wr",
                                                   "Ur", "Wh", "Uh"};

inline ParamMap init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::mix(seed, 0x9a9a));
  ParamMap p;
  auto mat = [&](int r, int c) {
    Mat m(r, c);
    double a = 0.1;
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-a, a);
    return m;
  };
  p["embed.in"] = mat(cfg.input_vocab, cfg.embed_dim);
  p["embed.label"] = mat(cfg.num_labels + 2, cfg.label_embed_dim);
  p["embed.label"].row(cfg.null_id()).setZero();
  const int h2 = cfg.hidden / 2;
  for (int l = 0; l < cfg.enc_layers; ++l) {
    int in = l == 0 ? cfg.embed_dim : cfg.hidden;
    for (const char* dir : {"f", "b"}) {
      std::string base = "enc" + std::to_string(l) + "." + dir + ".";
      for (const auto& g : kGruGates)
        p[base + g] = g[0] == 'W' ? mat(h2, in) : mat(h2, h2);
    }
  }
  p["attn.Wa"] = mat(cfg.attn_dim(), cfg.hidden);
  p["attn.Ua"] = mat(cfg.attn_dim(), cfg.hidden);
  p["attn.va"] = mat(cfg.attn_dim(), 1);
  for (std::size_t l = 0; l < cfg.kernel_sizes.size(); ++l)
    p["lc" + std::to_string(l) + ".w"] = mat(cfg.kernel_sizes[l], 1);
  for (int l = 0; l < cfg.dec_layers; ++l) {
    int in = l == 0 ? cfg.label_embed_dim + 2 * cfg.hidden : cfg.hidden;
    std::string base = "dec" + std::to_string(l) + ".";
    for (const auto& g : kGruGates)
      p[base + g] = g[0] == 'W' ? mat(cfg.hidden, in) : mat(cfg.hidden, cfg.hidden);
  }
  if (cfg.bottleneck > 0) {
    p["out.Win"] = mat(cfg.bottleneck, cfg.out_in_dim());
    p["out.Wout"] = mat(cfg.num_labels + 1, cfg.bottleneck);
  } else {
    p["out.Wp"] = mat(cfg.num_labels + 1, cfg.out_in_dim());
  }
  return p;
}

// N per-step distributions over V+1 labels plus their argmax ids.
struct PredictionSequence {
  Mat probs;                // N x (V+1)
  std::vector<int> argmax;  // ties resolved toward the lowest id
};

// One recorded forward pass: the tape plus handles into it.
struct ForwardPass {
  Tape tape;
  std::map<std::string, Var> leaves;
  Var H, Hhat;
  Var label_table;          // leaf for embed.label
  std::vector<Var> p;       // per-step distributions, each (V+1) x 1
  std::vector<int> argmax;

  PredictionSequence predictions() const {
    PredictionSequence seq;
    const int n = static_cast<int>(p.size());
    seq.probs.resize(n, tape.val(p[0]).rows());
    for (int t = 0; t < n; ++t)
      seq.probs.row(t) = tape.val(p[t]).col(0).transpose();
    seq.argmax = argmax;
    return seq;
  }
};

class Model {
 public:
  Model(ModelConfig cfg, ParamMap params)
      : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    label_anchor_ = params_.at("embed.label");
  }
  Model(ModelConfig cfg, std::uint64_t seed)
      : Model(cfg, init_parameters(cfg, seed)) {}

  const ModelConfig& config() const { return cfg_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }

  // Fixed semantic anchor table for the OT ground cost: same layout as
  // embed.label but never updated by the optimizer, so the cost space cannot
  // collapse during training. Defaults to the initial label embeddings.
  const Mat& label_anchor() const { return label_anchor_; }
  void set_label_anchor(Mat a) {
    if (a.rows() != cfg_.num_labels + 2 || a.cols() != cfg_.label_embed_dim)
      throw std::invalid_argument("label anchor: wrong shape");
    label_anchor_ = std::move(a);
  }

  std::map<std::string, Var> make_leaves(Tape& tape) const {
    std::map<std::string, Var> leaves;
    for (const auto& [name, m] : params_) leaves[name] = tape.leaf(m);
    return leaves;
  }

  // Bidirectional stacked GRU over the token sequence; returns l x hidden.
  Var encode(Tape& tape, const std::map<std::string, Var>& leaves,
             const std::vector<int>& tokens, bool train, Rng& rng) const {
    if (tokens.empty()) throw std::invalid_argument("encode: empty token sequence");
    std::vector<int> toks = tokens;
    if (static_cast<int>(toks.size()) > cfg_.max_input_len)
      toks.resize(cfg_.max_input_len);
    const int l = static_cast<int>(toks.size());
    const int h2 = cfg_.hidden / 2;
    std::vector<Var> inputs(l);
    Var embed = leaves.at("embed.in");
    for (int i = 0; i < l; ++i) inputs[i] = tape.pick_row(embed, toks[i]);
    if (train && cfg_.dropout > 0.0)
      for (int i = 0; i < l; ++i) inputs[i] = apply_dropout(tape, inputs[i], rng);

    Var H{};
    for (int layer = 0; layer < cfg_.enc_layers; ++layer) {
      std::vector<Var> fwd(l), bwd(l);
      Tape::GruWeights wf = gru_weights(leaves, "enc" + std::to_string(layer) + ".f.");
      Tape::GruWeights wb = gru_weights(leaves, "enc" + std::to_string(layer) + ".b.");
      Var hf = tape.leaf(Mat::Zero(h2, 1));
      for (int i = 0; i < l; ++i) fwd[i] = hf = tape.gru_cell(inputs[i], hf, wf);
      Var hb = tape.leaf(Mat::Zero(h2, 1));
      for (int i = l - 1; i >= 0; --i) bwd[i] = hb = tape.gru_cell(inputs[i], hb, wb);
      std::vector<Var> rows(l);
      for (int i = 0; i < l; ++i) rows[i] = tape.vcat({fwd[i], bwd[i]});
      if (layer + 1 < cfg_.enc_layers) {
        inputs = rows;
        if (train && cfg_.dropout > 0.0)
          for (int i = 0; i < l; ++i)
            inputs[i] = apply_dropout(tape, inputs[i], rng);
      } else {
        H = tape.stack_rows(rows);
      }
    }
    tape.check_finite(H, "encoder states H");
    return H;
  }

  // Softmax-normalized depth-wise convolution stack; the last layer applies
  // the configured stride, so k = ceil(l / stride).
  Var light_conv(Tape& tape, const std::map<std::string, Var>& leaves, Var H) const {
    if (tape.val(H).rows() < 1)
      throw std::invalid_argument("light_conv: empty input");
    Var x = H;
    for (std::size_t layer = 0; layer < cfg_.kernel_sizes.size(); ++layer) {
      Var taps = tape.softmax(leaves.at("lc" + std::to_string(layer) + ".w"));
      int ks = cfg_.kernel_sizes[layer];
      int stride = layer + 1 == cfg_.kernel_sizes.size() ? cfg_.conv_stride : 1;
      x = tape.depthwise_conv(x, taps, stride, ks / 2);
    }
    tape.check_finite(x, "lightconv states");
    return x;
  }

  // Additive attention over the rows of M; returns the context vector.
  Var attend(Tape& tape, const std::map<std::string, Var>& leaves, Var s,
             Var M) const {
    Var ws = tape.matmul(leaves.at("attn.Wa"), s);            // a x 1
    Var um = tape.matmul_nt(M, leaves.at("attn.Ua"));         // rows x a
    Var act = tape.tanh_(tape.add_broadcast_row(um, ws));
    Var scores = tape.matmul(act, leaves.at("attn.va"));      // rows x 1
    Var alpha = tape.softmax(scores);
    return tape.matmul_tn(M, alpha);                          // width x 1
  }

  struct DecoderState {
    std::vector<Var> s;  // one per decoder layer
  };

  DecoderState initial_state(Tape& tape) const {
    DecoderState st;
    for (int l = 0; l < cfg_.dec_layers; ++l)
      st.s.push_back(tape.leaf(Mat::Zero(cfg_.hidden, 1)));
    return st;
  }

  // One generation step: previous argmax id in, (new state, p_t) out.
  std::pair<DecoderState, Var> decode_step(Tape& tape,
                                           const std::map<std::string, Var>& leaves,
                                           const DecoderState& prev, int prev_label,
                                           Var H, Var Hhat) const {
    Var e_prev = tape.pick_row(leaves.at("embed.label"), prev_label);
    Var s_top = prev.s.back();
    Var c = attend(tape, leaves, s_top, H);
    Var chat = attend(tape, leaves, s_top, Hhat);
    DecoderState next;
    Var x = tape.vcat({e_prev, c, chat});
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      Tape::GruWeights w = gru_weights(leaves, "dec" + std::to_string(l) + ".");
      Var s = tape.gru_cell(x, prev.s[l], w);
      next.s.push_back(s);
      x = s;
    }
    tape.check_finite(next.s.back(), "decoder state s_t");
    Var z = tape.vcat({next.s.back(), c, chat, e_prev});
    Var p;
    if (cfg_.bottleneck > 0) {
      Var hid = tape.tanh_(tape.matmul(leaves.at("out.Win"), z));
      p = tape.softmax(tape.matmul(leaves.at("out.Wout"), hid));
    } else {
      p = tape.softmax(tape.matmul(leaves.at("out.Wp"), z));
    }
    tape.check_finite(p, "output distribution p_t");
    return {next, p};
  }

  // Student forcing in both training and inference: each step consumes the
  // model's own previous argmax.
  ForwardPass generate(const std::vector<int>& tokens, bool train,
                       std::uint64_t noise_seed = 0) const {
    ForwardPass fp;
    Rng rng(Rng::mix(noise_seed, 0xd20));
    fp.leaves = make_leaves(fp.tape);
    fp.label_table = fp.leaves.at("embed.label");
    fp.H = encode(fp.tape, fp.leaves, tokens, train, rng);
    fp.Hhat = light_conv(fp.tape, fp.leaves, fp.H);
    DecoderState st = initial_state(fp.tape);
    int prev = cfg_.bos_id();
    for (int t = 0; t < cfg_.max_gen_len; ++t) {
      auto [next, p] = decode_step(fp.tape, fp.leaves, st, prev, fp.H, fp.Hhat);
      st = next;
      fp.p.push_back(p);
      prev = argmax_lowest(fp.tape.val(p));
      fp.argmax.push_back(prev);
    }
    return fp;
  }

  static int argmax_lowest(const Mat& dist) {
    int best = 0;
    for (int i = 1; i < dist.rows(); ++i)
      if (dist(i, 0) > dist(best, 0)) best = i;
    return best;
  }

 private:
  Tape::GruWeights gru_weights(const std::map<std::string, Var>& leaves,
                               const std::string& base) const {
    return Tape::GruWeights{leaves.at(base + "Wz"), leaves.at(base + "Uz"),
                            leaves.at(base + "Wr"), leaves.at(base + "Ur"),
                            leaves.at(base + "Wh"), leaves.at(base + "Uh")};
  }

  Var apply_dropout(Tape& tape, Var x, Rng& rng) const {
    const double keep = 1.0 - cfg_.dropout;
    Mat mask(tape.val(x).rows(), tape.val(x).cols());
    for (int i = 0; i < mask.rows(); ++i)
      for (int j = 0; j < mask.cols(); ++j)
        mask(i, j) = rng.next_double() < keep ? 1.0 / keep : 0.0;
    return tape.cwise_mul(x, tape.leaf(std::move(mask)));
  }

  ModelConfig cfg_;
  ParamMap params_;
  Mat label_anchor_;
};

// Per-step argmax ids -> predicted label set: drop null/BOS, de-duplicate
// preserving first occurrence.
inline std::vector<int> predict_labels(const std::vector<int>& argmax,
                                       int null_id) {
  std::vector<int> out;
  for (int id : argmax) {
    if (id >= null_id) continue;
    bool seen = false;
    for (int o : out) seen = seen || o == id;
    if (!seen) out.push_back(id);
  }
  return out;
}

}  // namespace otss
