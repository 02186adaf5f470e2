// Command-line surface: train / eval / predict / synth / verify.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "otss/checkpoint.hpp"
#include "otss/data.hpp"
#include "otss/embedding.hpp"
#include "otss/metrics.hpp"
#include "otss/train.hpp"
#include "otss/verify.hpp"

namespace fs = std::filesystem;
using namespace otss;

namespace {

struct Options {
  std::string data, out, model, embed, format = "both";
  std::string scheme = "all", suite = "all";
  double val_frac = 0.1, lr = 1e-3, lambda_null = 0.2, lambda_ot = 8.0;
  double dropout = 0.2, clip_norm = 8.0;
  int epochs = 20, batch = 32, bottleneck = 0, hidden = 512, stride = 3;
  int max_len = 500, gen_len = 0, embed_dim = 300, label_embed_dim = 0;
  int vocab_cap = 500000, workers = 1, trials = 0;
  std::vector<int> kernel_sizes = {3, 7, 15, 30};
  std::uint64_t seed = 1;
  bool deterministic = false, inject_fault = false;
  // synth
  int topics = 5, labels_per_topic = 6, words_per_topic = 20, docs = 100;
  int len_min = 10, len_max = 25;
};

Scheme parse_scheme(const std::string& s) {
  if (s == "all") return Scheme::All;
  if (s == "first-n") return Scheme::FirstN;
  if (s == "auto") return Scheme::Auto;
  throw CLI::ValidationError("--scheme", "expected all, first-n or auto");
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  return parse_corpus(in);
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l)) lines.push_back(l);
  return lines;
}

struct LoadedModel {
  Model model;
  Vocab vocab;
  LabelSpace labels;
};

LoadedModel load_model_dir(const std::string& checkpoint_path) {
  Model model = load_model(checkpoint_path);
  fs::path dir = fs::path(checkpoint_path).parent_path();
  Vocab vocab = Vocab::from_tokens(read_lines((dir / "vocab.txt").string()));
  LabelSpace labels = LabelSpace::from_names(read_lines((dir / "labels.txt").string()));
  return LoadedModel{std::move(model), std::move(vocab), std::move(labels)};
}

int cmd_train(const Options& o) {
  Corpus corpus = read_corpus(o.data);
  if (corpus.samples.empty()) throw std::runtime_error("empty training corpus");
  Vocab vocab = Vocab::build(corpus, o.vocab_cap);
  LabelSpace labels = LabelSpace::build(corpus);
  std::vector<Sample> samples = encode_corpus(corpus, vocab, labels);

  Scheme scheme = parse_scheme(o.scheme);
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "train.log");
  if (scheme == Scheme::Auto) {
    auto rec = recommend_scheme(samples);
    scheme = rec.scheme;
    std::ostringstream line;
    line << "scheme=" << scheme_name(scheme) << " proportion=" << rec.proportion
         << " mean_label_size=" << rec.mean_label_size;
    std::cout << line.str() << "\n";
    log << line.str() << "\n";
  }

  std::size_t max_labels = 0;
  for (const auto& s : samples) max_labels = std::max(max_labels, s.labels.size());

  ModelConfig mc;
  mc.input_vocab = static_cast<int>(vocab.size());
  mc.num_labels = labels.size();
  mc.embed_dim = o.embed_dim;
  mc.label_embed_dim = o.label_embed_dim > 0 ? o.label_embed_dim : o.embed_dim;
  mc.hidden = o.hidden;
  mc.bottleneck = o.bottleneck;
  mc.kernel_sizes = o.kernel_sizes;
  mc.conv_stride = o.stride;
  mc.max_gen_len = o.gen_len > 0 ? o.gen_len : static_cast<int>(max_labels);
  mc.max_input_len = o.max_len;
  mc.dropout = o.dropout;
  Model model(mc, o.seed);

  // word embeddings: pre-trained file when given, seeded random otherwise
  EmbeddingTable words;
  if (!o.embed.empty()) {
    std::ifstream ein(o.embed);
    if (!ein) throw std::runtime_error("cannot open embeddings: " + o.embed);
    words = load_embeddings(ein, vocab, o.embed_dim, o.seed);
  } else {
    Rng rng(Rng::mix(o.seed, 0xe4bed));
    words.rows = seeded_uniform(static_cast<int>(vocab.size()), o.embed_dim, rng);
  }
  model.params()["embed.in"] = words.rows;
  if (mc.label_embed_dim == o.embed_dim) {
    model.params()["embed.label"] =
        label_embeddings(labels, words, vocab, o.seed).rows;
  }  // otherwise keep the seeded random label table from init
  // OT ground cost anchors stay fixed at the derived label embeddings
  model.set_label_anchor(model.params().at("embed.label"));

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch = o.batch;
  tc.lr = o.lr;
  tc.clip_norm = o.clip_norm;
  tc.val_frac = o.val_frac;
  tc.seed = o.seed;
  tc.workers = o.deterministic ? 1 : o.workers;
  tc.loss.lambda_null = o.lambda_null;
  tc.loss.lambda = o.lambda_ot;
  tc.loss.scheme = scheme;
  tc.validate();

  SplitCorpus split = split_corpus(samples, tc.val_frac, tc.seed);
  if (split.train.empty()) throw std::runtime_error("no training samples after split");

  write_lines((fs::path(o.out) / "vocab.txt").string(), vocab.tokens());
  write_lines((fs::path(o.out) / "labels.txt").string(), labels.labels());

  TrainState state;
  state.total_steps =
      static_cast<long>(tc.epochs) *
      ((static_cast<long>(split.train.size()) + tc.batch - 1) / tc.batch);
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    EpochStats st = train_epoch(model, split.train, tc, state, epoch);
    std::ostringstream line;
    line << "epoch=" << epoch << " loss=" << st.mean_loss << " lb=" << st.mean_lb
         << " lot=" << st.mean_lot << " lr=" << st.lr << " sec=" << st.seconds;
    std::cout << line.str() << "\n";
    log << line.str() << "\n";
    save_model(model, (fs::path(o.out) / ("epoch" + std::to_string(epoch) + ".otss"))
                          .string());
  }
  if (!split.val.empty()) {
    MetricsReport r = evaluate(predict_sets(model, split.val), gold_sets(split.val));
    std::ostringstream kv;
    print_report_kv(r, kv);
    std::istringstream lines(kv.str());
    for (std::string ln; std::getline(lines, ln);) {
      std::cout << "val " << ln << "\n";
      log << "val " << ln << "\n";
    }
  }
  return 0;
}

int cmd_eval(const Options& o) {
  LoadedModel lm = load_model_dir(o.model);
  Corpus corpus = read_corpus(o.data);
  LabelSpace corpus_labels = LabelSpace::build(corpus);
  for (const auto& name : corpus_labels.labels()) {
    if (!lm.labels.contains(name)) {
      std::cerr << "label space mismatch: checkpoint has " << lm.labels.size()
                << " labels, corpus has " << corpus_labels.size()
                << " (unknown label: " << name << ")\n";
      return 2;
    }
  }
  if (lm.model.config().num_labels != lm.labels.size()) {
    std::cerr << "label space mismatch: checkpoint V=" << lm.model.config().num_labels
              << ", sidecar has " << lm.labels.size() << "\n";
    return 2;
  }
  std::vector<Sample> samples = encode_corpus(corpus, lm.vocab, lm.labels);
  MetricsReport r = evaluate(predict_sets(lm.model, samples), gold_sets(samples));
  if (o.format == "text" || o.format == "both") print_report_text(r, std::cout);
  if (o.format == "kv" || o.format == "both") print_report_kv(r, std::cout);
  return 0;
}

int cmd_predict(const Options& o) {
  LoadedModel lm = load_model_dir(o.model);
  for (const auto& line : read_lines(o.data)) {
    Sample s;
    for (const auto& t : split_ws(line)) s.tokens.push_back(lm.vocab.id(t));
    if (s.tokens.empty()) {
      std::cout << "\n";
      continue;
    }
    ForwardPass fp = lm.model.generate(s.tokens, /*train=*/false);
    auto ids = predict_labels(fp.argmax, lm.model.config().null_id());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) std::cout << ',';
      std::cout << lm.labels.label(ids[i]);
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_synth(const Options& o) {
  SynthConfig cfg;
  cfg.topics = o.topics;
  cfg.labels_per_topic = o.labels_per_topic;
  cfg.words_per_topic = o.words_per_topic;
  cfg.docs = o.docs;
  cfg.doc_len_min = o.len_min;
  cfg.doc_len_max = o.len_max;
  cfg.seed = o.seed;
  Corpus corpus = gen_synthetic(cfg);
  std::ofstream out(o.out);
  if (!out) throw std::runtime_error("cannot open output: " + o.out);
  serialize_corpus(corpus, out);
  std::cout << "wrote " << corpus.samples.size() << " samples to " << o.out << "\n";
  return 0;
}

int cmd_verify(const Options& o) {
  std::vector<verify::SuiteResult> results;
  auto want = [&](const char* name) {
    return o.suite == "all" || o.suite == name;
  };
  if (want("hungarian"))
    results.push_back(verify::hungarian_suite(o.trials > 0 ? o.trials : 1000,
                                              o.seed + 41, o.inject_fault));
  if (want("ot"))
    results.push_back(verify::ot_suite(o.trials > 0 ? o.trials : 200, o.seed + 6,
                                       1e-3, o.inject_fault));
  if (want("grad"))
    results.push_back(verify::grad_suite(o.seed + 10, 1e-4, o.inject_fault));
  if (want("metrics"))
    results.push_back(verify::metrics_suite(o.trials > 0 ? o.trials : 100,
                                            o.seed + 22, o.inject_fault));
  bool all_pass = true;
  for (const auto& r : results) {
    verify::print_suite(r, std::cout);
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

void add_common(CLI::App* cmd, Options& o, std::string& config_path) {
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_flag("--deterministic", o.deterministic,
                "single-worker, bit-reproducible mode");
  cmd->add_option("--workers", o.workers, "worker threads for per-sample passes");
  cmd->add_option("--config", config_path, "flat key = value config file")
      ->configurable(false);
  cmd->allow_config_extras(false);
}

// Applies a flat key = value file to an already-parsed subcommand. Values
// only fill options the command line left unset, and unknown keys are errors.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  cmd->parse_from_stream(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OTSeq2Set: sequence-to-set extreme multi-label classification"};
  app.require_subcommand(1);
  // Let a later flag override an earlier one (convenient with shared presets).
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Options o;
  std::string config_path;

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--data", o.data, "training corpus (labels<TAB>text)")->required();
  train->add_option("--out", o.out, "output directory")->required();
  train->add_option("--val-frac", o.val_frac, "validation fraction");
  train->add_option("--epochs", o.epochs, "epochs");
  train->add_option("--batch", o.batch, "batch size");
  train->add_option("--lr", o.lr, "initial learning rate");
  train->add_option("--scheme", o.scheme, "matching scheme: all, first-n, auto")
      ->check(CLI::IsMember({"all", "first-n", "auto"}));
  train->add_option("--lambda-null", o.lambda_null, "null-slot loss scale");
  train->add_option("--lambda-ot", o.lambda_ot, "OT regularizer weight");
  train->add_option("--bottleneck", o.bottleneck, "bottleneck size b (0 = off)");
  train->add_option("--hidden", o.hidden, "hidden size");
  train->add_option("--kernel-sizes", o.kernel_sizes, "lightconv kernel sizes")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  train->add_option("--stride", o.stride, "lightconv last-layer stride");
  train->add_option("--max-len", o.max_len, "max input tokens");
  train->add_option("--gen-len", o.gen_len, "generation slots N (0 = max gold size)");
  train->add_option("--embed", o.embed, "pre-trained word embedding file");
  train->add_option("--embed-dim", o.embed_dim, "word embedding dimension");
  train->add_option("--label-embed-dim", o.label_embed_dim,
                    "label embedding dimension (0 = word dimension, mean-derived)");
  train->add_option("--vocab-cap", o.vocab_cap, "input vocabulary bound");
  train->add_option("--dropout", o.dropout, "dropout rate");
  train->add_option("--clip-norm", o.clip_norm, "gradient clipping norm");
  add_common(train, o, config_path);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--model", o.model, "checkpoint file")->required();
  eval->add_option("--data", o.data, "test corpus")->required();
  eval->add_option("--format", o.format, "report format: text, kv, both");
  add_common(eval, o, config_path);

  CLI::App* predict = app.add_subcommand("predict", "predict label sets");
  predict->add_option("--model", o.model, "checkpoint file")->required();
  predict->add_option("--data", o.data, "input text file, one document per line")
      ->required();
  add_common(predict, o, config_path);

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", o.out, "output corpus path")->required();
  synth->add_option("--topics", o.topics, "topic count");
  synth->add_option("--labels-per-topic", o.labels_per_topic, "labels per topic");
  synth->add_option("--words-per-topic", o.words_per_topic, "words per topic");
  synth->add_option("--docs", o.docs, "document count");
  synth->add_option("--len-min", o.len_min, "min document length");
  synth->add_option("--len-max", o.len_max, "max document length");
  add_common(synth, o, config_path);

  CLI::App* verify = app.add_subcommand("verify", "run the oracle suites");
  verify->add_option("--suite", o.suite, "all, hungarian, ot, grad, metrics");
  verify->add_option("--trials", o.trials, "override trial count");
  verify->add_flag("--inject-fault", o.inject_fault)->group("");  // CI hook
  add_common(verify, o, config_path);

  try {
    app.parse(argc, argv);
    if (!config_path.empty())
      for (CLI::App* sub : {train, eval, predict, synth, verify})
        if (sub->parsed()) apply_config_file(sub, config_path);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (predict->parsed()) return cmd_predict(o);
    if (synth->parsed()) return cmd_synth(o);
    if (verify->parsed()) return cmd_verify(o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
