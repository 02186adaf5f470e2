#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "otss/rng.hpp"

namespace otss {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One corpus line before any id mapping: label names plus whitespace tokens.
struct RawSample {
  std::vector<std::string> labels;  // de-duplicated, insertion order
  std::vector<std::string> tokens;  // original order
};

struct Corpus {
  std::vector<RawSample> samples;
};

// Id-mapped sample fed to the model.
struct Sample {
  std::vector<int> tokens;  // ids into Vocab, UNK = 0
  std::vector<int> labels;  // ids into LabelSpace, no duplicates
};

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

// Format: `label1,label2,...<TAB>word word ...`, one sample per line.
inline Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("parse error at line " + std::to_string(lineno) +
                       ": missing TAB separator");
    }
    RawSample s;
    std::unordered_set<std::string> seen;
    std::string label;
    std::istringstream ls(line.substr(0, tab));
    while (std::getline(ls, label, ',')) {
      if (label.empty()) continue;
      if (seen.insert(label).second) s.labels.push_back(label);
    }
    s.tokens = split_ws(line.substr(tab + 1));
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

inline void serialize_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.samples) {
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (i) out << ',';
      out << s.labels[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) out << ' ';
      out << s.tokens[i];
    }
    out << '\n';
  }
}

// Token vocabulary capped at `bound` entries including the reserved UNK id 0.
// Ranking is by descending frequency, ties broken lexicographically.
class Vocab {
 public:
  static constexpr int kUnk = 0;

  static Vocab build(const Corpus& corpus, std::size_t bound) {
    if (bound == 0) throw std::invalid_argument("vocab bound must be positive");
    std::map<std::string, std::size_t> freq;
    for (const auto& s : corpus.samples)
      for (const auto& t : s.tokens) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second != b.second) return a.second > b.second;
                       return a.first < b.first;
                     });
    Vocab v;
    v.id_to_token_.push_back("<unk>");
    for (const auto& [tok, cnt] : ranked) {
      (void)cnt;
      if (v.id_to_token_.size() >= bound) break;
      v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
      v.id_to_token_.push_back(tok);
    }
    return v;
  }

  // rebuild from a saved id -> token list (index 0 is the UNK marker)
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("empty vocab token list");
    Vocab v;
    v.id_to_token_ = tokens;
    for (std::size_t i = 1; i < tokens.size(); ++i)
      v.token_to_id_[tokens[i]] = static_cast<int>(i);
    return v;
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return id_to_token_.at(id); }
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Real labels get ids 0..V-1 (lexicographic); the reserved null id is V.
class LabelSpace {
 public:
  static LabelSpace build(const Corpus& corpus) {
    std::map<std::string, int> names;
    for (const auto& s : corpus.samples)
      for (const auto& l : s.labels) names.emplace(l, 0);
    if (names.empty()) throw std::invalid_argument("corpus has no labels");
    LabelSpace ls;
    for (auto& [name, id] : names) {
      id = static_cast<int>(ls.id_to_label_.size());
      ls.label_to_id_[name] = id;
      ls.id_to_label_.push_back(name);
    }
    return ls;
  }

  static LabelSpace from_names(const std::vector<std::string>& names) {
    if (names.empty()) throw std::invalid_argument("empty label list");
    LabelSpace ls;
    for (const auto& name : names) {
      if (!ls.label_to_id_.emplace(name, static_cast<int>(ls.id_to_label_.size())).second)
        throw std::invalid_argument("duplicate label name: " + name);
      ls.id_to_label_.push_back(name);
    }
    return ls;
  }

  int id(const std::string& label) const {
    auto it = label_to_id_.find(label);
    if (it == label_to_id_.end())
      throw std::out_of_range("unknown label: " + label);
    return it->second;
  }
  bool contains(const std::string& label) const {
    return label_to_id_.count(label) != 0;
  }
  const std::string& label(int id) const { return id_to_label_.at(id); }
  int size() const { return static_cast<int>(id_to_label_.size()); }
  int null_id() const { return size(); }  // one past the last real label
  const std::vector<std::string>& labels() const { return id_to_label_; }

 private:
  std::unordered_map<std::string, int> label_to_id_;
  std::vector<std::string> id_to_label_;
};

// Maps a raw corpus onto ids. Labels missing from the space are dropped when
// `skip_unknown_labels` is set (evaluation corpora), otherwise they throw.
inline std::vector<Sample> encode_corpus(const Corpus& corpus, const Vocab& vocab,
                                         const LabelSpace& labels,
                                         bool skip_unknown_labels = false) {
  std::vector<Sample> out;
  out.reserve(corpus.samples.size());
  for (const auto& raw : corpus.samples) {
    Sample s;
    for (const auto& t : raw.tokens) s.tokens.push_back(vocab.id(t));
    for (const auto& l : raw.labels) {
      if (skip_unknown_labels && !labels.contains(l)) continue;
      s.labels.push_back(labels.id(l));
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct SynthConfig {
  int topics = 5;
  int labels_per_topic = 6;
  int words_per_topic = 20;
  int doc_len_min = 10;
  int doc_len_max = 25;
  int docs = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (topics < 1 || labels_per_topic < 1 || words_per_topic < 1 || docs < 1 ||
        doc_len_min < 1 || doc_len_max < doc_len_min)
      throw std::invalid_argument("invalid synthetic corpus config");
  }
};

// Topic-mixture corpus: each document samples 1-3 topics, its label set is the
// union of those topics' labels, and tokens are drawn from the topics' words.
inline Corpus gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Corpus corpus;
  corpus.samples.reserve(cfg.docs);
  for (int d = 0; d < cfg.docs; ++d) {
    int want = static_cast<int>(rng.range(1, std::min(3, cfg.topics)));
    std::vector<int> topics;
    while (static_cast<int>(topics.size()) < want) {
      int t = static_cast<int>(rng.index(cfg.topics));
      if (std::find(topics.begin(), topics.end(), t) == topics.end())
        topics.push_back(t);
    }
    std::sort(topics.begin(), topics.end());
    RawSample s;
    for (int t : topics)
      for (int j = 0; j < cfg.labels_per_topic; ++j)
        s.labels.push_back("t" + std::to_string(t) + "_l" + std::to_string(j));
    int len = static_cast<int>(rng.range(cfg.doc_len_min, cfg.doc_len_max));
    for (int i = 0; i < len; ++i) {
      int t = topics[rng.index(topics.size())];
      int w = static_cast<int>(rng.index(cfg.words_per_topic));
      s.tokens.push_back("t" + std::to_string(t) + "_w" + std::to_string(w));
    }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace otss
