#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "otss/data.hpp"
#include "otss/embedding.hpp"

using namespace otss;

TEST_CASE("parse_corpus reads labels and tokens") {
  std::istringstream in("a,b\tthe cat sat\n");
  Corpus c = parse_corpus(in);
  REQUIRE(c.samples.size() == 1);
  CHECK(c.samples[0].labels == std::vector<std::string>{"a", "b"});
  CHECK(c.samples[0].tokens.size() == 3);
}

TEST_CASE("parse_corpus collapses duplicate labels") {
  std::istringstream in("a,a\tx\n");
  Corpus c = parse_corpus(in);
  REQUIRE(c.samples[0].labels == std::vector<std::string>{"a"});
  CHECK(c.samples[0].tokens.size() == 1);
}

TEST_CASE("parse_corpus rejects lines without a TAB") {
  std::istringstream in("x y z\n");
  CHECK_THROWS_WITH(parse_corpus(in),
                    Catch::Matchers::ContainsSubstring("line 1"));
}

TEST_CASE("corpus round-trips through serialize/parse") {
  std::istringstream in("a,b\tthe cat sat\nq\tx y\n\nz,w,v\tsolo\n");
  Corpus c = parse_corpus(in);
  std::ostringstream out;
  serialize_corpus(c, out);
  std::istringstream in2(out.str());
  Corpus c2 = parse_corpus(in2);
  REQUIRE(c2.samples.size() == c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    CHECK(c2.samples[i].labels == c.samples[i].labels);
    CHECK(c2.samples[i].tokens == c.samples[i].tokens);
  }
}

TEST_CASE("build_vocab ranks by frequency with UNK at id 0") {
  std::istringstream in("a\tthe the the cat\n");
  Corpus c = parse_corpus(in);
  Vocab v = Vocab::build(c, 10);
  CHECK(v.size() == 3);
  CHECK(v.id("the") == 1);
  CHECK(v.id("cat") == 2);
  CHECK(v.id("dog") == 0);  // OOV -> UNK
}

TEST_CASE("build_vocab degenerate bound keeps only UNK") {
  std::istringstream in("a\tx y z\n");
  Corpus c = parse_corpus(in);
  Vocab v = Vocab::build(c, 1);
  CHECK(v.size() == 1);
  CHECK(v.id("x") == 0);
  CHECK_THROWS_AS(Vocab::build(c, 0), std::invalid_argument);
}

TEST_CASE("build_vocab breaks frequency ties lexicographically") {
  std::istringstream in("l\tb a b a\n");
  Corpus c = parse_corpus(in);
  Vocab v = Vocab::build(c, 10);
  CHECK(v.id("a") == 1);
  CHECK(v.id("b") == 2);
}

TEST_CASE("build_vocab is independent of sample order") {
  std::istringstream in1("l\tx x y\nl\tz y\n");
  std::istringstream in2("l\tz y\nl\tx x y\n");
  Corpus c1 = parse_corpus(in1), c2 = parse_corpus(in2);
  Vocab v1 = Vocab::build(c1, 10), v2 = Vocab::build(c2, 10);
  REQUIRE(v1.size() == v2.size());
  for (std::size_t i = 0; i < v1.size(); ++i)
    CHECK(v1.token(static_cast<int>(i)) == v2.token(static_cast<int>(i)));
}

TEST_CASE("load_embeddings fills known rows and errors on bad width") {
  std::istringstream corpus_in("l\tcat dog\n");
  Corpus c = parse_corpus(corpus_in);
  Vocab v = Vocab::build(c, 10);
  {
    std::istringstream in("cat 1.0 0.0\n");
    EmbeddingTable t = load_embeddings(in, v, 2, 7);
    CHECK(t.rows(v.id("cat"), 0) == 1.0);
    CHECK(t.rows(v.id("cat"), 1) == 0.0);
  }
  {
    std::istringstream in("cat 1.0\n");
    CHECK_THROWS_WITH(load_embeddings(in, v, 2, 7),
                      Catch::Matchers::ContainsSubstring("cat: expected 2"));
  }
}

TEST_CASE("load_embeddings missing tokens are seeded-reproducible") {
  std::istringstream corpus_in("l\tcat dog\n");
  Corpus c = parse_corpus(corpus_in);
  Vocab v = Vocab::build(c, 10);
  std::istringstream in1("cat 1.0 0.0\n"), in2("cat 1.0 0.0\n");
  EmbeddingTable a = load_embeddings(in1, v, 2, 99);
  EmbeddingTable b = load_embeddings(in2, v, 2, 99);
  CHECK(a.rows == b.rows);
  CHECK((a.rows.row(v.id("dog")).array().abs() <= 0.1).all());
}

TEST_CASE("label_embeddings takes word means, zero null row") {
  std::istringstream corpus_in("big cat,cat\tbig cat\n");
  Corpus c = parse_corpus(corpus_in);
  Vocab v = Vocab::build(c, 10);
  LabelSpace ls = LabelSpace::build(c);
  EmbeddingTable words;
  words.rows = Mat::Zero(static_cast<int>(v.size()), 2);
  words.rows.row(v.id("big")) << 2, 0;
  words.rows.row(v.id("cat")) << 0, 2;
  EmbeddingTable t = label_embeddings(ls, words, v, 1);
  REQUIRE(t.rows.rows() == ls.size() + 2);
  CHECK(t.rows(ls.id("big cat"), 0) == Catch::Approx(1.0));
  CHECK(t.rows(ls.id("big cat"), 1) == Catch::Approx(1.0));
  CHECK(t.rows(ls.id("cat"), 0) == Catch::Approx(0.0));
  CHECK(t.rows(ls.id("cat"), 1) == Catch::Approx(2.0));
  CHECK(t.rows.row(ls.null_id()).isZero());
}

TEST_CASE("label_embeddings mean identity holds exactly") {
  std::istringstream corpus_in("x y z w,solo\tx y z w q\n");
  Corpus c = parse_corpus(corpus_in);
  Vocab v = Vocab::build(c, 10);
  LabelSpace ls = LabelSpace::build(c);
  Rng rng(3);
  EmbeddingTable words;
  words.rows = seeded_uniform(static_cast<int>(v.size()), 5, rng, -2, 2);
  EmbeddingTable t = label_embeddings(ls, words, v, 1);
  Vec sum = Vec::Zero(5);
  for (const char* w : {"x", "y", "z", "w"})
    sum += words.rows.row(v.id(w)).transpose();
  CHECK((t.rows.row(ls.id("x y z w")).transpose() * 4.0 - sum).norm() < 1e-12);
}

TEST_CASE("gen_synthetic is deterministic and varies label sizes") {
  SynthConfig cfg;
  cfg.topics = 4;
  cfg.docs = 100;
  cfg.seed = 5;
  Corpus a = gen_synthetic(cfg), b = gen_synthetic(cfg);
  std::ostringstream sa, sb;
  serialize_corpus(a, sa);
  serialize_corpus(b, sb);
  CHECK(sa.str() == sb.str());
  // oracle: enumerate emitted label-set sizes directly
  std::set<std::size_t> sizes;
  for (const auto& s : a.samples) sizes.insert(s.labels.size());
  CHECK(sizes.size() > 1);
}

TEST_CASE("gen_synthetic single topic pins every label set") {
  SynthConfig cfg;
  cfg.topics = 1;
  cfg.labels_per_topic = 3;
  cfg.docs = 10;
  Corpus c = gen_synthetic(cfg);
  for (const auto& s : c.samples) REQUIRE(s.labels.size() == 3);
}
