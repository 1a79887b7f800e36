#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "aal/corpus.hpp"
#include "aal/rng.hpp"

using namespace aal;

TEST_CASE("parses a canonical row") {
  auto c = parse_corpus("s1\tabortion\ttrain\tthis is bad\tNON NON CON\n");
  REQUIRE(c.sentences.size() == 1);
  const auto& s = c.sentences[0];
  CHECK(s.size() == 3);
  CHECK(s.gold == std::vector<Label>{Label::NON, Label::NON, Label::CON});
  CHECK(s.topic == "abortion");
  CHECK(s.split == Split::train);
}

TEST_CASE("header line and CRLF are accepted") {
  auto c = parse_corpus("# id\ttopic\tsplit\ttokens\tlabels\r\ns1\tt\tdev\ta\tPRO\r\n");
  REQUIRE(c.sentences.size() == 1);
  CHECK(c.sentences[0].split == Split::dev);
}

TEST_CASE("length mismatch names the row") {
  try {
    parse_corpus("s1\tt\ttrain\ta b\tNON NON\ns2\tt\ttrain\ta b c\tNON NON\n");
    FAIL("expected error");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
}

TEST_CASE("malformed rows are rejected") {
  CHECK_THROWS_AS(parse_corpus("s1\tt\ttrain\ta\n"), CorpusError);
  CHECK_THROWS_AS(parse_corpus("s1\tt\ttrain\ta\tMAYBE\n"), CorpusError);
  CHECK_THROWS_AS(parse_corpus("s1\tt\tvalidation\ta\tNON\n"), CorpusError);
  CHECK_THROWS_AS(parse_corpus("s1\tt\ttrain\ta\tNON\ns1\tt\ttrain\tb\tNON\n"), CorpusError);
  CHECK_THROWS_AS(parse_corpus("s1\tt\ttrain\t\t\n"), CorpusError);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.tsv"), CorpusError);
}

namespace {

std::vector<Sentence> random_sentences(std::size_t n, std::size_t topics, Rng& rng) {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sentence s;
    s.id = "s" + std::to_string(i);
    s.topic = "topic" + std::to_string(rng.below(topics));
    const auto len = 1 + rng.below(12);
    for (std::size_t t = 0; t < len; ++t) {
      s.tokens.push_back("w" + std::to_string(rng.below(50)));
      s.gold.push_back(kAllLabels[rng.below(3)]);
    }
    s.split = static_cast<Split>(rng.below(3));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("eight topics with 1000 sentences each report 1000 per topic") {
  const auto path = std::filesystem::temp_directory_path() / "aal_corpus_8k.tsv";
  std::vector<Sentence> rows;
  for (int topic = 0; topic < 8; ++topic) {
    for (int i = 0; i < 1000; ++i) {
      Sentence s;
      s.id = "t" + std::to_string(topic) + "_" + std::to_string(i);
      s.topic = "topic" + std::to_string(topic);
      s.tokens = {"a", "b"};
      s.gold = {Label::NON, Label::PRO};
      s.split = i < 700 ? Split::train : (i < 800 ? Split::dev : Split::test);
      rows.push_back(s);
    }
  }
  write_corpus(path, rows);
  const auto c = load_corpus(path);
  const auto st = corpus_stats(c);
  CHECK(st.sentence_count == 8000);
  for (const auto& [topic, count] : st.sentences_per_topic) CHECK(count == 1000);
  CHECK(st.train_size == 5600);
  std::filesystem::remove(path);
}

TEST_CASE("write/load round trip preserves sentences") {
  Rng rng(3);
  const auto rows = random_sentences(50, 4, rng);
  const auto path = std::filesystem::temp_directory_path() / "aal_corpus_rt.tsv";
  write_corpus(path, rows);
  const auto c = load_corpus(path);
  REQUIRE(c.sentences.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(c.sentences[i].id == rows[i].id);
    CHECK(c.sentences[i].tokens == rows[i].tokens);
    CHECK(c.sentences[i].gold == rows[i].gold);
    CHECK(c.sentences[i].split == rows[i].split);
  }
  std::filesystem::remove(path);
}

TEST_CASE("in-domain splits follow the split column") {
  Rng rng(5);
  Corpus c;
  c.sentences = random_sentences(200, 4, rng);
  for (const auto& s : c.sentences) c.topics.insert(s.topic);
  const auto sp = make_splits(c, DomainMode::in_domain);
  std::size_t train = 0, dev = 0, test = 0;
  for (const auto& s : c.sentences) {
    train += s.split == Split::train;
    dev += s.split == Split::dev;
    test += s.split == Split::test;
  }
  CHECK(sp.train.size() == train);
  CHECK(sp.dev.size() == dev);
  CHECK(sp.test.size() == test);
}

TEST_CASE("cross-domain splits filter by held-out topics") {
  Rng rng(11);
  Corpus c;
  c.sentences = random_sentences(400, 4, rng);
  for (const auto& s : c.sentences) c.topics.insert(s.topic);
  const std::set<std::string> held{"topic2"};
  const auto sp = make_splits(c, DomainMode::cross_domain, held);

  // Brute-force recount over rows.
  std::size_t train = 0, dev = 0, test = 0;
  for (const auto& s : c.sentences) {
    const bool h = s.topic == "topic2";
    if (s.split == Split::train && !h) ++train;
    if (s.split == Split::dev && h) ++dev;
    if (s.split == Split::test && h) ++test;
  }
  CHECK(sp.train.size() == train);
  CHECK(sp.dev.size() == dev);
  CHECK(sp.test.size() == test);
  for (const auto& s : sp.train) CHECK(s.topic != "topic2");
  for (const auto& s : sp.dev) CHECK(s.topic == "topic2");

  // Disjoint, deterministic.
  std::set<std::string> ids;
  for (const auto* part : {&sp.train, &sp.dev, &sp.test})
    for (const auto& s : *part) CHECK(ids.insert(s.id).second);
  const auto again = make_splits(c, DomainMode::cross_domain, held);
  CHECK(again.train.size() == sp.train.size());
  CHECK(again.train.front().id == sp.train.front().id);
}

TEST_CASE("cross-domain rejects non-strict or unknown held-out sets") {
  Rng rng(2);
  Corpus c;
  c.sentences = random_sentences(100, 2, rng);
  for (const auto& s : c.sentences) c.topics.insert(s.topic);
  CHECK_THROWS_AS(make_splits(c, DomainMode::cross_domain, {}), CorpusError);
  CHECK_THROWS_AS(make_splits(c, DomainMode::cross_domain, {"topic0", "topic1"}), CorpusError);
  CHECK_THROWS_AS(make_splits(c, DomainMode::cross_domain, {"nope"}), CorpusError);
}

TEST_CASE("empty dev after filtering is an error") {
  Corpus c = parse_corpus("a\tt\ttrain\tx\tNON\nb\tt\ttest\tx\tNON\n");
  CHECK_THROWS_AS(make_splits(c, DomainMode::in_domain), CorpusError);
}

TEST_CASE("stats: mean length and label counts") {
  Corpus c = parse_corpus("a\tt\ttrain\tx y z\tNON NON NON\nb\tt\tdev\tp q r s u\tNON NON NON NON NON\n");
  const auto st = corpus_stats(c);
  CHECK(st.mean_length == doctest::Approx(4.0));
  CHECK(st.tokens_per_label[label_index(Label::PRO)] == 0);
  CHECK(st.tokens_per_label[label_index(Label::CON)] == 0);
}

TEST_CASE("stats equal an independent recount") {
  Rng rng(17);
  Corpus c;
  c.sentences = random_sentences(100, 5, rng);
  for (const auto& s : c.sentences) c.topics.insert(s.topic);
  const auto st = corpus_stats(c);
  std::map<std::string, std::size_t> topics;
  std::size_t labels[3] = {0, 0, 0};
  std::size_t tokens = 0;
  for (const auto& s : c.sentences) {
    ++topics[s.topic];
    tokens += s.tokens.size();
    for (auto l : s.gold) ++labels[static_cast<int>(l)];
  }
  CHECK(st.sentences_per_topic == topics);
  CHECK(st.total_tokens == tokens);
  for (int l = 0; l < 3; ++l) CHECK(st.tokens_per_label[static_cast<std::size_t>(l)] == labels[l]);
  CHECK(st.tokens_per_label[0] + st.tokens_per_label[1] + st.tokens_per_label[2] == st.total_tokens);
}
