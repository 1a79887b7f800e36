#include "aal/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace aal {

namespace {

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t j = s.find(' ', i);
    const std::size_t end = j == std::string_view::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    i = end;
  }
  return out;
}

[[noreturn]] void fail(std::size_t row, const std::string& what) {
  throw CorpusError("row " + std::to_string(row) + ": " + what);
}

}  // namespace

std::string_view label_name(Label l) {
  switch (l) {
    case Label::PRO: return "PRO";
    case Label::CON: return "CON";
    case Label::NON: return "NON";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "PRO") return Label::PRO;
  if (s == "CON") return Label::CON;
  if (s == "NON") return Label::NON;
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::string_view mode_name(DomainMode m) {
  return m == DomainMode::in_domain ? "in_domain" : "cross_domain";
}

std::optional<DomainMode> parse_mode(std::string_view s) {
  if (s == "in_domain") return DomainMode::in_domain;
  if (s == "cross_domain") return DomainMode::cross_domain;
  return std::nullopt;
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (row == 1 && line.front() == '#') continue;

    const auto fields = split_on(line, '\t');
    if (fields.size() != 5) {
      fail(row, "expected 5 tab-separated fields, found " + std::to_string(fields.size()));
    }
    Sentence s;
    s.id = std::string(fields[0]);
    s.topic = std::string(fields[1]);
    if (s.id.empty()) fail(row, "empty id");
    if (s.topic.empty()) fail(row, "empty topic");
    const auto split = parse_split(fields[2]);
    if (!split) fail(row, "unknown split '" + std::string(fields[2]) + "'");
    s.split = *split;
    for (auto tok : split_words(fields[3])) s.tokens.emplace_back(tok);
    const auto labels = split_words(fields[4]);
    for (auto lab : labels) {
      const auto l = parse_label(lab);
      if (!l) fail(row, "unknown label '" + std::string(lab) + "'");
      s.gold.push_back(*l);
    }
    if (s.tokens.empty()) fail(row, "sentence has no tokens");
    if (s.tokens.size() != s.gold.size()) {
      fail(row, "token/label length mismatch (" + std::to_string(s.tokens.size()) +
                    " tokens, " + std::to_string(s.gold.size()) + " labels)");
    }
    if (!seen.insert(s.id).second) fail(row, "duplicate id '" + s.id + "'");
    corpus.topics.insert(s.topic);
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw CorpusError("read failure on " + path.string());
  return parse_corpus(buf.str());
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  out << "# id\ttopic\tsplit\ttokens\tlabels\n";
  for (const auto& s : sentences) {
    out << s.id << '\t' << s.topic << '\t' << split_name(s.split) << '\t';
    for (std::size_t t = 0; t < s.tokens.size(); ++t) out << (t ? " " : "") << s.tokens[t];
    out << '\t';
    for (std::size_t t = 0; t < s.gold.size(); ++t) out << (t ? " " : "") << label_name(s.gold[t]);
    out << '\n';
  }
}

Splits make_splits(const Corpus& corpus, DomainMode mode,
                   const std::set<std::string>& held_out_topics) {
  if (mode == DomainMode::cross_domain) {
    if (held_out_topics.empty()) throw CorpusError("cross_domain mode needs held-out topics");
    for (const auto& t : held_out_topics) {
      if (!corpus.topics.contains(t)) throw CorpusError("held-out topic '" + t + "' not in corpus");
    }
    if (held_out_topics.size() >= corpus.topics.size()) {
      throw CorpusError("held-out topics must be a strict subset of the corpus topics");
    }
  }
  Splits out;
  for (const auto& s : corpus.sentences) {
    const bool held = held_out_topics.contains(s.topic);
    if (mode == DomainMode::cross_domain) {
      if (s.split == Split::train && held) continue;
      if (s.split != Split::train && !held) continue;
    }
    switch (s.split) {
      case Split::train: out.train.push_back(s); break;
      case Split::dev: out.dev.push_back(s); break;
      case Split::test: out.test.push_back(s); break;
    }
  }
  if (out.train.empty()) throw CorpusError("train split is empty after filtering");
  if (out.dev.empty()) throw CorpusError("dev split is empty after filtering");
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  for (const auto& t : corpus.topics) st.sentences_per_topic[t] = 0;
  for (const auto& s : corpus.sentences) {
    ++st.sentences_per_topic[s.topic];
    for (Label l : s.gold) ++st.tokens_per_label[label_index(l)];
    st.total_tokens += s.size();
    switch (s.split) {
      case Split::train: ++st.train_size; break;
      case Split::dev: ++st.dev_size; break;
      case Split::test: ++st.test_size; break;
    }
  }
  st.sentence_count = corpus.sentences.size();
  st.mean_length = st.sentence_count
                       ? static_cast<double>(st.total_tokens) / static_cast<double>(st.sentence_count)
                       : 0.0;
  return st;
}

}  // namespace aal
