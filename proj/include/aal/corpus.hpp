#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aal {

// Label order fixes the column order of every score matrix and the
// lower-index tie rule used by decoding.
enum class Label : int { PRO = 0, CON = 1, NON = 2 };
inline constexpr int kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels{Label::PRO, Label::CON, Label::NON};

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view s);
inline int label_index(Label l) { return static_cast<int>(l); }

enum class Split { train, dev, test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

enum class DomainMode { in_domain, cross_domain };
std::string_view mode_name(DomainMode m);
std::optional<DomainMode> parse_mode(std::string_view s);

struct Sentence {
  std::string id;
  std::string topic;
  std::vector<std::string> tokens;
  std::vector<Label> gold;
  Split split = Split::train;

  std::size_t size() const { return tokens.size(); }
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CorpusStats {
  std::map<std::string, std::size_t> sentences_per_topic;
  std::array<std::size_t, kNumLabels> tokens_per_label{};
  std::size_t total_tokens = 0;
  std::size_t sentence_count = 0;
  double mean_length = 0.0;
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::set<std::string> topics;
  DomainMode mode = DomainMode::in_domain;
};

struct Splits {
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;
};

// Validates ids, label strings and token/label lengths; throws CorpusError
// naming the offending row (1-based line number).
Corpus parse_corpus(std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

Splits make_splits(const Corpus& corpus, DomainMode mode,
                   const std::set<std::string>& held_out_topics = {});

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace aal
