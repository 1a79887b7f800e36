#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aal/corpus.hpp"
#include "aal/embeddings.hpp"

namespace aal {

// Toy argument-mining task: every topic has plain sentences (all NON) and
// argumentative ones carrying PRO/CON spans drawn from topic-specific word
// lists. The stance mix differs per topic. Word vectors put each topic on its
// own ray of a plane (argument words further out); the remaining dimensions
// hold a per-word random part and, for argument words, a direction shared by
// one (topic, stance, theme). Rare themes are what makes more data pay off. Mean-pooled sentence vectors separate topic and
// sentence type.
struct SynthConfig {
  int topics = 4;
  int sentences_per_topic = 250;
  std::size_t dim = 50;
  double argumentative_share = 0.2;
  int themes = 1;             // per topic and stance, Zipf-distributed
  double theme_exponent = 1.0;
  int theme_words = 24;
  int filler_words = 40;      // per topic
  int function_words = 30;    // shared across topics
  double identity_scale = 1.0;  // norm of the per-word random part
  double stance_signal = 0.5;   // norm of the topic/stance direction
  double train_share = 0.7;
  double dev_share = 0.1;
  std::uint64_t seed = 2024;
};

struct SynthData {
  std::vector<Sentence> sentences;
  std::vector<std::string> words;
  std::vector<std::vector<double>> vectors;  // parallel to words

  EmbeddingTable table() const;
};

SynthData generate_synthetic(const SynthConfig& config = {});

// Writes corpus.tsv and embeddings.txt into dir.
void write_synthetic(const std::filesystem::path& dir, const SynthData& data);

}  // namespace aal
