#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aal/corpus.hpp"

namespace aal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Static word vectors in the usual text format (`word v1 ... vD`).
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }

  void add(const std::string& word, std::span<const double> values);
  // nullopt for out-of-vocabulary words.
  std::optional<std::span<const double>> find(std::string_view word) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> values_;
};

EmbeddingTable parse_embedding_table(std::string_view text);
EmbeddingTable load_embedding_table(const std::filesystem::path& path);

// Precomputed per-sentence token vectors (`ACTX1` binary). Stored as float32
// so that load/save is bit-exact.
class ContextualStore {
 public:
  struct Record {
    std::uint32_t rows = 0;
    std::vector<float> values;  // rows x dim, row-major
  };

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  const Record* find(const std::string& id) const;
  void add(const std::string& id, std::uint32_t rows, std::uint32_t dim, std::vector<float> values);
  // Record ids in insertion order.
  const std::vector<std::string>& ids() const { return order_; }

  std::string serialize() const;
  static ContextualStore deserialize(std::string_view bytes);

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Record> records_;
  std::vector<std::string> order_;
};

ContextualStore load_contextual_store(const std::filesystem::path& path);
void save_contextual_store(const std::filesystem::path& path, const ContextualStore& store);

enum class VectorSource { mean_pooled, precomputed };

struct SentenceVector {
  Vector values;
  VectorSource source = VectorSource::mean_pooled;
};

// Row t is the vector of token t; OOV tokens map to zero rows.
Matrix token_matrix(const Sentence& sentence, const EmbeddingTable& table);
Matrix token_matrix(const Sentence& sentence, const ContextualStore& store);

SentenceVector sentence_vector(const Sentence& sentence, const EmbeddingTable& table);
SentenceVector sentence_vector(const Sentence& sentence, const ContextualStore& store);
// Looks up a T=1 record from a precomputed sentence-vector file.
SentenceVector precomputed_sentence_vector(const Sentence& sentence, const ContextualStore& vectors);

// The frozen input layer seen by the taggers: one of the two token sources,
// plus an optional precomputed sentence-vector file.
class InputEncoder {
 public:
  InputEncoder() = default;
  explicit InputEncoder(std::shared_ptr<const EmbeddingTable> table) : table_(std::move(table)) {}
  explicit InputEncoder(std::shared_ptr<const ContextualStore> store) : store_(std::move(store)) {}

  void set_sentence_vectors(std::shared_ptr<const ContextualStore> vectors) {
    sentence_vectors_ = std::move(vectors);
  }

  std::size_t dim() const;
  Matrix tokens(const Sentence& s) const;
  SentenceVector sentence(const Sentence& s) const;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  std::shared_ptr<const ContextualStore> store_;
  std::shared_ptr<const ContextualStore> sentence_vectors_;
};

}  // namespace aal
