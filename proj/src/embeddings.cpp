#include "aal/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aal/binary_io.hpp"

namespace aal {

namespace io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failure on " + path);
}

}  // namespace io

namespace {

constexpr std::string_view kContextualMagic = "ACTX1";

}  // namespace

void EmbeddingTable::add(const std::string& word, std::span<const double> values) {
  if (dim_ == 0) dim_ = values.size();
  if (values.size() != dim_) throw EmbeddingError("vector for '" + word + "' has wrong dimension");
  auto [it, inserted] = index_.try_emplace(word, values_.size() / dim_);
  if (inserted) {
    values_.insert(values_.end(), values.begin(), values.end());
  } else {
    std::copy(values.begin(), values.end(), values_.begin() + static_cast<long>(it->second * dim_));
  }
}

std::optional<std::span<const double>> EmbeddingTable::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return std::span<const double>(values_.data() + it->second * dim_, dim_);
}

EmbeddingTable parse_embedding_table(std::string_view text) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<double> values;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const auto sp = line.find(' ');
    if (sp == std::string_view::npos || sp == 0) {
      throw EmbeddingError("line " + std::to_string(line_no) + ": expected 'word v1 ... vD'");
    }
    const std::string word(line.substr(0, sp));
    values.clear();
    std::size_t i = sp;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      if (i >= line.size()) break;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), v);
      const auto end = static_cast<std::size_t>(ptr - line.data());
      if (ec != std::errc() || (end < line.size() && line[end] != ' ') || !std::isfinite(v)) {
        throw EmbeddingError("line " + std::to_string(line_no) + ": non-numeric field");
      }
      values.push_back(v);
      i = end;
    }
    if (values.empty()) throw EmbeddingError("line " + std::to_string(line_no) + ": no values");
    if (table.dim() != 0 && values.size() != table.dim()) {
      throw EmbeddingError("line " + std::to_string(line_no) + ": dimension " +
                           std::to_string(values.size()) + " differs from " +
                           std::to_string(table.dim()));
    }
    table.add(word, values);
  }
  if (table.size() == 0) throw EmbeddingError("embedding file is empty");
  return table;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path.string());
  } catch (const std::runtime_error& e) {
    throw EmbeddingError(e.what());
  }
  return parse_embedding_table(text);
}

const ContextualStore::Record* ContextualStore::find(const std::string& id) const {
  const auto it = records_.find(id);
  return it == records_.end() ? nullptr : &it->second;
}

void ContextualStore::add(const std::string& id, std::uint32_t rows, std::uint32_t dim,
                          std::vector<float> values) {
  if (dim == 0) throw EmbeddingError("record '" + id + "' has zero dimension");
  if (dim_ == 0) dim_ = dim;
  if (dim != dim_) throw EmbeddingError("record '" + id + "' dimension differs from store");
  if (values.size() != static_cast<std::size_t>(rows) * dim) {
    throw EmbeddingError("record '" + id + "' has wrong value count");
  }
  if (records_.contains(id)) throw EmbeddingError("duplicate record id '" + id + "'");
  records_.emplace(id, Record{rows, std::move(values)});
  order_.push_back(id);
}

std::string ContextualStore::serialize() const {
  io::Writer w;
  w.bytes(kContextualMagic);
  for (const auto& id : order_) {
    const auto& r = records_.at(id);
    w.str(id);
    w.u32(r.rows);
    w.u32(static_cast<std::uint32_t>(dim_));
    for (float v : r.values) w.f32(v);
  }
  return w.data();
}

ContextualStore ContextualStore::deserialize(std::string_view bytes) {
  io::Reader r(bytes);
  try {
    if (r.bytes(kContextualMagic.size()) != kContextualMagic) {
      throw EmbeddingError("missing ACTX1 header");
    }
    ContextualStore store;
    while (!r.done()) {
      std::string id = r.str();
      const auto rows = r.u32();
      const auto dim = r.u32();
      std::vector<float> values(static_cast<std::size_t>(rows) * dim);
      for (auto& v : values) v = r.f32();
      store.add(id, rows, dim, std::move(values));
    }
    return store;
  } catch (const EmbeddingError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw EmbeddingError(e.what());
  }
}

ContextualStore load_contextual_store(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path.string());
  } catch (const std::runtime_error& e) {
    throw EmbeddingError(e.what());
  }
  return ContextualStore::deserialize(bytes);
}

void save_contextual_store(const std::filesystem::path& path, const ContextualStore& store) {
  io::write_file(path.string(), store.serialize());
}

Matrix token_matrix(const Sentence& sentence, const EmbeddingTable& table) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(sentence.size()),
                          static_cast<Eigen::Index>(table.dim()));
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    if (auto v = table.find(sentence.tokens[t])) {
      for (std::size_t d = 0; d < v->size(); ++d) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = (*v)[d];
    }
  }
  return m;
}

Matrix token_matrix(const Sentence& sentence, const ContextualStore& store) {
  const auto* rec = store.find(sentence.id);
  if (!rec) throw EmbeddingError("no contextual record for sentence '" + sentence.id + "'");
  if (rec->rows != sentence.size()) {
    throw EmbeddingError("contextual record for '" + sentence.id + "' has " +
                         std::to_string(rec->rows) + " rows, sentence has " +
                         std::to_string(sentence.size()) + " tokens");
  }
  const auto dim = static_cast<Eigen::Index>(store.dim());
  Matrix m(static_cast<Eigen::Index>(rec->rows), dim);
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index d = 0; d < dim; ++d) m(t, d) = rec->values[static_cast<std::size_t>(t * dim + d)];
  }
  return m;
}

namespace {

SentenceVector mean_rows(const Matrix& m) {
  SentenceVector sv;
  sv.values = Vector::Zero(m.cols());
  for (Eigen::Index t = 0; t < m.rows(); ++t) sv.values += m.row(t).transpose();
  sv.values /= static_cast<double>(m.rows());
  sv.source = VectorSource::mean_pooled;
  return sv;
}

}  // namespace

SentenceVector sentence_vector(const Sentence& sentence, const EmbeddingTable& table) {
  return mean_rows(token_matrix(sentence, table));
}

SentenceVector sentence_vector(const Sentence& sentence, const ContextualStore& store) {
  return mean_rows(token_matrix(sentence, store));
}

SentenceVector precomputed_sentence_vector(const Sentence& sentence, const ContextualStore& vectors) {
  const auto* rec = vectors.find(sentence.id);
  if (!rec) throw EmbeddingError("no sentence vector for '" + sentence.id + "'");
  if (rec->rows != 1) throw EmbeddingError("sentence vector record for '" + sentence.id + "' must have T=1");
  SentenceVector sv;
  sv.values.resize(static_cast<Eigen::Index>(vectors.dim()));
  for (Eigen::Index d = 0; d < sv.values.size(); ++d) sv.values(d) = rec->values[static_cast<std::size_t>(d)];
  sv.source = VectorSource::precomputed;
  return sv;
}

std::size_t InputEncoder::dim() const {
  if (table_) return table_->dim();
  if (store_) return store_->dim();
  return 0;
}

Matrix InputEncoder::tokens(const Sentence& s) const {
  if (table_) return token_matrix(s, *table_);
  if (store_) return token_matrix(s, *store_);
  throw EmbeddingError("input encoder has no token source");
}

SentenceVector InputEncoder::sentence(const Sentence& s) const {
  if (sentence_vectors_) return precomputed_sentence_vector(s, *sentence_vectors_);
  if (table_) return sentence_vector(s, *table_);
  if (store_) return sentence_vector(s, *store_);
  throw EmbeddingError("input encoder has no token source");
}

}  // namespace aal
