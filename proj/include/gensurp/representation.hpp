#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gensurp/alphabet.hpp"

namespace gensurp {

using Vector = std::vector<double>;

// Token → vector table of uniform dimension, plus the vector standing in for ε.
class EmbeddingTable {
 public:
  // Every row must have length `dim` and non-zero norm. Without an explicit
  // eos_vector, a unit vector orthogonal to the mean row is derived.
  EmbeddingTable(std::size_t dim, std::vector<std::pair<std::string, Vector>> rows,
                 std::optional<Vector> eos_vector = std::nullopt);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  // Throws DataError naming the token.
  std::span<const double> vector(const std::string& token) const;
  std::span<const double> eos_vector() const { return eos_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<Vector> rows_;
  std::unordered_map<std::string, std::size_t> index_;
  Vector eos_;
};

// UTF-8 TSV: `token<TAB>v1 v2 ... vd`, optional first line `#dim d`. A row whose
// token equals `eos_marker` supplies the ε vector. Duplicate tokens keep the
// last row and log a warning.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::string& eos_marker = "</s>");

// Binds a table to an alphabet so strings of symbol ids can be represented.
class Representer {
 public:
  Representer(const EmbeddingTable& table, const Alphabet& alphabet);

  std::size_t dim() const { return table_->dim(); }
  // Mean of the token vectors; ε maps to the EOS vector.
  Vector represent(TokenView s) const;
  // Representation of the first outcome of s: its first token, or EOS for ε.
  std::span<const double> first_symbol(TokenView s) const;
  std::span<const double> symbol(Symbol u) const;
  // Elementwise logistic of the symbol's embedding.
  Vector activations(Symbol u) const;

 private:
  const EmbeddingTable* table_;
  const Alphabet* alphabet_;
  std::vector<Vector> rows_;  // empty for symbols without an embedding
};

Vector mean_pool(std::span<const std::span<const double>> vectors);
// 1 − x·y / (‖x‖‖y‖), clamped to [0, 2]. Throws DataError on a zero-norm input.
double cosine_distance(std::span<const double> x, std::span<const double> y);
Vector logistic(std::span<const double> x);

}  // namespace gensurp
