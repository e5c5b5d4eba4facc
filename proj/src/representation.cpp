#include "gensurp/representation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gensurp/error.hpp"

namespace gensurp {

namespace {

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

Vector default_eos(std::size_t dim, const std::vector<Vector>& rows) {
  Vector mean(dim, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < dim; ++i) mean[i] += r[i];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  const double mean_sq = squared_norm(mean);

  // Try basis vectors in order of smallest |mean_k|, projecting out the mean.
  std::vector<std::size_t> order(dim);
  for (std::size_t i = 0; i < dim; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(mean[a]) < std::abs(mean[b]);
  });
  for (std::size_t k : order) {
    Vector e(dim, 0.0);
    e[k] = 1.0;
    if (mean_sq > 0.0) {
      const double coef = mean[k] / mean_sq;
      for (std::size_t i = 0; i < dim; ++i) e[i] -= coef * mean[i];
    }
    const double n = std::sqrt(squared_norm(e));
    if (n > 1e-9) {
      for (auto& v : e) v /= n;
      return e;
    }
  }
  // dim == 1 with a non-zero mean: point away from it.
  return Vector{mean[0] > 0 ? -1.0 : 1.0};
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim,
                               std::vector<std::pair<std::string, Vector>> rows,
                               std::optional<Vector> eos_vector)
    : dim_(dim) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
  if (rows.empty()) throw DataError("embedding table is empty");
  for (auto& [token, vec] : rows) {
    if (vec.size() != dim_) {
      throw DataError("embedding for '" + token + "' has length " +
                      std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
    }
    if (squared_norm(vec) == 0.0) throw DataError("embedding for '" + token + "' has zero norm");
    auto it = index_.find(token);
    if (it != index_.end()) {
      rows_[it->second] = std::move(vec);
    } else {
      index_.emplace(token, rows_.size());
      tokens_.push_back(token);
      rows_.push_back(std::move(vec));
    }
  }
  if (eos_vector) {
    if (eos_vector->size() != dim_) throw DataError("EOS embedding has the wrong length");
    if (squared_norm(*eos_vector) == 0.0) throw DataError("EOS embedding has zero norm");
    eos_ = std::move(*eos_vector);
  } else {
    eos_ = default_eos(dim_, rows_);
  }
}

std::span<const double> EmbeddingTable::vector(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DataError("no embedding for token '" + token + "'");
  return rows_[it->second];
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const std::string& eos_marker) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file " + path.string());
  std::optional<std::size_t> dim;
  std::vector<std::pair<std::string, Vector>> rows;
  std::optional<Vector> eos;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("#dim", 0) == 0) {
      std::istringstream header(line.substr(4));
      std::size_t d = 0;
      if (!(header >> d) || d == 0) fail("malformed #dim header");
      dim = d;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) fail("expected token<TAB>values");
    std::string token = line.substr(0, tab);
    Vector values;
    std::istringstream fields(line.substr(tab + 1));
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) fail("malformed number '" + field + "'");
      } catch (const std::logic_error&) {
        fail("malformed number '" + field + "'");
      }
    }
    if (!dim) dim = values.size();
    if (values.size() != *dim) {
      fail("row has " + std::to_string(values.size()) + " values, expected " +
           std::to_string(*dim));
    }
    if (token == eos_marker) {
      eos = std::move(values);
      continue;
    }
    if (seen.count(token)) spdlog::warn("{}:{}: duplicate embedding for '{}', keeping the last", path.string(), line_no, token);
    seen[token] = line_no;
    rows.emplace_back(std::move(token), std::move(values));
  }
  if (rows.empty()) throw DataError("embeddings file " + path.string() + " has no rows");
  return EmbeddingTable(*dim, std::move(rows), std::move(eos));
}

Representer::Representer(const EmbeddingTable& table, const Alphabet& alphabet)
    : table_(&table), alphabet_(&alphabet), rows_(alphabet.size()) {
  for (std::size_t i = 0; i < alphabet.size(); ++i) {
    const auto& tok = alphabet.token(static_cast<Symbol>(i));
    if (table.contains(tok)) {
      auto v = table.vector(tok);
      rows_[i].assign(v.begin(), v.end());
    }
  }
}

std::span<const double> Representer::symbol(Symbol u) const {
  const Vector& row = rows_.at(u);
  if (row.empty()) throw DataError("no embedding for token '" + alphabet_->token(u) + "'");
  return row;
}

std::span<const double> Representer::first_symbol(TokenView s) const {
  return s.empty() ? table_->eos_vector() : symbol(s.front());
}

Vector Representer::represent(TokenView s) const {
  if (s.empty()) {
    auto e = table_->eos_vector();
    return Vector(e.begin(), e.end());
  }
  Vector out(dim(), 0.0);
  for (Symbol u : s) {
    auto v = symbol(u);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(s.size());
  for (auto& x : out) x /= n;
  return out;
}

Vector Representer::activations(Symbol u) const { return logistic(symbol(u)); }

Vector mean_pool(std::span<const std::span<const double>> vectors) {
  if (vectors.empty()) throw DataError("cannot mean-pool zero vectors");
  Vector out(vectors.front().size(), 0.0);
  for (auto v : vectors) {
    if (v.size() != out.size()) throw DataError("mean_pool: ragged vectors");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  for (auto& x : out) x /= static_cast<double>(vectors.size());
  return out;
}

double cosine_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("cosine_distance: dimension mismatch");
  double dot = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw DataError("cosine_distance: zero-norm vector");
  const double d = 1.0 - dot / std::sqrt(xx * yy);
  return std::clamp(d, 0.0, 2.0);
}

Vector logistic(std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

}  // namespace gensurp
