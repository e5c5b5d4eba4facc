#include "gensurp/alphabet.hpp"

#include <cctype>

#include "gensurp/error.hpp"

namespace gensurp {

Alphabet::Alphabet(std::vector<std::string> symbols, std::string eos_marker)
    : symbols_(std::move(symbols)), eos_(std::move(eos_marker)) {
  if (symbols_.empty()) throw DataError("alphabet must be non-empty");
  index_.reserve(symbols_.size());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == eos_) {
      throw DataError("EOS marker '" + eos_ + "' cannot be an alphabet symbol");
    }
    auto [it, inserted] = index_.emplace(symbols_[i], static_cast<Symbol>(i));
    if (!inserted) throw DataError("duplicate alphabet symbol '" + symbols_[i] + "'");
  }
}

bool Alphabet::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

Symbol Alphabet::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    throw DataError("token '" + std::string(token) + "' is not in the alphabet");
  }
  return it->second;
}

TokenString Alphabet::encode(std::span<const std::string> tokens) const {
  TokenString out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

TokenString Alphabet::encode_text(std::string_view text) const {
  const auto tokens = split_whitespace(text);
  return encode(tokens);
}

std::vector<std::string> Alphabet::decode(TokenView s) const {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (Symbol sym : s) out.push_back(token(sym));
  return out;
}

std::string Alphabet::to_text(TokenView s) const {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += token(s[i]);
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace gensurp
