#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gensurp {

using Symbol = std::uint32_t;

// A string over an alphabet, stored as symbol ids. EOS never appears inside
// a TokenString; the empty string is the empty vector.
using TokenString = std::vector<Symbol>;
using TokenView = std::span<const Symbol>;

// True iff `prefix` is a (not necessarily proper) prefix of `s`.
inline bool is_prefix(TokenView prefix, TokenView s) {
  if (prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (prefix[i] != s[i]) return false;
  }
  return true;
}

inline TokenString concat(TokenView a, TokenView b) {
  TokenString out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Finite, non-empty, ordered set of distinct tokens plus a reserved EOS marker.
class Alphabet {
 public:
  static constexpr std::string_view kDefaultEos = "</s>";

  explicit Alphabet(std::vector<std::string> symbols,
                    std::string eos_marker = std::string(kDefaultEos));

  std::size_t size() const { return symbols_.size(); }
  const std::string& eos_marker() const { return eos_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  const std::string& token(Symbol s) const { return symbols_.at(s); }
  bool contains(std::string_view token) const;
  // Throws DataError naming the token when it is not a member.
  Symbol id(std::string_view token) const;

  TokenString encode(std::span<const std::string> tokens) const;
  // Whitespace tokenization followed by encode().
  TokenString encode_text(std::string_view text) const;
  std::vector<std::string> decode(TokenView s) const;
  std::string to_text(TokenView s) const;

  friend bool operator==(const Alphabet& a, const Alphabet& b) {
    return a.symbols_ == b.symbols_ && a.eos_ == b.eos_;
  }

 private:
  std::vector<std::string> symbols_;
  std::string eos_;
  std::unordered_map<std::string, Symbol> index_;
};

// Splits on ASCII whitespace; empty fields are dropped.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace gensurp
