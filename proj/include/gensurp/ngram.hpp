#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gensurp/language_model.hpp"

namespace gensurp {

using Corpus = std::vector<std::vector<std::string>>;

// Additively smoothed n-gram model:
//   p(u | h) = (count(h, u) + α) / (count(h) + α · (|Σ| + 1))
// where h is the last order−1 symbols of the context (left-padded with a
// sentence-start marker) and u ranges over Σ ∪ {EOS}. EOS is counted once at
// the end of every corpus line. Immutable after training.
class NGramBackend final : public LanguageModel {
 public:
  const Alphabet& alphabet() const override { return alphabet_; }
  NextSymbolDistribution next_distribution(TokenView context) const override;
  std::string describe() const override;

  int order() const { return order_; }
  double pseudocount() const { return pseudocount_; }
  // Number of observed events following the window of `context`.
  std::uint64_t window_count(TokenView context) const;

  friend NGramBackend train_ngram(const Corpus&, int, double, std::optional<Alphabet>);

 private:
  struct Entry {
    std::uint64_t total = 0;
    // (outcome, count); outcome == |Σ| stands for EOS. Sorted by outcome.
    std::vector<std::pair<Symbol, std::uint64_t>> outcomes;
  };

  NGramBackend(Alphabet alphabet, int order, double pseudocount)
      : alphabet_(std::move(alphabet)), order_(order), pseudocount_(pseudocount) {}

  TokenString window(TokenView context) const;

  Alphabet alphabet_;
  int order_;
  double pseudocount_;
  std::unordered_map<TokenString, Entry, TokenStringHash> table_;
};

// When `alphabet` is omitted it is the sorted set of corpus tokens; when given,
// every corpus token must belong to it. Throws DataError on an empty corpus,
// order < 1 or pseudocount <= 0.
NGramBackend train_ngram(const Corpus& corpus, int order, double pseudocount,
                         std::optional<Alphabet> alphabet = std::nullopt);

// UTF-8 text, one sentence per line, whitespace tokenization; blank lines skipped.
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace gensurp
