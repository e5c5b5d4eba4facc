#include "gensurp/ngram.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "gensurp/error.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {
constexpr Symbol kStart = std::numeric_limits<Symbol>::max();
}

TokenString NGramBackend::window(TokenView context) const {
  const std::size_t width = static_cast<std::size_t>(order_ - 1);
  TokenString w(width, kStart);
  const std::size_t take = std::min(width, context.size());
  std::copy(context.end() - static_cast<std::ptrdiff_t>(take), context.end(),
            w.end() - static_cast<std::ptrdiff_t>(take));
  return w;
}

std::uint64_t NGramBackend::window_count(TokenView context) const {
  auto it = table_.find(window(context));
  return it == table_.end() ? 0 : it->second.total;
}

NextSymbolDistribution NGramBackend::next_distribution(TokenView context) const {
  const std::size_t n = alphabet_.size();
  const auto it = table_.find(window(context));
  const double total = it == table_.end() ? 0.0 : static_cast<double>(it->second.total);
  const double denom = total + pseudocount_ * static_cast<double>(n + 1);
  const double floor = pseudocount_ / denom;
  std::vector<double> probs(n, floor);
  double eos = floor;
  if (it != table_.end()) {
    for (const auto& [outcome, count] : it->second.outcomes) {
      const double p = (static_cast<double>(count) + pseudocount_) / denom;
      if (outcome == n) {
        eos = p;
      } else {
        probs[outcome] = p;
      }
    }
  }
  return NextSymbolDistribution(std::move(probs), eos);
}

std::string NGramBackend::describe() const {
  std::ostringstream out;
  out.precision(17);
  out << "ngram(order=" << order_ << ",pseudocount=" << pseudocount_
      << ",vocab=" << alphabet_.size() << ",windows=" << table_.size() << ')';
  return out.str();
}

NGramBackend train_ngram(const Corpus& corpus, int order, double pseudocount,
                         std::optional<Alphabet> alphabet) {
  if (corpus.empty()) throw DataError("cannot train an n-gram model on an empty corpus");
  if (order < 1) throw DataError("n-gram order must be >= 1");
  if (!(pseudocount > 0.0)) throw DataError("pseudocount must be > 0");

  if (!alphabet) {
    std::set<std::string> vocab;
    for (const auto& line : corpus) vocab.insert(line.begin(), line.end());
    if (vocab.empty()) throw DataError("corpus contains no tokens");
    alphabet.emplace(std::vector<std::string>(vocab.begin(), vocab.end()));
  }

  NGramBackend model(std::move(*alphabet), order, pseudocount);
  const auto eos = static_cast<Symbol>(model.alphabet_.size());
  std::unordered_map<TokenString, std::map<Symbol, std::uint64_t>, TokenStringHash>
      counts;
  for (const auto& line : corpus) {
    const TokenString tokens = model.alphabet_.encode(line);
    for (std::size_t i = 0; i <= tokens.size(); ++i) {
      const Symbol outcome = i < tokens.size() ? tokens[i] : eos;
      auto w = model.window(TokenView(tokens).first(i));
      ++counts[std::move(w)][outcome];
    }
  }
  model.table_.reserve(counts.size());
  for (auto& [w, outcomes] : counts) {
    NGramBackend::Entry entry;
    entry.outcomes.assign(outcomes.begin(), outcomes.end());
    for (const auto& [_, c] : entry.outcomes) entry.total += c;
    model.table_.emplace(w, std::move(entry));
  }
  return model;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_whitespace(line);
    if (!tokens.empty()) corpus.push_back(std::move(tokens));
  }
  if (corpus.empty()) throw DataError("corpus file " + path.string() + " is empty");
  return corpus;
}

}  // namespace gensurp
