#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gensurp/alphabet.hpp"
#include "gensurp/distribution.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

struct TokenStringHash {
  std::size_t operator()(const TokenString& w) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (Symbol s : w) h = splitmix64(h ^ s);
    return static_cast<std::size_t>(h);
  }
};

// A sampled continuation. `complete` is true when the draw ended with EOS and
// false when it was cut at the length limit.
struct Continuation {
  TokenString tokens;
  bool complete = true;

  friend bool operator==(const Continuation&, const Continuation&) = default;
};

// Capability contract shared by every backend. Implementations are immutable
// once constructed and safe for concurrent const use.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Alphabet& alphabet() const = 0;
  virtual NextSymbolDistribution next_distribution(TokenView context) const = 0;
  // Short human-readable identity recorded in run manifests.
  virtual std::string describe() const = 0;

  // n ancestral samples of at most max_len symbols each. The default draws
  // symbol by symbol from next_distribution(); backends with a native sampler
  // may override it, as long as results stay a pure function of rng state.
  virtual std::vector<Continuation> sample_batch(TokenView context, std::size_t n,
                                                 std::size_t max_len,
                                                 RandomStream& rng) const;

  // Tokens for `text` as it appears after `preceding` (empty when it starts
  // the sentence). The default splits on whitespace; subword backends override.
  virtual TokenString tokenize(std::string_view text, std::string_view preceding) const;
};

// π(w | c): probability that a string drawn from p(· | c) starts with w.
double prefix_probability(const LanguageModel& lm, TokenView w, TokenView c);
// log π(w | c), accumulated in log space.
double prefix_log_probability(const LanguageModel& lm, TokenView w, TokenView c);
// p(v | c): probability that the continuation is exactly v.
double string_probability(const LanguageModel& lm, TokenView v, TokenView c);
double string_log_probability(const LanguageModel& lm, TokenView v, TokenView c);

Continuation sample(const LanguageModel& lm, TokenView c, std::size_t max_len,
                    RandomStream& rng);

struct Enumeration {
  std::map<TokenString, double> probs;
  double mass = 0.0;
};

inline constexpr std::size_t kMaxEnumeration = 10'000'000;

// Exact p(v | c) for every v with |v| <= max_len. Throws when the number of
// strings would exceed kMaxEnumeration.
Enumeration enumerate_distribution(const LanguageModel& lm, TokenView c,
                                   std::size_t max_len);

// Exact law of sample(lm, c, max_len): p(v | c) for |v| < max_len and
// π(v | c) for |v| = max_len. Entries carry the `complete` flag the sampler
// would report. Total mass is 1 up to rounding.
struct TruncatedOutcome {
  Continuation continuation;
  double prob = 0.0;
};
std::vector<TruncatedOutcome> truncated_sampling_distribution(const LanguageModel& lm,
                                                              TokenView c,
                                                              std::size_t max_len);
// Streaming form of truncated_sampling_distribution().
void for_each_truncated_outcome(
    const LanguageModel& lm, TokenView c, std::size_t max_len,
    const std::function<void(const Continuation&, double prob)>& visit);

// Context-free LM: the same next-symbol distribution after every context.
class MemorylessBackend final : public LanguageModel {
 public:
  MemorylessBackend(Alphabet alphabet, std::vector<double> symbol_probs, double eos_prob);

  const Alphabet& alphabet() const override { return alphabet_; }
  NextSymbolDistribution next_distribution(TokenView) const override { return dist_; }
  std::string describe() const override;

 private:
  Alphabet alphabet_;
  NextSymbolDistribution dist_;
};

}  // namespace gensurp
