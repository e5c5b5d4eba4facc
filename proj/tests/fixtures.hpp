#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gensurp/language_model.hpp"
#include "gensurp/representation.hpp"

namespace gensurp::testing {

inline Alphabet ab_alphabet() { return Alphabet({"a", "b"}); }

// p(a) = 0.5, p(b) = 0.3, p(EOS) = 0.2 after every context.
inline MemorylessBackend toy() { return MemorylessBackend(ab_alphabet(), {0.5, 0.3}, 0.2); }

// Context-dependent LM defined by a callback; used for degenerate fixtures.
class FunctionBackend final : public LanguageModel {
 public:
  using Fn = std::function<NextSymbolDistribution(TokenView)>;
  FunctionBackend(Alphabet alphabet, Fn fn) : alphabet_(std::move(alphabet)), fn_(std::move(fn)) {}
  const Alphabet& alphabet() const override { return alphabet_; }
  NextSymbolDistribution next_distribution(TokenView c) const override { return fn_(c); }
  std::string describe() const override { return "function"; }

 private:
  Alphabet alphabet_;
  Fn fn_;
};

// Emits "a" once after the empty context, then stops: the only string is "a".
inline FunctionBackend a_then_stop() {
  return FunctionBackend(ab_alphabet(), [](TokenView c) {
    return c.empty() ? NextSymbolDistribution({1.0, 0.0}, 0.0)
                     : NextSymbolDistribution({0.0, 0.0}, 1.0);
  });
}

// Always "a", never EOS.
inline MemorylessBackend always_a() { return MemorylessBackend(ab_alphabet(), {1.0, 0.0}, 0.0); }
inline MemorylessBackend always_eos() { return MemorylessBackend(ab_alphabet(), {0.0, 0.0}, 1.0); }

// Orthonormal e_a, e_b, e_EOS in R^3.
inline EmbeddingTable orthonormal_embeddings() {
  return EmbeddingTable(3, {{"a", {1, 0, 0}}, {"b", {0, 1, 0}}}, Vector{0, 0, 1});
}

inline TokenString str(const Alphabet& alphabet, const std::string& text) {
  return alphabet.encode_text(text);
}

}  // namespace gensurp::testing
