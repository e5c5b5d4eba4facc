#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gensurp/alphabet.hpp"

namespace gensurp {

// Probabilities over Σ ∪ {EOS} for one context. Construction validates that
// every entry is a finite non-negative number and that the total is 1 ± 1e-9.
class NextSymbolDistribution {
 public:
  static constexpr double kTolerance = 1e-9;

  NextSymbolDistribution(std::vector<double> symbol_probs, double eos_prob);

  std::size_t size() const { return probs_.size(); }
  double prob(Symbol s) const { return probs_.at(s); }
  double eos() const { return eos_; }
  std::span<const double> symbol_probs() const { return probs_; }

  // Probability of the first outcome of `v`: π(v[0] | c), or p(EOS | c) for v = ε.
  double first(TokenView v) const { return v.empty() ? eos_ : probs_.at(v.front()); }

  // Inverse-CDF draw for u ∈ [0, 1). nullopt stands for EOS.
  std::optional<Symbol> draw(double u) const;

 private:
  std::vector<double> probs_;
  double eos_;
};

}  // namespace gensurp
