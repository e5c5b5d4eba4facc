#include "gensurp/distribution.hpp"

#include <cmath>
#include <sstream>

#include "gensurp/error.hpp"

namespace gensurp {

NextSymbolDistribution::NextSymbolDistribution(std::vector<double> symbol_probs,
                                               double eos_prob)
    : probs_(std::move(symbol_probs)), eos_(eos_prob) {
  double total = eos_;
  if (!std::isfinite(eos_) || eos_ < 0.0) {
    throw ValidationError("EOS probability is negative or not finite");
  }
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p) || p < 0.0) {
      std::ostringstream msg;
      msg << "probability of symbol " << i << " is negative or not finite (" << p << ")";
      throw ValidationError(msg.str());
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "next-symbol distribution sums to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }
}

std::optional<Symbol> NextSymbolDistribution::draw(double u) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    acc += probs_[i];
    if (u < acc) return static_cast<Symbol>(i);
  }
  // Remaining mass (EOS plus rounding slack) maps to EOS.
  return std::nullopt;
}

}  // namespace gensurp
