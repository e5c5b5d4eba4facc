#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gensurp/distribution.hpp"
#include "gensurp/language_model.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

inline constexpr double kDefaultEpsilon = 1e-4;

enum class WarpKind { identity, neglog, log };

// f in f(E[g]). neglog(x) = −ln(x + ε) and log(x) = ln(x + ε); ε keeps both
// finite at x = 0.
struct WarpingFunction {
  WarpKind kind = WarpKind::identity;
  double epsilon = kDefaultEpsilon;

  double operator()(double x) const;
};

enum class ScoringKind {
  indicator,
  info_value,
  next_sym_surprisal,
  next_sym_probability,
  next_sym_info_value,
  entropy,
  expected_info_value,
  pmi,
  similarity_adjusted,
  semantic_update,
};

std::string_view to_string(ScoringKind kind);
std::string_view to_string(WarpKind kind);

struct GSModel {
  std::string name;
  WarpingFunction warping;
  ScoringKind scoring = ScoringKind::indicator;
  bool anticipatory = false;
  // Computable exactly from full next-symbol distributions.
  bool closed_form = false;
  // Needs an embedding table.
  bool needs_representation = false;
};

// Derives the anticipatory / closed_form flags from the scoring kind.
GSModel make_model(std::string name, ScoringKind scoring, WarpingFunction warping);

// Anticipatory scorers ignore the target w entirely.
bool is_anticipatory(const GSModel& model);

// Stable catalog names: surprisal, probability, information_value,
// exp_next_surprisal, exp_next_probability, exp_next_info_value, entropy,
// exp_info_value, pmi, sim_adjusted_surprisal, semantic_update.
const std::vector<GSModel>& catalog();
// Catalog entry with the given warping epsilon. Throws ConfigError for unknown names.
GSModel find_measure(std::string_view name, double epsilon = kDefaultEpsilon);

// ---- per-continuation scoring functions g(v, w, c) ----

double score_indicator(TokenView v, TokenView w);
double score_info_value(TokenView v, TokenView w, const Representer& rep);
double score_next_symbol_surprisal(TokenView v, const NextSymbolDistribution& next);
double score_next_symbol_probability(TokenView v, const NextSymbolDistribution& next);
// Σ_{u ∈ Σ∪{EOS}} π(u | c) · d(v[1], u), with ε represented by the EOS vector.
double score_next_symbol_info_value(TokenView v, const NextSymbolDistribution& next,
                                    const Representer& rep);
// −log p(v | c) for a complete continuation, −log π(v | c) for a truncated one.
double score_entropy(const Continuation& v, TokenView c, const LanguageModel& lm);
// Mean distance from batch[index] to every other batch element (i ≠ j).
double score_expected_info_value(std::size_t index, std::span<const Continuation> batch,
                                 const Representer& rep);
// Mean distance from v to every element of an independent batch.
double score_expected_info_value(TokenView v, std::span<const Continuation> batch,
                                 const Representer& rep);
// p(c) · 1{w[1] ⪯ v}
double score_pmi(TokenView v, TokenView w, double context_probability);
// z = 1 − d(v, w) / 2
double score_similarity_adjusted(TokenView v, TokenView w, const Representer& rep);
// 1{w[1] ⪯ v} · Σ_i |a_i(w[1]) − a_i(c_last)|
double score_semantic_update(TokenView v, TokenView w, TokenView c, const Representer& rep);

struct ScoreContext {
  const LanguageModel* lm = nullptr;
  const Representer* rep = nullptr;  // required when model.needs_representation
  TokenString context;
};

// g(v⁽ⁿ⁾, w, c) for every continuation of a batch drawn from p(· | c).
// Errors are rethrown with the failing sample index.
std::vector<double> score_batch(const GSModel& model, std::span<const Continuation> batch,
                                TokenView w, const ScoreContext& ctx);

}  // namespace gensurp
