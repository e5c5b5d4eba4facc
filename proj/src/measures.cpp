#include "gensurp/measures.hpp"

#include <cmath>
#include <map>
#include <optional>

#include "gensurp/error.hpp"

namespace gensurp {

double WarpingFunction::operator()(double x) const {
  switch (kind) {
    case WarpKind::identity:
      return x;
    case WarpKind::neglog:
      return -std::log(x + epsilon);
    case WarpKind::log:
      return std::log(x + epsilon);
  }
  return x;
}

std::string_view to_string(ScoringKind kind) {
  switch (kind) {
    case ScoringKind::indicator: return "indicator";
    case ScoringKind::info_value: return "info_value";
    case ScoringKind::next_sym_surprisal: return "next_sym_surprisal";
    case ScoringKind::next_sym_probability: return "next_sym_probability";
    case ScoringKind::next_sym_info_value: return "next_sym_info_value";
    case ScoringKind::entropy: return "entropy";
    case ScoringKind::expected_info_value: return "expected_info_value";
    case ScoringKind::pmi: return "pmi";
    case ScoringKind::similarity_adjusted: return "similarity_adjusted";
    case ScoringKind::semantic_update: return "semantic_update";
  }
  return "?";
}

std::string_view to_string(WarpKind kind) {
  switch (kind) {
    case WarpKind::identity: return "identity";
    case WarpKind::neglog: return "neglog";
    case WarpKind::log: return "log";
  }
  return "?";
}

GSModel make_model(std::string name, ScoringKind scoring, WarpingFunction warping) {
  GSModel m;
  m.name = std::move(name);
  m.scoring = scoring;
  m.warping = warping;
  switch (scoring) {
    case ScoringKind::next_sym_surprisal:
    case ScoringKind::next_sym_probability:
    case ScoringKind::next_sym_info_value:
    case ScoringKind::entropy:
    case ScoringKind::expected_info_value:
      m.anticipatory = true;
      break;
    default:
      m.anticipatory = false;
  }
  switch (scoring) {
    case ScoringKind::indicator:
    case ScoringKind::next_sym_surprisal:
    case ScoringKind::next_sym_probability:
    case ScoringKind::pmi:
      m.closed_form = true;
      break;
    default:
      m.closed_form = false;
  }
  switch (scoring) {
    case ScoringKind::info_value:
    case ScoringKind::next_sym_info_value:
    case ScoringKind::expected_info_value:
    case ScoringKind::similarity_adjusted:
    case ScoringKind::semantic_update:
      m.needs_representation = true;
      break;
    default:
      m.needs_representation = false;
  }
  return m;
}

bool is_anticipatory(const GSModel& model) { return model.anticipatory; }

const std::vector<GSModel>& catalog() {
  static const std::vector<GSModel> models = [] {
    const WarpingFunction id{WarpKind::identity};
    const WarpingFunction neglog{WarpKind::neglog};
    const WarpingFunction log{WarpKind::log};
    return std::vector<GSModel>{
        make_model("surprisal", ScoringKind::indicator, neglog),
        make_model("probability", ScoringKind::indicator, id),
        make_model("information_value", ScoringKind::info_value, id),
        make_model("exp_next_surprisal", ScoringKind::next_sym_surprisal, id),
        make_model("exp_next_probability", ScoringKind::next_sym_probability, id),
        make_model("exp_next_info_value", ScoringKind::next_sym_info_value, id),
        make_model("entropy", ScoringKind::entropy, id),
        make_model("exp_info_value", ScoringKind::expected_info_value, id),
        make_model("pmi", ScoringKind::pmi, log),
        make_model("sim_adjusted_surprisal", ScoringKind::similarity_adjusted, neglog),
        make_model("semantic_update", ScoringKind::semantic_update, id),
    };
  }();
  return models;
}

GSModel find_measure(std::string_view name, double epsilon) {
  for (const auto& m : catalog()) {
    if (m.name == name) {
      GSModel out = m;
      out.warping.epsilon = epsilon;
      return out;
    }
  }
  throw ConfigError("unknown measure '" + std::string(name) + "'");
}

double score_indicator(TokenView v, TokenView w) { return is_prefix(w, v) ? 1.0 : 0.0; }

double score_info_value(TokenView v, TokenView w, const Representer& rep) {
  return cosine_distance(rep.represent(v), rep.represent(w));
}

double score_next_symbol_surprisal(TokenView v, const NextSymbolDistribution& next) {
  return -std::log(next.first(v));
}

double score_next_symbol_probability(TokenView v, const NextSymbolDistribution& next) {
  return next.first(v);
}

double score_next_symbol_info_value(TokenView v, const NextSymbolDistribution& next,
                                    const Representer& rep) {
  const auto first = rep.first_symbol(v);
  double total = 0.0;
  for (std::size_t u = 0; u < next.size(); ++u) {
    const double p = next.prob(static_cast<Symbol>(u));
    if (p == 0.0) continue;
    total += p * cosine_distance(first, rep.symbol(static_cast<Symbol>(u)));
  }
  if (next.eos() > 0.0) {
    total += next.eos() * cosine_distance(first, rep.first_symbol(TokenView{}));
  }
  return total;
}

double score_entropy(const Continuation& v, TokenView c, const LanguageModel& lm) {
  const double logp = v.complete ? string_log_probability(lm, v.tokens, c)
                                 : prefix_log_probability(lm, v.tokens, c);
  if (!std::isfinite(logp)) throw DataError("continuation has zero probability");
  return -logp;
}

double score_expected_info_value(std::size_t index, std::span<const Continuation> batch,
                                 const Representer& rep) {
  if (batch.size() < 2) {
    throw DataError("expected information value needs at least two continuations");
  }
  const Vector self = rep.represent(batch[index].tokens);
  double total = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (j == index) continue;
    total += cosine_distance(self, rep.represent(batch[j].tokens));
  }
  return total / static_cast<double>(batch.size() - 1);
}

double score_expected_info_value(TokenView v, std::span<const Continuation> batch,
                                 const Representer& rep) {
  if (batch.empty()) throw DataError("expected information value needs a non-empty batch");
  const Vector self = rep.represent(v);
  double total = 0.0;
  for (const auto& other : batch) total += cosine_distance(self, rep.represent(other.tokens));
  return total / static_cast<double>(batch.size());
}

double score_pmi(TokenView v, TokenView w, double context_probability) {
  if (w.empty()) return context_probability;
  return is_prefix(w.first(1), v) ? context_probability : 0.0;
}

double score_similarity_adjusted(TokenView v, TokenView w, const Representer& rep) {
  return 1.0 - score_info_value(v, w, rep) / 2.0;
}

double score_semantic_update(TokenView v, TokenView w, TokenView c, const Representer& rep) {
  if (c.empty()) throw DataError("semantic update needs a non-empty context");
  if (w.empty()) throw DataError("semantic update needs a non-empty target");
  if (!is_prefix(w.first(1), v)) return 0.0;
  const Vector a = rep.activations(w.front());
  const Vector b = rep.activations(c.back());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total;
}

namespace {

// U-statistic over ordered pairs i ≠ j, computed on distinct continuations.
std::vector<double> expected_info_value_batch(std::span<const Continuation> batch,
                                              const Representer& rep) {
  if (batch.size() < 2) {
    throw DataError("expected information value needs at least two continuations");
  }
  std::map<TokenString, std::size_t> group_of;
  std::vector<std::size_t> group(batch.size());
  std::vector<Vector> reps;
  std::vector<double> counts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto [it, inserted] = group_of.emplace(batch[i].tokens, reps.size());
    if (inserted) {
      try {
        reps.push_back(rep.represent(batch[i].tokens));
      } catch (const DataError& e) {
        throw DataError("sample " + std::to_string(i) + ": " + e.what());
      }
      counts.push_back(0.0);
    }
    group[i] = it->second;
    counts[it->second] += 1.0;
  }
  const std::size_t k = reps.size();
  std::vector<double> sums(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double d = cosine_distance(reps[a], reps[b]);
      sums[a] += counts[b] * d;
      sums[b] += counts[a] * d;
    }
  }
  const double denom = static_cast<double>(batch.size() - 1);
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = sums[group[i]] / denom;
  return out;
}

}  // namespace

std::vector<double> score_batch(const GSModel& model, std::span<const Continuation> batch,
                                TokenView w, const ScoreContext& ctx) {
  if (!ctx.lm) throw DataError("score context has no language model");
  if (model.needs_representation && !ctx.rep) {
    throw DataError("measure '" + model.name + "' needs an embedding table");
  }
  const TokenView c = ctx.context;
  std::vector<double> out(batch.size());

  if (model.scoring == ScoringKind::expected_info_value) {
    return expected_info_value_batch(batch, *ctx.rep);
  }

  std::optional<NextSymbolDistribution> next;
  double context_probability = 0.0;
  Vector target_rep;
  std::vector<std::optional<double>> by_first;  // next_sym_info_value cache
  std::map<Continuation, double, bool (*)(const Continuation&, const Continuation&)> by_string(
      [](const Continuation& a, const Continuation& b) {
        return a.complete != b.complete ? a.complete < b.complete : a.tokens < b.tokens;
      });

  switch (model.scoring) {
    case ScoringKind::next_sym_surprisal:
    case ScoringKind::next_sym_probability:
      next.emplace(ctx.lm->next_distribution(c));
      break;
    case ScoringKind::next_sym_info_value:
      next.emplace(ctx.lm->next_distribution(c));
      by_first.resize(next->size() + 1);
      break;
    case ScoringKind::pmi:
      context_probability = prefix_probability(*ctx.lm, c, TokenView{});
      break;
    case ScoringKind::info_value:
    case ScoringKind::similarity_adjusted:
      target_rep = ctx.rep->represent(w);
      break;
    default:
      break;
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Continuation& v = batch[i];
    try {
      switch (model.scoring) {
        case ScoringKind::indicator:
          out[i] = score_indicator(v.tokens, w);
          break;
        case ScoringKind::info_value:
          out[i] = cosine_distance(ctx.rep->represent(v.tokens), target_rep);
          break;
        case ScoringKind::similarity_adjusted:
          out[i] = 1.0 - cosine_distance(ctx.rep->represent(v.tokens), target_rep) / 2.0;
          break;
        case ScoringKind::next_sym_surprisal:
          out[i] = score_next_symbol_surprisal(v.tokens, *next);
          break;
        case ScoringKind::next_sym_probability:
          out[i] = score_next_symbol_probability(v.tokens, *next);
          break;
        case ScoringKind::next_sym_info_value: {
          const std::size_t slot = v.tokens.empty() ? next->size() : v.tokens.front();
          if (!by_first[slot]) {
            by_first[slot] = score_next_symbol_info_value(v.tokens, *next, *ctx.rep);
          }
          out[i] = *by_first[slot];
          break;
        }
        case ScoringKind::entropy: {
          auto it = by_string.find(v);
          if (it == by_string.end()) it = by_string.emplace(v, score_entropy(v, c, *ctx.lm)).first;
          out[i] = it->second;
          break;
        }
        case ScoringKind::pmi:
          out[i] = score_pmi(v.tokens, w, context_probability);
          break;
        case ScoringKind::semantic_update:
          out[i] = score_semantic_update(v.tokens, w, c, *ctx.rep);
          break;
        case ScoringKind::expected_info_value:
          break;
      }
    } catch (const DataError& e) {
      throw DataError("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gensurp
