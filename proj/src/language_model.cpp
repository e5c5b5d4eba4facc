#include "gensurp/language_model.hpp"

#include <cmath>
#include <sstream>

#include "gensurp/error.hpp"

namespace gensurp {

TokenString LanguageModel::tokenize(std::string_view text, std::string_view) const {
  return alphabet().encode_text(text);
}

std::vector<Continuation> LanguageModel::sample_batch(TokenView context, std::size_t n,
                                                      std::size_t max_len,
                                                      RandomStream& rng) const {
  std::vector<Continuation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample(*this, context, max_len, rng));
  return out;
}

double prefix_probability(const LanguageModel& lm, TokenView w, TokenView c) {
  double p = 1.0;
  TokenString ctx(c.begin(), c.end());
  for (Symbol u : w) {
    p *= lm.next_distribution(ctx).prob(u);
    ctx.push_back(u);
  }
  return p;
}

double prefix_log_probability(const LanguageModel& lm, TokenView w, TokenView c) {
  double lp = 0.0;
  TokenString ctx(c.begin(), c.end());
  for (Symbol u : w) {
    lp += std::log(lm.next_distribution(ctx).prob(u));
    ctx.push_back(u);
  }
  return lp;
}

double string_probability(const LanguageModel& lm, TokenView v, TokenView c) {
  const TokenString full = concat(c, v);
  return prefix_probability(lm, v, c) * lm.next_distribution(full).eos();
}

double string_log_probability(const LanguageModel& lm, TokenView v, TokenView c) {
  const TokenString full = concat(c, v);
  return prefix_log_probability(lm, v, c) + std::log(lm.next_distribution(full).eos());
}

Continuation sample(const LanguageModel& lm, TokenView c, std::size_t max_len,
                    RandomStream& rng) {
  Continuation out;
  TokenString ctx(c.begin(), c.end());
  while (out.tokens.size() < max_len) {
    const auto next = lm.next_distribution(ctx).draw(rng.uniform());
    if (!next) return out;
    out.tokens.push_back(*next);
    ctx.push_back(*next);
  }
  out.complete = false;
  return out;
}

namespace {

std::size_t count_strings(std::size_t alphabet_size, std::size_t max_len) {
  std::size_t total = 0;
  std::size_t level = 1;
  for (std::size_t k = 0; k <= max_len; ++k) {
    total += level;
    if (total > kMaxEnumeration) return total;
    if (k < max_len) {
      if (level > kMaxEnumeration / alphabet_size + 1) return kMaxEnumeration + 1;
      level *= alphabet_size;
    }
  }
  return total;
}

void guard(const LanguageModel& lm, std::size_t max_len) {
  const std::size_t n = count_strings(lm.alphabet().size(), max_len);
  if (n > kMaxEnumeration) {
    std::ostringstream msg;
    msg << "enumeration of " << lm.alphabet().size() << "^<=" << max_len
        << " strings exceeds the limit of " << kMaxEnumeration;
    throw DataError(msg.str());
  }
}

// Depth-first walk over all strings of length <= max_len, carrying the prefix
// probability. visit(prefix, prefix_prob, dist_after_prefix).
template <typename Visit>
void walk(const LanguageModel& lm, TokenString& ctx, std::size_t context_len,
          std::size_t max_len, double prefix_prob, Visit& visit) {
  const std::size_t depth = ctx.size() - context_len;
  if (depth == max_len) {
    visit(TokenView(ctx).subspan(context_len), prefix_prob, nullptr);
    return;
  }
  const NextSymbolDistribution dist = lm.next_distribution(ctx);
  visit(TokenView(ctx).subspan(context_len), prefix_prob, &dist);
  for (std::size_t u = 0; u < dist.size(); ++u) {
    ctx.push_back(static_cast<Symbol>(u));
    walk(lm, ctx, context_len, max_len, prefix_prob * dist.prob(static_cast<Symbol>(u)),
         visit);
    ctx.pop_back();
  }
}

}  // namespace

Enumeration enumerate_distribution(const LanguageModel& lm, TokenView c,
                                   std::size_t max_len) {
  guard(lm, max_len);
  Enumeration out;
  TokenString ctx(c.begin(), c.end());
  auto visit = [&](TokenView v, double prefix_prob, const NextSymbolDistribution* dist) {
    const double eos = dist ? dist->eos() : lm.next_distribution(concat(c, v)).eos();
    const double p = prefix_prob * eos;
    out.probs.emplace(TokenString(v.begin(), v.end()), p);
    out.mass += p;
  };
  walk(lm, ctx, c.size(), max_len, 1.0, visit);
  return out;
}

void for_each_truncated_outcome(
    const LanguageModel& lm, TokenView c, std::size_t max_len,
    const std::function<void(const Continuation&, double prob)>& visit) {
  guard(lm, max_len);
  TokenString ctx(c.begin(), c.end());
  Continuation scratch;
  auto step = [&](TokenView v, double prefix_prob, const NextSymbolDistribution* dist) {
    scratch.tokens.assign(v.begin(), v.end());
    scratch.complete = dist != nullptr;
    visit(scratch, dist ? prefix_prob * dist->eos() : prefix_prob);
  };
  walk(lm, ctx, c.size(), max_len, 1.0, step);
}

std::vector<TruncatedOutcome> truncated_sampling_distribution(const LanguageModel& lm,
                                                              TokenView c,
                                                              std::size_t max_len) {
  std::vector<TruncatedOutcome> out;
  for_each_truncated_outcome(lm, c, max_len, [&](const Continuation& v, double p) {
    out.push_back({v, p});
  });
  return out;
}

MemorylessBackend::MemorylessBackend(Alphabet alphabet, std::vector<double> symbol_probs,
                                     double eos_prob)
    : alphabet_(std::move(alphabet)), dist_(std::move(symbol_probs), eos_prob) {
  if (dist_.size() != alphabet_.size()) {
    throw DataError("memoryless backend: one probability per alphabet symbol required");
  }
}

std::string MemorylessBackend::describe() const {
  std::ostringstream out;
  out.precision(17);
  out << "memoryless(";
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    out << alphabet_.token(static_cast<Symbol>(i)) << '=' << dist_.prob(static_cast<Symbol>(i))
        << ',';
  }
  out << alphabet_.eos_marker() << '=' << dist_.eos() << ')';
  return out.str();
}

}  // namespace gensurp
