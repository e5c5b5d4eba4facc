#include "gensurp/estimator.hpp"

#include <chrono>
#include <cmath>

#include "gensurp/error.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string_view to_string(EstimateMode mode) {
  return mode == EstimateMode::exact ? "exact" : "mc";
}

EstimateMode parse_mode(std::string_view text) {
  if (text == "exact") return EstimateMode::exact;
  if (text == "mc") return EstimateMode::mc;
  throw DataError("unknown estimate mode '" + std::string(text) + "'");
}

SampleBatch simulate_batch(const LanguageModel& lm, TokenView c, std::size_t n,
                           std::size_t max_len, std::uint64_t seed, std::uint64_t stream_key) {
  if (n == 0) throw DataError("sample size N must be >= 1");
  RandomStream rng(substream_seed(seed, stream_key));
  SampleBatch batch;
  batch.continuations = lm.sample_batch(c, n, max_len, rng);
  batch.max_len = max_len;
  batch.seed = seed;
  batch.stream_key = stream_key;
  return batch;
}

double warped_mean(const GSModel& model, std::span<const double> scores) {
  if (scores.empty()) throw DataError("cannot average an empty score vector");
  double total = 0.0;
  for (double s : scores) total += s;
  return model.warping(total / static_cast<double>(scores.size()));
}

Estimate estimate_from_batch(const GSModel& model, TokenView w, const ScoreContext& ctx,
                             const SampleBatch& batch) {
  const auto start = Clock::now();
  const auto scores = score_batch(model, batch.continuations, w, ctx);
  Estimate e;
  e.value = warped_mean(model, scores);
  e.mode = EstimateMode::mc;
  e.n = batch.continuations.size();
  e.max_len = batch.max_len;
  e.seed = batch.seed;
  e.wall_time_s = seconds_since(start);
  return e;
}

Estimate estimate_mc(const GSModel& model, TokenView w, TokenView c, const LanguageModel& lm,
                     const Representer* rep, std::size_t n, std::size_t max_len,
                     std::uint64_t seed, std::uint64_t stream_key) {
  const auto start = Clock::now();
  const SampleBatch batch = simulate_batch(lm, c, n, max_len, seed, stream_key);
  const ScoreContext ctx{&lm, rep, TokenString(c.begin(), c.end())};
  Estimate e = estimate_from_batch(model, w, ctx, batch);
  e.wall_time_s = seconds_since(start);
  return e;
}

bool supports_exact(const GSModel& model, const LanguageModel& lm, const ExactOptions& options) {
  if (model.closed_form) return true;
  return model.scoring == ScoringKind::next_sym_info_value &&
         lm.alphabet().size() + 1 <= options.max_pair_outcomes;
}

Estimate estimate_exact(const GSModel& model, TokenView w, TokenView c, const LanguageModel& lm,
                        const Representer* rep, const ExactOptions& options) {
  const auto start = Clock::now();
  if (!supports_exact(model, lm, options)) {
    throw DataError("measure '" + model.name + "' has no exact evaluation path");
  }
  double value = 0.0;
  switch (model.scoring) {
    case ScoringKind::indicator:
      if (model.warping.kind == WarpKind::identity) {
        value = prefix_probability(lm, w, c);
      } else if (model.warping.kind == WarpKind::neglog) {
        value = -prefix_log_probability(lm, w, c);
      } else {
        value = prefix_log_probability(lm, w, c);
      }
      break;
    case ScoringKind::next_sym_surprisal: {
      const auto next = lm.next_distribution(c);
      for (double p : next.symbol_probs()) {
        if (p > 0.0) value -= p * std::log(p);
      }
      if (next.eos() > 0.0) value -= next.eos() * std::log(next.eos());
      break;
    }
    case ScoringKind::next_sym_probability: {
      const auto next = lm.next_distribution(c);
      for (double p : next.symbol_probs()) value += p * p;
      value += next.eos() * next.eos();
      break;
    }
    case ScoringKind::pmi: {
      // E[p(c) · 1{w[1] ⪯ v}] = p(c) · π(w[1] | c), then the log warp.
      const double log_context = prefix_log_probability(lm, c, TokenView{});
      const double log_first = w.empty() ? 0.0 : prefix_log_probability(lm, w.first(1), c);
      const double log_mean = log_context + log_first;
      value = model.warping.kind == WarpKind::log      ? log_mean
              : model.warping.kind == WarpKind::neglog ? -log_mean
                                                       : std::exp(log_mean);
      break;
    }
    case ScoringKind::next_sym_info_value: {
      if (!rep) throw DataError("measure '" + model.name + "' needs an embedding table");
      const auto next = lm.next_distribution(c);
      const std::size_t k = next.size() + 1;
      auto prob = [&](std::size_t i) {
        return i < next.size() ? next.prob(static_cast<Symbol>(i)) : next.eos();
      };
      auto vec = [&](std::size_t i) {
        return i < next.size() ? rep->symbol(static_cast<Symbol>(i)) : rep->first_symbol({});
      };
      for (std::size_t a = 0; a < k; ++a) {
        const double pa = prob(a);
        if (pa == 0.0) continue;
        double inner = 0.0;
        for (std::size_t b = 0; b < k; ++b) {
          const double pb = prob(b);
          if (pb == 0.0 || a == b) continue;
          inner += pb * cosine_distance(vec(a), vec(b));
        }
        value += pa * inner;
      }
      value = model.warping(value);
      break;
    }
    default:
      throw DataError("measure '" + model.name + "' has no exact evaluation path");
  }
  Estimate e;
  e.value = value;
  e.mode = EstimateMode::exact;
  e.wall_time_s = seconds_since(start);
  return e;
}

double aggregate_word(const GSModel& model, std::span<const double> token_estimates) {
  if (model.anticipatory) {
    throw DataError("anticipatory measure '" + model.name +
                    "' depends on the context only and is not aggregated over tokens");
  }
  if (token_estimates.empty()) throw DataError("no token-level estimates to aggregate");
  const bool product =
      model.scoring == ScoringKind::indicator && model.warping.kind == WarpKind::identity;
  double acc = product ? 1.0 : 0.0;
  for (double x : token_estimates) acc = product ? acc * x : acc + x;
  return acc;
}

Estimate estimate_word_exact(const GSModel& model, TokenView w, TokenView c,
                             const LanguageModel& lm, const Representer* rep) {
  const auto start = Clock::now();
  if (w.empty()) throw DataError("word-level estimate needs a non-empty target");
  std::vector<double> parts;
  parts.reserve(w.size());
  TokenString ctx(c.begin(), c.end());
  for (Symbol u : w) {
    const Symbol token[] = {u};
    parts.push_back(estimate_exact(model, token, ctx, lm, rep).value);
    ctx.push_back(u);
  }
  Estimate e;
  e.value = aggregate_word(model, parts);
  e.mode = EstimateMode::exact;
  e.wall_time_s = seconds_since(start);
  return e;
}

}  // namespace gensurp
