#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gensurp/language_model.hpp"
#include "gensurp/measures.hpp"

namespace gensurp {

enum class EstimateMode { exact, mc };

std::string_view to_string(EstimateMode mode);
EstimateMode parse_mode(std::string_view text);

struct Estimate {
  double value = 0.0;
  EstimateMode mode = EstimateMode::exact;
  // Sampling parameters; meaningful only when mode == mc.
  std::size_t n = 0;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
};

// N ancestral samples from p(· | c) that every measure evaluated on the same
// (c, N, L, seed, stream_key) can share.
struct SampleBatch {
  std::vector<Continuation> continuations;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_key = 0;
};

// The rng stream is a pure function of (seed, stream_key); callers pass a key
// identifying the stimulus so scheduling cannot change results.
SampleBatch simulate_batch(const LanguageModel& lm, TokenView c, std::size_t n,
                           std::size_t max_len, std::uint64_t seed,
                           std::uint64_t stream_key = 0);

// f((1/N) Σ scores)
double warped_mean(const GSModel& model, std::span<const double> scores);

Estimate estimate_from_batch(const GSModel& model, TokenView w, const ScoreContext& ctx,
                             const SampleBatch& batch);

Estimate estimate_mc(const GSModel& model, TokenView w, TokenView c, const LanguageModel& lm,
                     const Representer* rep, std::size_t n, std::size_t max_len,
                     std::uint64_t seed, std::uint64_t stream_key = 0);

struct ExactOptions {
  // Upper bound on |Σ| + 1 for the double sum behind exp_next_info_value.
  std::size_t max_pair_outcomes = 4096;
};

bool supports_exact(const GSModel& model, const LanguageModel& lm,
                    const ExactOptions& options = {});

// Closed-form value. Surprisal and PMI are computed without the warping ε.
// Throws DataError when the model has no exact path.
Estimate estimate_exact(const GSModel& model, TokenView w, TokenView c,
                        const LanguageModel& lm, const Representer* rep = nullptr,
                        const ExactOptions& options = {});

// Combines token-level estimates of one word: product for the probability
// family, sum for surprisal-like and distance-like measures. Anticipatory
// measures depend on the context only and are rejected.
double aggregate_word(const GSModel& model, std::span<const double> token_estimates);

// Exact word-level value from per-token closed forms:
// token i is scored in context c · w[1..i−1], then aggregate_word().
Estimate estimate_word_exact(const GSModel& model, TokenView w, TokenView c,
                             const LanguageModel& lm, const Representer* rep = nullptr);

}  // namespace gensurp
