#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gensurp/analysis.hpp"
#include "gensurp/cache.hpp"
#include "gensurp/config.hpp"
#include "gensurp/eval.hpp"
#include "gensurp/language_model.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

// Everything a command needs, loaded once from a validated config.
struct Session {
  RunConfig config;
  std::unique_ptr<LanguageModel> lm;
  std::unique_ptr<EmbeddingTable> embeddings;
  std::unique_ptr<Representer> rep;
  std::vector<Stimulus> stimuli;
  std::vector<TokenString> contexts;  // tokenized per backend
  std::vector<TokenString> targets;
  std::vector<GSModel> measures;
};

// The native alphabet is the corpus vocabulary plus every dataset word, so
// unseen dataset words get smoothed mass instead of failing.
Session open_session(const RunConfig& config);

namespace outputs {
inline std::filesystem::path estimates(const RunConfig& c) { return c.output / "estimates.tsv"; }
inline std::filesystem::path identity(const RunConfig& c) { return c.output / "estimates.identity"; }
inline std::filesystem::path manifest(const RunConfig& c) { return c.output / "manifest.json"; }
inline std::filesystem::path variance(const RunConfig& c) { return c.output / "variance.tsv"; }
inline std::filesystem::path runtime(const RunConfig& c) { return c.output / "runtime.tsv"; }
inline std::filesystem::path variance_plot(const RunConfig& c) { return c.output / "variance_plot.json"; }
inline std::filesystem::path gaps(const RunConfig& c) { return c.output / "gaps.tsv"; }
inline std::filesystem::path evaluation(const RunConfig& c) { return c.output / "evaluation.json"; }
inline std::filesystem::path evaluation_summary(const RunConfig& c) { return c.output / "evaluation.tsv"; }
}  // namespace outputs

// Opens the estimate cache of the output directory. The cache key does not
// cover backend, epsilon, batch policy, dataset or embeddings, so those are
// pinned by a sidecar identity file; a mismatch raises ConfigError.
EstimateCache open_cache(const RunConfig& config);

// Adds (or replaces) one stage in the output directory's manifest. A manifest
// written under a different config is started afresh.
void record_stage(const Session& session, const std::string& stage, double wall_time_s,
                  const std::vector<std::filesystem::path>& produced);

struct EstimateStats {
  std::size_t computed = 0;
  std::size_t cached = 0;
};

// One estimate per (stimulus, measure): exact for closed-form measures when
// prefer_exact is set, Monte Carlo otherwise, and additionally Monte Carlo for
// closed-form measures under exact_vs_mc. Stimuli are processed in chunks;
// each finished chunk is appended in stimulus order, so an aborted run keeps
// its completed chunks and a rerun computes only what is missing.
EstimateStats run_estimate(const Session& session);

// Word-level Monte Carlo estimate. Responsive measures over multi-token words
// combine per-token estimates as the exact path does; anticipatory measures
// use the word's context only.
double estimate_word_mc(const Session& session, const GSModel& model, std::size_t stimulus);

// Value used downstream for (measure, item): exact when available, else MC at
// the configured (N, L, seed). Missing pairs are reported in `gaps`.
struct Gap {
  std::string item_id;
  std::string measure;
};
PredictorTable collect_estimates(const Session& session, const EstimateCache& cache, std::vector<Gap>& gaps);

struct ExactVsMc {
  std::string measure;
  std::size_t items = 0;
  double pearson = 0.0;   // NaN when undefined
  double spearman = 0.0;
};

struct CorrelateResult {
  CorrelationMatrix pearson;
  CorrelationMatrix spearman;
  std::vector<ExactVsMc> exact_vs_mc;
};

// Throws DataError (after writing gaps.tsv) when any estimate is missing.
CorrelateResult run_correlate(const Session& session);

struct EvaluationEntry {
  std::string baseline_kind;  // "default" or "combined"
  EvalReport report;
};

// Default-baseline report per (response, measure); with surprisal and
// exp_next_surprisal configured, also a combined-baseline report per other
// anticipatory measure, which replaces exp_next_surprisal in the target regressor.
std::vector<EvaluationEntry> run_evaluate(const Session& session);

struct VarianceResult {
  std::vector<VarianceCell> cells;
  std::vector<RuntimeRow> runtime;
  nlohmann::json plot;
};

// Bootstrap CV, resample correlation and runtime for the sampling-based
// measures (those without a closed form) over the first
// variance.max_stimuli stimuli.
VarianceResult run_variance(const Session& session);

// Plot data: {"title", "panels": [{"name", "x_label", "y_label",
// "series": [{"label", "points": [{"n", "mean", "ci_low", "ci_high"}]}]}]}.
nlohmann::json variance_plot_data(const std::vector<VarianceCell>& cells, const std::vector<RuntimeRow>& runtime);

// Checks the plot-data schema; throws DataError naming the offending field.
void validate_plot_data(const nlohmann::json& plot);
// One TSV row per point: panel, series, n, mean, ci_low, ci_high.
std::string plot_series_tsv(const nlohmann::json& plot);
// Stacked line charts on a log2 N axis, one per panel. Byte-identical for
// identical input; empty panels show a "no data" placeholder.
std::string render_svg(const nlohmann::json& plot);

// Reads plot JSON, writes <stem>.series.tsv and then <stem>.svg next to
// `svg_out` (or next to the input when empty). Returns the files written.
std::vector<std::filesystem::path> run_plot(const std::filesystem::path& plot_json,
                                            const std::filesystem::path& svg_out = {});

}  // namespace gensurp
