#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gensurp/analysis.hpp"

namespace gensurp {

inline constexpr double kFrequencyFloor = 0.1;  // per million, for OOV words

struct Stimulus {
  std::string item_id;
  std::string sentence_id;
  int word_index = 0;
  std::string context;
  std::string target;
  std::size_t target_length = 0;   // UTF-8 code points
  std::size_t context_length = 0;  // whitespace-separated words
  double frequency = kFrequencyFloor;  // per million
  std::map<std::string, std::optional<double>> measurements;
};

class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::unordered_map<std::string, double> per_million)
      : table_(std::move(per_million)) {}
  // Per-million value, or kFrequencyFloor for words not in the table.
  double lookup(const std::string& word) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, double> table_;
};

// word TAB count_per_million, one entry per line.
FrequencyTable load_frequencies(const std::filesystem::path& path);

inline constexpr const char* kDatasetKeyColumns[] = {"item_id", "sentence_id", "word_index",
                                                      "context", "target"};

// Header row required; every column after the five key columns is a
// measurement. Empty cells are absent measurements.
std::vector<Stimulus> load_dataset(const std::filesystem::path& path,
                                   const FrequencyTable& frequencies = {});

std::size_t utf8_length(std::string_view text);

// log(per-million + 1)
double frequency_predictor(double per_million);

struct ClozeEstimate {
  double probability = 0.0;
  double entropy = 0.0;  // nats
};

// Laplace-smoothed response proportions over the observed responses plus the target.
ClozeEstimate laplace_cloze(const std::map<std::string, int>& counts, const std::string& target,
                            double alpha = 1.0);

// measure name -> item_id -> value
using PredictorTable = std::unordered_map<std::string, std::unordered_map<std::string, double>>;

// Predictors available from the stimulus itself; anything else is looked up in
// the PredictorTable, then among the stimulus measurements.
inline constexpr const char* kBaselinePredictors[] = {"target_length", "frequency",
                                                      "context_length"};

struct RegressionSpec {
  std::string response;
  std::vector<std::string> baseline{"target_length", "frequency", "context_length"};
  std::vector<std::string> targets;
  // Baseline predictors left out of the target regressor, so a target can
  // stand in for one of them instead of being added on top.
  std::vector<std::string> replaced;
  int spillover_lags = 0;
  std::size_t folds = 10;
  std::size_t seeds = 100;
  std::uint64_t seed = 0;
  // Assign whole sentences to folds instead of single items.
  bool group_by_sentence = false;
  std::size_t permutation_resamples = 10000;
  unsigned jobs = 1;
};

struct Design {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> columns;
  // Columns forming the baseline regressor (intercept included).
  std::vector<Eigen::Index> baseline_columns;
  // Columns forming the target regressor.
  std::vector<Eigen::Index> target_columns;
  std::vector<std::string> item_ids;
  std::vector<std::string> sentence_ids;
  std::size_t dropped = 0;
};

// Columns: intercept, then for each lag 0..spillover_lags the baseline
// predictors followed by the target predictors (context_length only at lag 0,
// named "name@-k" at lag k). The target regressor is every
// column except the replaced baseline predictors. Rows with any missing cell are
// dropped and counted. Throws DataError when nothing survives.
Design build_design(const RegressionSpec& spec, std::span<const Stimulus> stimuli,
                    const PredictorTable& estimates);

struct OlsFit {
  Eigen::VectorXd beta;
  bool rank_deficient = false;
};

// Pivots below this fraction of the largest one count as zero.
inline constexpr double kRankTolerance = 1e-10;

// Least squares via column-pivoting QR; least-norm solution (and a warning
// unless `warn` is false) when X is rank deficient.
OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool warn = true);

// 1 − SS_res / SS_tot with SS_tot about the mean of y; 0 when y is constant.
double r_squared(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// Fold index per row; depends only on (seed, item ids) or (seed, sentence ids).
std::vector<std::size_t> assign_folds(std::span<const std::string> keys, std::size_t folds,
                                      std::uint64_t seed);

struct EvalReport {
  std::string response;
  std::vector<std::string> targets;
  std::vector<std::string> baseline;
  std::vector<std::string> replaced;
  std::vector<double> baseline_r2;  // seeds × folds, seed-major
  std::vector<double> target_r2;
  std::vector<double> delta_r2;
  Interval delta;                   // mean with percentile interval
  double p_value = 1.0;
  std::size_t n_rows = 0;
  std::size_t dropped_rows = 0;
  std::size_t rank_deficient_fits = 0;
};

EvalReport delta_r2_cv(const RegressionSpec& spec, std::span<const Stimulus> stimuli,
                       const PredictorTable& estimates);
EvalReport delta_r2_cv(const RegressionSpec& spec, const Design& design);

// One-sided paired sign-flip test of H0: target <= baseline, statistic = mean
// difference. p = (1 + #{resampled >= observed}) / (resamples + 1).
double permutation_test(std::span<const double> baseline, std::span<const double> target,
                        std::size_t resamples = 10000, std::uint64_t seed = 0);

std::string to_json(const EvalReport& report);

}  // namespace gensurp
