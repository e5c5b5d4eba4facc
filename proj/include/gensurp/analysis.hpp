#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gensurp/estimator.hpp"
#include "gensurp/measures.hpp"

namespace gensurp {

// ---- resampling statistics ----

// B bootstrap resamples of the score vector (N indices drawn uniformly with
// replacement each), returning f(resample mean) for each.
std::vector<double> bootstrap_scores(std::span<const double> scores, std::size_t resamples,
                                     std::uint64_t seed,
                                     const WarpingFunction& warp = WarpingFunction{});

struct Dispersion {
  double mean = 0.0;
  double sd = 0.0;               // sample sd, denominator n − 1
  std::optional<double> cv;      // sd / |mean|; empty when |mean| < kMinMean
};

inline constexpr double kMinMean = 1e-9;

Dispersion coefficient_of_variation(std::span<const double> values);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

// Mean with a normal-approximation 95% interval (mean ± 1.96 · se).
Interval mean_interval(std::span<const double> values);

// Percentile interval (2.5%, 97.5%) with linear interpolation between order statistics.
Interval percentile_interval(std::span<const double> values);

struct ResampleCorrelation {
  Interval summary;             // over the defined pairwise coefficients
  std::size_t pairs = 0;        // B choose 2
  std::size_t flagged = 0;      // pairs involving a zero-variance column
  std::vector<double> coefficients;  // row-major upper triangle, NaN when flagged
};

// estimates: M stimuli × B resamples. Pearson r for every unordered column pair.
ResampleCorrelation resample_correlation(const Eigen::MatrixXd& estimates,
                                         bool keep_coefficients = false);

// Empty on length < 3, length mismatch or zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
// Rank correlation with average ranks for ties.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

enum class CorrelationMethod { pearson, spearman };

struct CorrelationMatrix {
  CorrelationMethod method = CorrelationMethod::pearson;
  std::vector<std::string> names;
  // Symmetric, unit diagonal; NaN where undefined.
  Eigen::MatrixXd values;
};

CorrelationMatrix correlation_matrix(const std::vector<std::string>& names,
                                     const std::vector<std::vector<double>>& columns,
                                     CorrelationMethod method);

// ---- estimator studies over a set of stimuli ----

struct StimulusRef {
  std::string id;
  TokenString context;
  TokenString target;
};

struct VarianceCell {
  std::string measure;
  std::size_t n = 0;
  std::size_t max_len = 0;
  Interval cv;                    // mean CV over stimuli with a defined CV
  std::size_t cv_excluded = 0;    // stimuli with |μ_m| < kMinMean
  ResampleCorrelation correlation;
  double runtime_s = 0.0;         // mean seconds per stimulus (simulate + score)
};

struct VarianceOptions {
  std::vector<std::size_t> sample_sizes{4, 8, 16, 32, 64, 128, 256, 512};
  std::vector<std::size_t> max_lengths{5};
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

// Bootstrap CV and resample correlation per (measure, N, L). One batch per
// (stimulus, N, L) is shared by all measures.
std::vector<VarianceCell> variance_analysis(const LanguageModel& lm, const Representer* rep,
                                            std::span<const StimulusRef> stimuli,
                                            std::span<const GSModel> measures,
                                            const VarianceOptions& options);

struct RuntimeRow {
  std::string measure;
  EstimateMode mode = EstimateMode::mc;
  std::size_t n = 0;
  std::size_t max_len = 0;
  double seconds_per_stimulus = 0.0;
};

// Wall-clock seconds per stimulus for each sampling measure over the N × L grid,
// each measure drawing its own batch; plus one row per exact measure.
std::vector<RuntimeRow> profile_runtime(const LanguageModel& lm, const Representer* rep,
                                        std::span<const StimulusRef> stimuli,
                                        std::span<const GSModel> sampling_measures,
                                        std::span<const GSModel> exact_measures,
                                        std::span<const std::size_t> sample_sizes,
                                        std::span<const std::size_t> max_lengths,
                                        std::uint64_t seed);

}  // namespace gensurp
