#include "gensurp/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "gensurp/error.hpp"
#include "gensurp/parallel.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_sequence_level(const GSModel& m) {
  // Measures whose score looks past the first symbol of a continuation.
  switch (m.scoring) {
    case ScoringKind::indicator:
    case ScoringKind::info_value:
    case ScoringKind::entropy:
    case ScoringKind::expected_info_value:
    case ScoringKind::similarity_adjusted:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<double> bootstrap_scores(std::span<const double> scores, std::size_t resamples,
                                     std::uint64_t seed, const WarpingFunction& warp) {
  if (scores.empty()) throw DataError("bootstrap needs at least one score");
  if (resamples == 0) throw DataError("bootstrap needs at least one resample");
  RandomStream rng(seed);
  const std::size_t n = scores.size();
  std::vector<double> out(resamples);
  for (auto& value : out) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += scores[rng.below(n)];
    value = warp(total / static_cast<double>(n));
  }
  return out;
}

Dispersion coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) throw DataError("coefficient of variation of an empty sample");
  Dispersion d;
  const double n = static_cast<double>(values.size());
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - d.mean) * (v - d.mean);
  d.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  if (std::abs(d.mean) >= kMinMean) d.cv = d.sd / std::abs(d.mean);
  return d;
}

Interval mean_interval(std::span<const double> values) {
  Interval out;
  out.count = values.size();
  if (values.empty()) {
    out.mean = out.low = out.high = kNaN;
    return out;
  }
  const auto d = coefficient_of_variation(values);
  const double half = values.size() > 1 ? 1.96 * d.sd / std::sqrt(static_cast<double>(values.size())) : 0.0;
  out.mean = d.mean;
  out.low = d.mean - half;
  out.high = d.mean + half;
  return out;
}

Interval percentile_interval(std::span<const double> values) {
  Interval out;
  out.count = values.size();
  if (values.empty()) {
    out.mean = out.low = out.high = kNaN;
    return out;
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };
  out.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  out.low = quantile(0.025);
  out.high = quantile(0.975);
  return out;
}

ResampleCorrelation resample_correlation(const Eigen::MatrixXd& estimates,
                                         bool keep_coefficients) {
  const auto m = estimates.rows();
  const auto b = estimates.cols();
  if (m < 3) throw DataError("resample correlation needs at least 3 stimuli");
  if (b < 2) throw DataError("resample correlation needs at least 2 resamples");

  Eigen::MatrixXd z = estimates.rowwise() - estimates.colwise().mean();
  std::vector<bool> degenerate(static_cast<std::size_t>(b), false);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double norm = z.col(j).norm();
    const double scale = std::max(1.0, estimates.col(j).cwiseAbs().maxCoeff());
    if (!(norm > 1e-13 * scale)) {
      degenerate[static_cast<std::size_t>(j)] = true;
      z.col(j).setZero();
    } else {
      z.col(j) /= norm;
    }
  }
  const Eigen::MatrixXd gram = z.transpose() * z;

  ResampleCorrelation out;
  out.pairs = static_cast<std::size_t>(b) * static_cast<std::size_t>(b - 1) / 2;
  std::vector<double> defined;
  defined.reserve(out.pairs);
  if (keep_coefficients) out.coefficients.reserve(out.pairs);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) {
      if (degenerate[static_cast<std::size_t>(i)] || degenerate[static_cast<std::size_t>(j)]) {
        ++out.flagged;
        if (keep_coefficients) out.coefficients.push_back(kNaN);
        continue;
      }
      const double r = std::clamp(gram(i, j), -1.0, 1.0);
      defined.push_back(r);
      if (keep_coefficients) out.coefficients.push_back(r);
    }
  }
  out.summary = mean_interval(defined);
  return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    // Ranks i+1 .. j+1 share their average.
    const double avg = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

CorrelationMatrix correlation_matrix(const std::vector<std::string>& names,
                                     const std::vector<std::vector<double>>& columns,
                                     CorrelationMethod method) {
  if (names.size() != columns.size()) throw DataError("correlation_matrix: names/columns mismatch");
  const auto k = static_cast<Eigen::Index>(names.size());
  CorrelationMatrix out;
  out.method = method;
  out.names = names;
  out.values = Eigen::MatrixXd::Constant(k, k, kNaN);
  std::vector<std::vector<double>> prepared = columns;
  if (method == CorrelationMethod::spearman) {
    for (auto& c : prepared) c = average_ranks(c);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    out.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const auto r = pearson(prepared[static_cast<std::size_t>(i)], prepared[static_cast<std::size_t>(j)]);
      const double v = r ? *r : kNaN;
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

std::vector<VarianceCell> variance_analysis(const LanguageModel& lm, const Representer* rep,
                                            std::span<const StimulusRef> stimuli,
                                            std::span<const GSModel> measures,
                                            const VarianceOptions& options) {
  if (stimuli.size() < 3) throw DataError("variance analysis needs at least 3 stimuli");
  std::vector<VarianceCell> cells;
  const auto m = static_cast<Eigen::Index>(stimuli.size());
  const auto b = static_cast<Eigen::Index>(options.resamples);

  for (std::size_t n : options.sample_sizes) {
    for (std::size_t len : options.max_lengths) {
      std::vector<Eigen::MatrixXd> resampled(measures.size(), Eigen::MatrixXd(m, b));
      std::vector<std::vector<std::optional<double>>> cvs(
          measures.size(), std::vector<std::optional<double>>(stimuli.size()));
      std::vector<std::vector<double>> times(measures.size(), std::vector<double>(stimuli.size()));

      parallel_for(stimuli.size(), options.jobs, [&](std::size_t s) {
        const auto& stim = stimuli[s];
        const std::string key = stim.id + "/N=" + std::to_string(n) + "/L=" + std::to_string(len);
        const auto sim_start = Clock::now();
        const SampleBatch batch = simulate_batch(lm, stim.context, n, len, options.seed, stable_hash(key));
        const double sim_time = seconds_since(sim_start);
        const ScoreContext ctx{&lm, rep, stim.context};
        const std::uint64_t boot_seed = substream_seed(options.seed ^ 0xb007ULL, stable_hash(key));
        for (std::size_t k = 0; k < measures.size(); ++k) {
          const auto score_start = Clock::now();
          const auto scores = score_batch(measures[k], batch.continuations, stim.target, ctx);
          times[k][s] = sim_time + seconds_since(score_start);
          const auto boot = bootstrap_scores(scores, options.resamples, boot_seed, measures[k].warping);
          for (Eigen::Index j = 0; j < b; ++j) {
            resampled[k](static_cast<Eigen::Index>(s), j) = boot[static_cast<std::size_t>(j)];
          }
          cvs[k][s] = coefficient_of_variation(boot).cv;
        }
      });

      for (std::size_t k = 0; k < measures.size(); ++k) {
        VarianceCell cell;
        cell.measure = measures[k].name;
        cell.n = n;
        cell.max_len = len;
        std::vector<double> defined;
        for (const auto& cv : cvs[k]) {
          if (cv) {
            defined.push_back(*cv);
          } else {
            ++cell.cv_excluded;
          }
        }
        cell.cv = mean_interval(defined);
        cell.correlation = resample_correlation(resampled[k]);
        cell.runtime_s = std::accumulate(times[k].begin(), times[k].end(), 0.0) /
                         static_cast<double>(stimuli.size());
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::vector<RuntimeRow> profile_runtime(const LanguageModel& lm, const Representer* rep,
                                        std::span<const StimulusRef> stimuli,
                                        std::span<const GSModel> sampling_measures,
                                        std::span<const GSModel> exact_measures,
                                        std::span<const std::size_t> sample_sizes,
                                        std::span<const std::size_t> max_lengths,
                                        std::uint64_t seed) {
  if (stimuli.empty()) throw DataError("runtime profiling needs at least one stimulus");
  std::vector<RuntimeRow> rows;
  const double count = static_cast<double>(stimuli.size());
  for (const auto& model : sampling_measures) {
    for (std::size_t len : max_lengths) {
      if (!is_sequence_level(model) && len != max_lengths.front()) continue;
      for (std::size_t n : sample_sizes) {
        const auto start = Clock::now();
        for (const auto& stim : stimuli) {
          estimate_mc(model, stim.target, stim.context, lm, rep, n, len, seed, stable_hash(stim.id));
        }
        rows.push_back({model.name, EstimateMode::mc, n, len, seconds_since(start) / count});
      }
    }
  }
  for (const auto& model : exact_measures) {
    const auto start = Clock::now();
    for (const auto& stim : stimuli) estimate_exact(model, stim.target, stim.context, lm, rep);
    rows.push_back({model.name, EstimateMode::exact, 0, 0, seconds_since(start) / count});
  }
  return rows;
}

}  // namespace gensurp
