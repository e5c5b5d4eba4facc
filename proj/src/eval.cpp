#include "gensurp/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gensurp/alphabet.hpp"
#include "gensurp/error.hpp"
#include "gensurp/parallel.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) return std::nullopt;
  return value;
}

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

bool is_missing_token(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

// A word's position is not spilled over: context_length at lag k is the
// current value minus k, collinear with the intercept.
bool lagged(const std::string& name, int lag) { return lag == 0 || name != "context_length"; }

std::string lag_name(const std::string& name, int lag) {
  return lag == 0 ? name : name + "@-" + std::to_string(lag);
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double FrequencyTable::lookup(const std::string& word) const {
  const auto it = table_.find(word);
  return it == table_.end() ? kFrequencyFloor : it->second;
}

FrequencyTable load_frequencies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open frequency file " + path.string());
  std::unordered_map<std::string, double> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2) fail_at(path, lineno, "expected 'word<TAB>count_per_million'");
    const auto value = parse_double(fields[1]);
    if (!value) {
      if (lineno == 1) continue;  // header
      fail_at(path, lineno, "frequency '" + fields[1] + "' is not a number");
    }
    if (!std::isfinite(*value) || *value < 0.0) fail_at(path, lineno, "frequency must be finite and >= 0");
    table[fields[0]] = *value;
  }
  return FrequencyTable(std::move(table));
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char ch : text) n += (ch & 0xC0) != 0x80;
  return n;
}

double frequency_predictor(double per_million) { return std::log(per_million + 1.0); }

std::vector<Stimulus> load_dataset(const std::filesystem::path& path, const FrequencyTable& frequencies) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty dataset");
  strip_cr(line);
  const auto header = split_tabs(line);

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second) fail_at(path, 1, "duplicate column '" + header[i] + "'");
  }
  for (const char* key : kDatasetKeyColumns) {
    if (!position.count(key)) fail_at(path, 1, std::string("missing required column '") + key + "'");
  }
  std::vector<std::size_t> measurement_columns;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find_if(std::begin(kDatasetKeyColumns), std::end(kDatasetKeyColumns),
                     [&](const char* k) { return header[i] == k; }) == std::end(kDatasetKeyColumns)) {
      measurement_columns.push_back(i);
    }
  }

  std::vector<Stimulus> out;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) {
      fail_at(path, lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(fields.size()));
    }
    Stimulus s;
    s.item_id = fields[position["item_id"]];
    s.sentence_id = fields[position["sentence_id"]];
    s.context = fields[position["context"]];
    s.target = fields[position["target"]];
    if (s.item_id.empty()) fail_at(path, lineno, "empty item_id");
    if (!seen.insert(s.item_id).second) fail_at(path, lineno, "duplicate item_id '" + s.item_id + "'");
    const auto& index_text = fields[position["word_index"]];
    const auto [end, ec] = std::from_chars(index_text.data(), index_text.data() + index_text.size(), s.word_index);
    if (ec != std::errc() || end != index_text.data() + index_text.size() || s.word_index < 0) {
      fail_at(path, lineno, "word_index '" + index_text + "' is not a non-negative integer");
    }
    const auto target_words = split_whitespace(s.target);
    if (target_words.size() != 1) fail_at(path, lineno, "target must be exactly one word");
    s.target = target_words.front();
    s.target_length = utf8_length(s.target);
    s.context_length = split_whitespace(s.context).size();
    s.frequency = frequencies.lookup(s.target);
    for (std::size_t col : measurement_columns) {
      const auto& cell = fields[col];
      if (is_missing_token(cell)) {
        s.measurements[header[col]] = std::nullopt;
        continue;
      }
      const auto value = parse_double(cell);
      if (!value || !std::isfinite(*value)) {
        fail_at(path, lineno, "column '" + header[col] + "': '" + cell + "' is not a number");
      }
      s.measurements[header[col]] = *value;
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError(path.string() + ": no data rows");
  return out;
}

ClozeEstimate laplace_cloze(const std::map<std::string, int>& counts, const std::string& target, double alpha) {
  if (!(alpha > 0.0)) throw DataError("laplace_cloze: alpha must be > 0");
  if (counts.empty()) throw DataError("laplace_cloze: no responses");
  std::map<std::string, double> support;
  double total = 0.0;
  for (const auto& [word, count] : counts) {
    if (count < 0) throw DataError("laplace_cloze: negative count for '" + word + "'");
    support[word] = count;
    total += count;
  }
  support.try_emplace(target, 0.0);
  const double denom = total + alpha * static_cast<double>(support.size());
  ClozeEstimate out;
  for (const auto& [word, count] : support) {
    const double p = (count + alpha) / denom;
    if (word == target) out.probability = p;
    out.entropy -= p * std::log(p);
  }
  return out;
}

Design build_design(const RegressionSpec& spec, std::span<const Stimulus> stimuli,
                    const PredictorTable& estimates) {
  if (spec.response.empty()) throw ConfigError("regression: response is not set");
  if (spec.spillover_lags < 0) throw ConfigError("regression: spillover_lags must be >= 0");

  std::map<std::pair<std::string, int>, std::size_t> by_position;
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    by_position[{stimuli[i].sentence_id, stimuli[i].word_index}] = i;
  }

  auto predictor = [&](const Stimulus& s, const std::string& name) -> std::optional<double> {
    if (name == "target_length") return static_cast<double>(s.target_length);
    if (name == "context_length") return static_cast<double>(s.context_length);
    if (name == "frequency") return frequency_predictor(s.frequency);
    if (const auto table = estimates.find(name); table != estimates.end()) {
      const auto it = table->second.find(s.item_id);
      if (it == table->second.end() || !std::isfinite(it->second)) return std::nullopt;
      return it->second;
    }
    if (const auto it = s.measurements.find(name); it != s.measurements.end()) return it->second;
    throw DataError("unknown predictor '" + name + "'");
  };

  for (const auto& name : spec.replaced) {
    if (std::find(spec.baseline.begin(), spec.baseline.end(), name) == spec.baseline.end()) {
      throw ConfigError("regression: replaced predictor '" + name + "' is not in the baseline");
    }
  }
  Design d;
  d.columns.push_back("intercept");
  d.baseline_columns.push_back(0);
  d.target_columns.push_back(0);
  for (int lag = 0; lag <= spec.spillover_lags; ++lag) {
    for (const auto& name : spec.baseline) {
      if (!lagged(name, lag)) continue;
      const auto col = static_cast<Eigen::Index>(d.columns.size());
      d.baseline_columns.push_back(col);
      if (std::find(spec.replaced.begin(), spec.replaced.end(), name) == spec.replaced.end()) {
        d.target_columns.push_back(col);
      }
      d.columns.push_back(lag_name(name, lag));
    }
    for (const auto& name : spec.targets) {
      d.target_columns.push_back(static_cast<Eigen::Index>(d.columns.size()));
      d.columns.push_back(lag_name(name, lag));
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (const auto& s : stimuli) {
    const auto response = s.measurements.find(spec.response);
    if (response == s.measurements.end()) throw DataError("dataset has no column '" + spec.response + "'");
    bool ok = response->second.has_value();
    std::vector<double> row{1.0};
    for (int lag = 0; ok && lag <= spec.spillover_lags; ++lag) {
      const auto it = by_position.find({s.sentence_id, s.word_index - lag});
      if (it == by_position.end()) {
        ok = false;
        break;
      }
      const Stimulus& source = stimuli[it->second];
      for (const auto* names : {&spec.baseline, &spec.targets}) {
        for (const auto& name : *names) {
          if (!lagged(name, lag)) continue;
          const auto v = predictor(source, name);
          if (!v) {
            ok = false;
            break;
          }
          row.push_back(*v);
        }
        if (!ok) break;
      }
    }
    if (!ok) {
      ++d.dropped;
      continue;
    }
    rows.push_back(std::move(row));
    ys.push_back(*response->second);
    d.item_ids.push_back(s.item_id);
    d.sentence_ids.push_back(s.sentence_id);
  }
  if (rows.empty()) throw DataError("design matrix is empty after dropping rows with missing cells");

  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.columns.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    d.y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return d;
}

OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool warn) {
  if (x.rows() != y.size()) throw DataError("ols_fit: X and y row counts differ");
  if (x.rows() == 0 || x.cols() == 0) throw DataError("ols_fit: empty design");
  OlsFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() == x.cols()) {
    fit.beta = qr.solve(y);
    return fit;
  }
  if (warn) spdlog::warn("ols_fit: design has rank {} < {} columns; using the least-norm solution", qr.rank(), x.cols());
  fit.rank_deficient = true;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  cod.setThreshold(kRankTolerance);
  fit.beta = cod.solve(y);
  return fit;
}

double r_squared(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (y.size() == 0) throw DataError("r_squared: empty test set");
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot == 0.0) return 0.0;
  const double ss_res = (y - x * beta).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

std::vector<std::size_t> assign_folds(std::span<const std::string> keys, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::vector<std::string> units(keys.begin(), keys.end());
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  if (units.size() < folds) {
    throw DataError("cannot split " + std::to_string(units.size()) + " units into " + std::to_string(folds) +
                    " folds");
  }
  std::vector<std::pair<std::uint64_t, std::string>> order;
  order.reserve(units.size());
  for (const auto& u : units) order.emplace_back(substream_seed(seed, u), u);
  std::sort(order.begin(), order.end());
  std::unordered_map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i].second] = i % folds;
  std::vector<std::size_t> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(fold_of.at(k));
  return out;
}

EvalReport delta_r2_cv(const RegressionSpec& spec, std::span<const Stimulus> stimuli,
                       const PredictorTable& estimates) {
  const Design design = build_design(spec, stimuli, estimates);
  return delta_r2_cv(spec, design);
}

EvalReport delta_r2_cv(const RegressionSpec& spec, const Design& design) {
  if (spec.seeds == 0) throw ConfigError("cross-validation needs at least one seed");
  const auto rows = design.x.rows();
  const std::size_t cells = spec.seeds * spec.folds;
  const Eigen::MatrixXd base_x = design.x(Eigen::all, design.baseline_columns);
  const Eigen::MatrixXd target_x = design.x(Eigen::all, design.target_columns);
  const auto& keys = spec.group_by_sentence ? design.sentence_ids : design.item_ids;

  std::vector<std::vector<std::size_t>> assignment(spec.seeds);
  for (std::size_t s = 0; s < spec.seeds; ++s) {
    assignment[s] = assign_folds(keys, spec.folds, substream_seed(spec.seed, s));
  }

  EvalReport report;
  report.response = spec.response;
  report.targets = spec.targets;
  report.baseline = spec.baseline;
  report.replaced = spec.replaced;
  report.n_rows = static_cast<std::size_t>(rows);
  report.dropped_rows = design.dropped;
  report.baseline_r2.assign(cells, 0.0);
  report.target_r2.assign(cells, 0.0);
  report.delta_r2.assign(cells, 0.0);
  std::vector<unsigned char> deficient(cells, 0);

  parallel_for(cells, spec.jobs, [&](std::size_t cell) {
    const std::size_t s = cell / spec.folds;
    const std::size_t k = cell % spec.folds;
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < rows; ++i) {
      (assignment[s][static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    }
    if (test.size() < 2 || train.size() < static_cast<std::size_t>(design.x.cols())) {
      throw DataError("degenerate fold " + std::to_string(k) + " for seed " + std::to_string(s) + ": " +
                      std::to_string(train.size()) + " training and " + std::to_string(test.size()) +
                      " test rows");
    }
    const Eigen::VectorXd y_train = design.y(train);
    const Eigen::VectorXd y_test = design.y(test);
    const auto base_fit = ols_fit(base_x(train, Eigen::all), y_train, false);
    const auto full_fit = ols_fit(target_x(train, Eigen::all), y_train, false);
    deficient[cell] = base_fit.rank_deficient || full_fit.rank_deficient;
    report.baseline_r2[cell] = r_squared(base_fit.beta, base_x(test, Eigen::all), y_test);
    report.target_r2[cell] = r_squared(full_fit.beta, target_x(test, Eigen::all), y_test);
    report.delta_r2[cell] = report.target_r2[cell] - report.baseline_r2[cell];
  });

  report.rank_deficient_fits = static_cast<std::size_t>(std::count(deficient.begin(), deficient.end(), 1));
  if (report.rank_deficient_fits > 0) {
    spdlog::warn("{}: {} of {} cross-validation fits were rank deficient; used least-norm solutions",
                 spec.response, report.rank_deficient_fits, cells);
  }
  report.delta = percentile_interval(report.delta_r2);
  report.delta.mean = mean_of(report.delta_r2);
  report.p_value = permutation_test(report.baseline_r2, report.target_r2, spec.permutation_resamples,
                                    substream_seed(spec.seed, "permutation"));
  return report;
}

double permutation_test(std::span<const double> baseline, std::span<const double> target,
                        std::size_t resamples, std::uint64_t seed) {
  if (baseline.size() != target.size()) throw DataError("permutation_test: unequal sample sizes");
  if (baseline.size() < 2) throw DataError("permutation_test: needs at least 2 pairs");
  if (resamples == 0) throw DataError("permutation_test: needs at least one resample");
  const std::size_t n = baseline.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = target[i] - baseline[i];
  const double observed = std::accumulate(diff.begin(), diff.end(), 0.0);

  RandomStream rng(seed);
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double total = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng.next_u64();
      total += (bits & 1) ? diff[i] : -diff[i];
      bits >>= 1;
    }
    if (total >= observed) ++extreme;
  }
  return static_cast<double>(extreme + 1) / static_cast<double>(resamples + 1);
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["response"] = report.response;
  j["targets"] = report.targets;
  j["baseline"] = report.baseline;
  j["replaced"] = report.replaced;
  j["n_rows"] = report.n_rows;
  j["dropped_rows"] = report.dropped_rows;
  j["rank_deficient_fits"] = report.rank_deficient_fits;
  j["delta_r2"] = {{"mean", report.delta.mean},
                   {"ci_low", report.delta.low},
                   {"ci_high", report.delta.high},
                   {"samples", report.delta_r2}};
  j["baseline_r2"] = report.baseline_r2;
  j["target_r2"] = report.target_r2;
  j["p_value"] = report.p_value;
  return j.dump(2);
}

}  // namespace gensurp
