#include "gensurp/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "gensurp/error.hpp"
#include "gensurp/estimator.hpp"
#include "gensurp/ngram.hpp"
#include "gensurp/parallel.hpp"
#include "gensurp/remote.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// Hex FNV-1a of a file's bytes, so the identity survives moving the inputs.
std::string content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::string cache_identity(const RunConfig& c) {
  json j;
  const auto& b = c.backend;
  if (b.kind == BackendKind::native) {
    j["backend"] = {{"kind", "native"}, {"corpus", content_hash(b.corpus)}, {"order", b.order},
                    {"pseudocount", b.pseudocount}};
  } else {
    j["backend"] = {{"kind", "remote"}, {"url", b.remote.url}, {"server_sampling", b.remote.server_sampling}};
  }
  j["epsilon"] = c.epsilon;
  j["independent_batches"] = c.independent_batches;
  j["dataset"] = content_hash(c.dataset);
  j["embeddings"] = c.embeddings.empty() || c.embeddings == "remote" ? c.embeddings : content_hash(c.embeddings);
  return j.dump();
}

bool sampling_based(const GSModel& m) { return !m.closed_form; }

bool use_exact(const Session& s, const GSModel& m) {
  return s.config.prefer_exact && supports_exact(m, *s.lm);
}

Estimate word_exact(const Session& s, const GSModel& m, std::size_t i) {
  if (m.anticipatory) return estimate_exact(m, s.targets[i], s.contexts[i], *s.lm, s.rep.get());
  return estimate_word_exact(m, s.targets[i], s.contexts[i], *s.lm, s.rep.get());
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : sep) + x;
  return out;
}

}  // namespace

// ---- session ----

Session open_session(const RunConfig& config) {
  validate(config);
  Session s;
  s.config = config;
  for (const auto& name : config.measures) s.measures.push_back(find_measure(name, config.epsilon));

  if (config.dataset.empty()) throw ConfigError("config key 'dataset': required by this command");
  FrequencyTable frequencies;
  if (!config.frequencies.empty()) frequencies = load_frequencies(config.frequencies);
  s.stimuli = load_dataset(config.dataset, frequencies);

  if (config.backend.kind == BackendKind::native) {
    const auto corpus = read_corpus(config.backend.corpus);
    std::set<std::string> vocab;
    for (const auto& line : corpus) vocab.insert(line.begin(), line.end());
    for (const auto& st : s.stimuli) {
      for (const auto& w : split_whitespace(st.context)) vocab.insert(w);
      for (const auto& w : split_whitespace(st.target)) vocab.insert(w);
    }
    s.lm = std::make_unique<NGramBackend>(train_ngram(corpus, config.backend.order, config.backend.pseudocount,
                                                      Alphabet({vocab.begin(), vocab.end()})));
  } else {
    s.lm = std::make_unique<RemoteBackend>(config.backend.remote);
  }

  if (config.embeddings == "remote") {
    const auto* remote = dynamic_cast<const RemoteBackend*>(s.lm.get());
    if (!remote) throw ConfigError("config key 'embeddings': 'remote' needs the remote backend");
    s.embeddings = std::make_unique<EmbeddingTable>(fetch_embeddings(*remote));
  } else if (!config.embeddings.empty()) {
    s.embeddings = std::make_unique<EmbeddingTable>(load_embeddings(config.embeddings, s.lm->alphabet().eos_marker()));
  }
  if (s.embeddings) s.rep = std::make_unique<Representer>(*s.embeddings, s.lm->alphabet());

  s.contexts.reserve(s.stimuli.size());
  s.targets.reserve(s.stimuli.size());
  for (const auto& st : s.stimuli) {
    s.contexts.push_back(s.lm->tokenize(st.context, ""));
    s.targets.push_back(s.lm->tokenize(st.target, st.context));
    if (s.targets.back().empty()) throw DataError("item " + st.item_id + ": target tokenizes to nothing");
  }
  spdlog::info("{} stimuli, {} measures, backend {}", s.stimuli.size(), s.measures.size(), s.lm->describe());
  return s;
}

EstimateCache open_cache(const RunConfig& config) {
  const auto identity = cache_identity(config);
  const auto path = outputs::identity(config);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() != identity + "\n") {
      throw ConfigError("output directory " + config.output.string() +
                        " holds estimates for a different backend, epsilon, batch policy, dataset or embeddings; "
                        "choose another 'output'");
    }
  } else {
    open_out(path) << identity << "\n";
  }
  return EstimateCache(outputs::estimates(config));
}

void record_stage(const Session& session, const std::string& stage, double wall_time_s,
                  const std::vector<std::filesystem::path>& produced) {
  const auto path = outputs::manifest(session.config);
  auto manifest = make_manifest(session.config, session.lm->describe());
  if (std::filesystem::exists(path)) {
    try {
      auto old = read_manifest(path);
      if (old.config_hash == manifest.config_hash) manifest = std::move(old);
    } catch (const DataError& e) {
      spdlog::warn("replacing unreadable manifest: {}", e.what());
    }
  }
  std::erase_if(manifest.stages, [&](const StageTiming& t) { return t.name == stage; });
  manifest.stages.push_back({stage, wall_time_s});
  for (const auto& p : produced) {
    const auto name = p.lexically_relative(session.config.output).string();
    if (std::find(manifest.outputs.begin(), manifest.outputs.end(), name) == manifest.outputs.end()) {
      manifest.outputs.push_back(name);
    }
  }
  std::sort(manifest.outputs.begin(), manifest.outputs.end());
  write_manifest(manifest, path);
}

// ---- estimate ----

namespace {

using BatchMemo = std::map<std::uint64_t, SampleBatch>;

double word_mc(const Session& s, const GSModel& m, std::size_t i, BatchMemo& memo) {
  const auto& c = s.config;
  const auto& item = s.stimuli[i].item_id;
  const auto& w = s.targets[i];
  auto key = [&](std::size_t token) {
    std::string k = item;
    if (token > 0) k += "#" + std::to_string(token);
    if (c.independent_batches) k += "\x1f" + m.name;
    return stable_hash(k);
  };
  auto one = [&](TokenView target, const TokenString& context, std::size_t token) {
    const auto k = key(token);
    auto it = memo.find(k);
    if (it == memo.end()) it = memo.emplace(k, simulate_batch(*s.lm, context, c.n, c.max_len, c.seed, k)).first;
    return estimate_from_batch(m, target, ScoreContext{s.lm.get(), s.rep.get(), context}, it->second).value;
  };
  if (m.anticipatory || w.size() == 1) return one(w, s.contexts[i], 0);
  std::vector<double> parts;
  TokenString context = s.contexts[i];
  for (std::size_t t = 0; t < w.size(); ++t) {
    const Symbol token[] = {w[t]};
    parts.push_back(one(token, context, t));
    context.push_back(w[t]);
  }
  return aggregate_word(m, parts);
}

}  // namespace

double estimate_word_mc(const Session& s, const GSModel& m, std::size_t i) {
  BatchMemo memo;
  return word_mc(s, m, i, memo);
}

EstimateStats run_estimate(const Session& s) {
  const auto start = Clock::now();
  const auto& c = s.config;
  auto cache = open_cache(c);
  EstimateStats stats;
  const std::size_t chunk = std::max<std::size_t>(16, 4 * static_cast<std::size_t>(c.jobs));

  for (std::size_t begin = 0; begin < s.stimuli.size(); begin += chunk) {
    const std::size_t end = std::min(s.stimuli.size(), begin + chunk);
    std::vector<std::vector<CacheRow>> rows(end - begin);
    std::vector<std::size_t> hits(end - begin, 0);
    parallel_for(end - begin, c.jobs, [&](std::size_t k) {
      const std::size_t i = begin + k;
      const auto& item = s.stimuli[i].item_id;
      BatchMemo memo;
      for (const auto& m : s.measures) {
        const bool exact = use_exact(s, m);
        if (exact) {
          const auto key = CacheKey::exact(item, m.name);
          if (cache.contains(key)) {
            ++hits[k];
          } else {
            const auto e = word_exact(s, m, i);
            rows[k].push_back({key, e.value, e.wall_time_s});
          }
        }
        if (!exact || c.exact_vs_mc) {
          const auto key = CacheKey::mc(item, m.name, c.n, c.max_len, c.seed);
          if (cache.contains(key)) {
            ++hits[k];
          } else {
            const auto start = Clock::now();
            const double v = word_mc(s, m, i, memo);
            rows[k].push_back({key, v, seconds_since(start)});
          }
        }
      }
    });
    std::vector<CacheRow> flat;
    for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    stats.computed += cache.append(flat);
    for (auto h : hits) stats.cached += h;
    spdlog::debug("estimated stimuli {}..{}", begin, end);
  }
  spdlog::info("estimate: {} computed, {} from cache ({})", stats.computed, stats.cached, cache.path().string());
  record_stage(s, "estimate", seconds_since(start), {outputs::estimates(c)});
  return stats;
}

PredictorTable collect_estimates(const Session& s, const EstimateCache& cache, std::vector<Gap>& gaps) {
  const auto& c = s.config;
  PredictorTable table;
  for (const auto& m : s.measures) {
    auto& column = table[m.name];
    for (const auto& st : s.stimuli) {
      auto v = cache.find(CacheKey::exact(st.item_id, m.name));
      if (!v) v = cache.find(CacheKey::mc(st.item_id, m.name, c.n, c.max_len, c.seed));
      if (v) {
        column[st.item_id] = *v;
      } else {
        gaps.push_back({st.item_id, m.name});
      }
    }
  }
  return table;
}

namespace {

void fail_on_gaps(const Session& s, const std::vector<Gap>& gaps) {
  if (gaps.empty()) return;
  auto out = open_out(outputs::gaps(s.config));
  out << "item_id\tmeasure\n";
  for (const auto& g : gaps) out << g.item_id << '\t' << g.measure << '\n';
  std::string sample;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, gaps.size()); ++i) {
    sample += (i ? ", " : "") + gaps[i].item_id + "/" + gaps[i].measure;
  }
  throw DataError(std::to_string(gaps.size()) + " estimates missing (" + sample +
                  (gaps.size() > 5 ? ", ..." : "") + "); full list in " + outputs::gaps(s.config).string() +
                  "; run 'estimate' first");
}

void write_matrix(const CorrelationMatrix& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "measure";
  for (const auto& n : m.names) out << '\t' << n;
  out << '\n';
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out << m.names[static_cast<std::size_t>(r)];
    for (Eigen::Index col = 0; col < m.values.cols(); ++col) out << '\t' << format_value(m.values(r, col));
    out << '\n';
  }
}

}  // namespace

// ---- correlate ----

CorrelateResult run_correlate(const Session& s) {
  const auto start = Clock::now();
  const auto& c = s.config;
  const auto cache = open_cache(c);
  std::vector<Gap> gaps;
  const auto table = collect_estimates(s, cache, gaps);
  fail_on_gaps(s, gaps);

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  for (const auto& m : s.measures) {
    names.push_back(m.name);
    auto& col = columns.emplace_back();
    for (const auto& st : s.stimuli) col.push_back(table.at(m.name).at(st.item_id));
  }
  CorrelateResult result;
  result.pearson = correlation_matrix(names, columns, CorrelationMethod::pearson);
  result.spearman = correlation_matrix(names, columns, CorrelationMethod::spearman);

  for (const auto& m : s.measures) {
    std::vector<double> ex, mc;
    for (const auto& st : s.stimuli) {
      const auto e = cache.find(CacheKey::exact(st.item_id, m.name));
      const auto r = cache.find(CacheKey::mc(st.item_id, m.name, c.n, c.max_len, c.seed));
      if (e && r) {
        ex.push_back(*e);
        mc.push_back(*r);
      }
    }
    if (ex.empty()) continue;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.exact_vs_mc.push_back({m.name, ex.size(), pearson(ex, mc).value_or(nan), spearman(ex, mc).value_or(nan)});
  }

  const auto pearson_path = c.output / "correlation_pearson.tsv";
  const auto spearman_path = c.output / "correlation_spearman.tsv";
  const auto pairs_path = c.output / "exact_vs_mc.tsv";
  write_matrix(result.pearson, pearson_path);
  write_matrix(result.spearman, spearman_path);
  {
    auto out = open_out(pairs_path);
    out << "measure\tN\tL\tseed\titems\tpearson\tspearman\n";
    for (const auto& p : result.exact_vs_mc) {
      out << p.measure << '\t' << c.n << '\t' << c.max_len << '\t' << c.seed << '\t' << p.items << '\t'
          << format_value(p.pearson) << '\t' << format_value(p.spearman) << '\n';
    }
  }
  record_stage(s, "correlate", seconds_since(start), {pearson_path, spearman_path, pairs_path});
  return result;
}

// ---- evaluate ----

std::vector<EvaluationEntry> run_evaluate(const Session& s) {
  const auto start = Clock::now();
  const auto& c = s.config;
  const auto cache = open_cache(c);
  std::vector<Gap> gaps;
  const auto table = collect_estimates(s, cache, gaps);
  fail_on_gaps(s, gaps);

  auto responses = c.evaluate.responses;
  if (responses.empty()) {
    std::set<std::string> names;
    for (const auto& st : s.stimuli) {
      for (const auto& [name, _] : st.measurements) names.insert(name);
    }
    responses.assign(names.begin(), names.end());
  }
  if (responses.empty()) throw DataError("dataset has no measurement columns to evaluate");

  auto base_spec = [&](const std::string& response) {
    RegressionSpec spec;
    spec.response = response;
    spec.baseline = c.evaluate.baseline;
    spec.spillover_lags = spillover_for(c.evaluate, response);
    spec.folds = c.evaluate.folds;
    spec.seeds = c.evaluate.seeds;
    spec.seed = c.seed;
    spec.group_by_sentence = c.evaluate.group_by_sentence;
    spec.permutation_resamples = c.evaluate.permutation_resamples;
    spec.jobs = c.jobs;
    return spec;
  };
  const bool combined = std::find(c.measures.begin(), c.measures.end(), "surprisal") != c.measures.end() &&
                        std::find(c.measures.begin(), c.measures.end(), "exp_next_surprisal") != c.measures.end();

  std::vector<EvaluationEntry> entries;
  for (const auto& response : responses) {
    for (const auto& m : s.measures) {
      auto spec = base_spec(response);
      spec.targets = {m.name};
      entries.push_back({"default", delta_r2_cv(spec, s.stimuli, table)});
    }
    if (!combined) continue;
    for (const auto& m : s.measures) {
      if (!m.anticipatory || m.name == "exp_next_surprisal") continue;
      auto spec = base_spec(response);
      spec.baseline.push_back("surprisal");
      spec.baseline.push_back("exp_next_surprisal");
      spec.replaced = {"exp_next_surprisal"};
      spec.targets = {m.name};
      entries.push_back({"combined", delta_r2_cv(spec, s.stimuli, table)});
    }
  }

  json j = json::array();
  for (const auto& e : entries) {
    auto r = json::parse(to_json(e.report));
    r["baseline_kind"] = e.baseline_kind;
    j.push_back(std::move(r));
  }
  open_out(outputs::evaluation(c)) << j.dump(2) << "\n";
  {
    auto out = open_out(outputs::evaluation_summary(c));
    out << "response\tbaseline_kind\ttarget\treplaced\tn_rows\tdelta_r2\tci_low\tci_high\tp_value\n";
    for (const auto& e : entries) {
      const auto& r = e.report;
      out << r.response << '\t' << e.baseline_kind << '\t' << join(r.targets, ",") << '\t'
          << (r.replaced.empty() ? "-" : join(r.replaced, ",")) << '\t' << r.n_rows << '\t'
          << format_value(r.delta.mean) << '\t' << format_value(r.delta.low) << '\t' << format_value(r.delta.high)
          << '\t' << format_value(r.p_value) << '\n';
    }
  }
  record_stage(s, "evaluate", seconds_since(start), {outputs::evaluation(c), outputs::evaluation_summary(c)});
  return entries;
}

// ---- variance ----

VarianceResult run_variance(const Session& s) {
  const auto start = Clock::now();
  const auto& c = s.config;
  std::vector<GSModel> sampling, exact;
  for (const auto& m : s.measures) {
    if (sampling_based(m)) sampling.push_back(m);
    if (use_exact(s, m)) exact.push_back(m);
  }
  if (sampling.empty()) throw ConfigError("config key 'measures': no sampling-based measure to analyse");

  // Word-level analysis needs single-token targets; multi-token words are
  // analysed through their first token.
  std::vector<StimulusRef> refs;
  const std::size_t count = std::min(c.variance.max_stimuli, s.stimuli.size());
  for (std::size_t i = 0; i < count; ++i) {
    refs.push_back({s.stimuli[i].item_id, s.contexts[i], TokenString(s.targets[i].begin(), s.targets[i].begin() + 1)});
  }

  VarianceOptions options;
  options.sample_sizes = c.variance.sample_sizes;
  options.max_lengths = c.variance.max_lengths;
  options.resamples = c.variance.resamples;
  options.seed = c.seed;
  options.jobs = c.jobs;
  VarianceResult result;
  result.cells = variance_analysis(*s.lm, s.rep.get(), refs, sampling, options);
  result.runtime = profile_runtime(*s.lm, s.rep.get(), refs, sampling, exact, c.variance.sample_sizes,
                                   c.variance.runtime_max_lengths, c.seed);
  result.plot = variance_plot_data(result.cells, result.runtime);

  {
    auto out = open_out(outputs::variance(c));
    out << "measure\tN\tL\tcv_mean\tcv_ci_low\tcv_ci_high\tcv_excluded\tcorr_mean\tcorr_ci_low\tcorr_ci_high\t"
           "corr_flagged\tseconds_per_stimulus\n";
    for (const auto& cell : result.cells) {
      out << cell.measure << '\t' << cell.n << '\t' << cell.max_len << '\t' << format_value(cell.cv.mean) << '\t'
          << format_value(cell.cv.low) << '\t' << format_value(cell.cv.high) << '\t' << cell.cv_excluded << '\t'
          << format_value(cell.correlation.summary.mean) << '\t' << format_value(cell.correlation.summary.low)
          << '\t' << format_value(cell.correlation.summary.high) << '\t' << cell.correlation.flagged << '\t'
          << format_value(cell.runtime_s) << '\n';
    }
  }
  {
    auto out = open_out(outputs::runtime(c));
    out << "measure\tmode\tN\tL\tseconds_per_stimulus\n";
    for (const auto& r : result.runtime) {
      out << r.measure << '\t' << to_string(r.mode) << '\t' << r.n << '\t' << r.max_len << '\t'
          << format_value(r.seconds_per_stimulus) << '\n';
    }
  }
  open_out(outputs::variance_plot(c)) << result.plot.dump(2) << "\n";
  record_stage(s, "variance", seconds_since(start),
               {outputs::variance(c), outputs::runtime(c), outputs::variance_plot(c)});
  return result;
}

// ---- plot data ----

json variance_plot_data(const std::vector<VarianceCell>& cells, const std::vector<RuntimeRow>& runtime) {
  std::set<std::size_t> lengths;
  for (const auto& cell : cells) lengths.insert(cell.max_len);
  const bool tag_length = lengths.size() > 1;

  auto point = [](std::size_t n, double mean, double lo, double hi) {
    return json{{"n", n}, {"mean", mean}, {"ci_low", lo}, {"ci_high", hi}};
  };
  // Series keep first-appearance order.
  auto add = [](json& series, const std::string& label, json p) {
    for (auto& s : series) {
      if (s["label"] == label) {
        s["points"].push_back(std::move(p));
        return;
      }
    }
    series.push_back({{"label", label}, {"points", json::array({std::move(p)})}});
  };

  json cv = json::array(), corr = json::array(), time = json::array();
  for (const auto& cell : cells) {
    const auto label = tag_length ? cell.measure + " L=" + std::to_string(cell.max_len) : cell.measure;
    if (cell.cv.count > 0) add(cv, label, point(cell.n, cell.cv.mean, cell.cv.low, cell.cv.high));
    const auto& r = cell.correlation.summary;
    if (r.count > 0) add(corr, label, point(cell.n, r.mean, r.low, r.high));
  }
  std::set<std::size_t> runtime_lengths;
  std::set<std::size_t> grid;
  for (const auto& r : runtime) {
    if (r.mode == EstimateMode::mc) {
      runtime_lengths.insert(r.max_len);
      grid.insert(r.n);
    }
  }
  for (const auto& r : runtime) {
    if (r.mode != EstimateMode::mc) continue;
    const auto label = runtime_lengths.size() > 1 ? r.measure + " L=" + std::to_string(r.max_len) : r.measure;
    add(time, label, point(r.n, r.seconds_per_stimulus, r.seconds_per_stimulus, r.seconds_per_stimulus));
  }
  // Exact measures do not depend on N; drawn as flat reference lines.
  for (const auto& r : runtime) {
    if (r.mode != EstimateMode::exact) continue;
    for (auto n : grid) add(time, r.measure + " (exact)", point(n, r.seconds_per_stimulus, r.seconds_per_stimulus, r.seconds_per_stimulus));
  }
  json plot;
  plot["title"] = "Estimator variance and runtime";
  plot["panels"] = json::array({
      {{"name", "cv"}, {"x_label", "N"}, {"y_label", "coefficient of variation"}, {"series", cv}},
      {{"name", "correlation"}, {"x_label", "N"}, {"y_label", "resample correlation"}, {"series", corr}},
      {{"name", "runtime"}, {"x_label", "N"}, {"y_label", "seconds per stimulus"}, {"series", time}},
  });
  return plot;
}

void validate_plot_data(const json& plot) {
  auto fail = [](const std::string& what) { throw DataError("plot data: " + what); };
  if (!plot.is_object() || !plot.contains("panels") || !plot["panels"].is_array()) fail("missing 'panels' array");
  for (std::size_t p = 0; p < plot["panels"].size(); ++p) {
    const auto& panel = plot["panels"][p];
    const auto where = "panels[" + std::to_string(p) + "]";
    if (!panel.is_object() || !panel.contains("name") || !panel["name"].is_string()) fail(where + ".name missing");
    if (!panel.contains("series") || !panel["series"].is_array()) fail(where + ".series missing");
    for (std::size_t s = 0; s < panel["series"].size(); ++s) {
      const auto& series = panel["series"][s];
      const auto swhere = where + ".series[" + std::to_string(s) + "]";
      if (!series.is_object() || !series.contains("label") || !series["label"].is_string()) fail(swhere + ".label missing");
      if (!series.contains("points") || !series["points"].is_array()) fail(swhere + ".points missing");
      for (std::size_t k = 0; k < series["points"].size(); ++k) {
        const auto& pt = series["points"][k];
        for (const char* field : {"n", "mean", "ci_low", "ci_high"}) {
          if (!pt.is_object() || !pt.contains(field) || !pt[field].is_number()) {
            fail(swhere + ".points[" + std::to_string(k) + "]." + field + " missing or not a number");
          }
        }
        if (pt["n"].get<double>() <= 0) fail(swhere + ".points[" + std::to_string(k) + "].n must be positive");
      }
    }
  }
}

std::string plot_series_tsv(const json& plot) {
  validate_plot_data(plot);
  std::string out = "panel\tseries\tN\tmean\tci_low\tci_high\n";
  for (const auto& panel : plot["panels"]) {
    for (const auto& series : panel["series"]) {
      for (const auto& pt : series["points"]) {
        out += panel["name"].get<std::string>() + '\t' + series["label"].get<std::string>() + '\t' +
               format_value(pt["n"].get<double>()) + '\t' + format_value(pt["mean"].get<double>()) + '\t' +
               format_value(pt["ci_low"].get<double>()) + '\t' + format_value(pt["ci_high"].get<double>()) + '\n';
      }
    }
  }
  return out;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

}  // namespace

std::string render_svg(const json& plot) {
  validate_plot_data(plot);
  constexpr double width = 780, min_panel_h = 260, left = 80, right = 230, top = 40, bottom = 40, legend_step = 14;
  const auto& panels = plot["panels"];
  // Panels grow so the legend fits beside them.
  std::vector<double> panel_y{top};
  for (const auto& panel : panels) {
    const double legend_h = 22 + legend_step * static_cast<double>(panel["series"].size()) + bottom;
    panel_y.push_back(panel_y.back() + std::max(min_panel_h, legend_h));
  }
  const double height = panels.empty() ? top + min_panel_h : panel_y.back();
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width) << "\" height=\"" << fixed(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(plot.value("title", std::string("plot"))) << "</text>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double plot_top = panel_y[p] + 10, plot_bottom = panel_y[p + 1] - bottom;
    const double plot_left = left, plot_right = width - right;
    const auto name = panel["name"].get<std::string>();
    svg << "<g id=\"panel-" << escape(name) << "\">\n";
    svg << "<rect x=\"" << fixed(plot_left) << "\" y=\"" << fixed(plot_top) << "\" width=\""
        << fixed(plot_right - plot_left) << "\" height=\"" << fixed(plot_bottom - plot_top)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fixed(14) << "\" y=\"" << fixed((plot_top + plot_bottom) / 2)
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << fixed((plot_top + plot_bottom) / 2) << ")\">"
        << escape(panel.value("y_label", name)) << "</text>\n";

    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& series : panel["series"]) {
      for (const auto& pt : series["points"]) {
        const double lx = std::log2(pt["n"].get<double>());
        xmin = std::min(xmin, lx);
        xmax = std::max(xmax, lx);
        for (const char* f : {"mean", "ci_low", "ci_high"}) {
          const double v = pt[f].get<double>();
          if (std::isfinite(v)) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
          }
        }
      }
    }
    if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
      svg << "<text x=\"" << fixed((plot_left + plot_right) / 2) << "\" y=\"" << fixed((plot_top + plot_bottom) / 2)
          << "\" text-anchor=\"middle\" fill=\"#888888\">no data</text>\n</g>\n";
      continue;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) {
      ymax += 0.5 * std::max(1e-12, std::abs(ymax));
      ymin -= 0.5 * std::max(1e-12, std::abs(ymin));
    }
    auto sx = [&](double n) { return plot_left + (std::log2(n) - xmin) / (xmax - xmin) * (plot_right - plot_left); };
    auto sy = [&](double v) { return plot_bottom - (v - ymin) / (ymax - ymin) * (plot_bottom - plot_top); };

    for (int t = static_cast<int>(std::ceil(xmin)); t <= static_cast<int>(std::floor(xmax)); ++t) {
      const double x = sx(std::exp2(t));
      svg << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(plot_bottom) << "\" x2=\"" << fixed(x) << "\" y2=\""
          << fixed(plot_bottom + 4) << "\" stroke=\"black\"/>";
      svg << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(plot_bottom + 16) << "\" text-anchor=\"middle\">2^" << t
          << "</text>\n";
    }
    for (int t = 0; t <= 4; ++t) {
      const double v = ymin + (ymax - ymin) * t / 4.0;
      svg << "<text x=\"" << fixed(plot_left - 6) << "\" y=\"" << fixed(sy(v) + 4) << "\" text-anchor=\"end\">"
          << short_number(v) << "</text>\n";
    }
    svg << "<text x=\"" << fixed((plot_left + plot_right) / 2) << "\" y=\"" << fixed(plot_bottom + 32)
        << "\" text-anchor=\"middle\">" << escape(panel.value("x_label", std::string("N"))) << "</text>\n";

    std::size_t idx = 0;
    for (const auto& series : panel["series"]) {
      const char* color = kPalette[idx % std::size(kPalette)];
      std::vector<const json*> pts;
      for (const auto& pt : series["points"]) pts.push_back(&pt);
      std::stable_sort(pts.begin(), pts.end(),
                       [](const json* a, const json* b) { return (*a)["n"].get<double>() < (*b)["n"].get<double>(); });
      if (pts.empty()) {
        ++idx;
        continue;
      }
      // Past the palette, series repeat colours with a dash pattern.
      const std::string dash = idx < std::size(kPalette) ? "" : " stroke-dasharray=\"6 3\"";
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << " points=\"";
      for (std::size_t k = 0; k < pts.size(); ++k) {
        svg << (k ? " " : "") << fixed(sx((*pts[k])["n"].get<double>())) << ","
            << fixed(sy((*pts[k])["mean"].get<double>()));
      }
      svg << "\"/>\n";
      for (const auto* pt : pts) {
        const double x = sx((*pt)["n"].get<double>());
        svg << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(sy((*pt)["ci_low"].get<double>())) << "\" x2=\""
            << fixed(x) << "\" y2=\"" << fixed(sy((*pt)["ci_high"].get<double>())) << "\" stroke=\"" << color
            << "\"/>";
      }
      svg << "\n";
      const double ly = plot_top + 12 + legend_step * static_cast<double>(idx);
      svg << "<line x1=\"" << fixed(plot_right + 10) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
          << fixed(plot_right + 28) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color
          << "\" stroke-width=\"2\"" << dash << "/>";
      svg << "<text x=\"" << fixed(plot_right + 32) << "\" y=\"" << fixed(ly) << "\">"
          << escape(series["label"].get<std::string>()) << "</text>\n";
      ++idx;
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::filesystem::path> run_plot(const std::filesystem::path& plot_json,
                                            const std::filesystem::path& svg_out) {
  std::ifstream in(plot_json);
  if (!in) throw DataError("cannot read plot data " + plot_json.string());
  json plot;
  try {
    plot = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("plot data " + plot_json.string() + " is not JSON: " + e.what());
  }
  const auto svg_path = svg_out.empty() ? std::filesystem::path(plot_json).replace_extension(".svg") : svg_out;
  auto tsv_path = svg_path;
  tsv_path.replace_extension(".series.tsv");
  // Data first, image second.
  const auto tsv = plot_series_tsv(plot);
  open_out(tsv_path) << tsv;
  open_out(svg_path) << render_svg(plot);
  return {tsv_path, svg_path};
}

}  // namespace gensurp
