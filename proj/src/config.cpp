#include "gensurp/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "gensurp/error.hpp"
#include "gensurp/measures.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("config key '" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + join(where, key) + "'");
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& where, const char* expected) {
  if (!node.IsScalar()) throw ConfigError("config key '" + where + "' must be " + expected);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + where + "' must be " + expected + ", got '" + node.Scalar() + "'");
  }
}

std::size_t count(const YAML::Node& node, const std::string& where) {
  const auto text = node.IsScalar() ? node.Scalar() : std::string();
  if (!text.empty() && text.front() == '-') throw ConfigError("config key '" + where + "' must be >= 0");
  return scalar<std::size_t>(node, where, "a non-negative integer");
}

template <typename T, typename Fn>
std::vector<T> list(const YAML::Node& node, const std::string& where, Fn element) {
  if (!node.IsSequence()) throw ConfigError("config key '" + where + "' must be a list");
  std::vector<T> out;
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(element(node[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<std::size_t> counts(const YAML::Node& node, const std::string& where) {
  return list<std::size_t>(node, where, count);
}

std::vector<std::string> strings(const YAML::Node& node, const std::string& where) {
  return list<std::string>(node, where, [](const YAML::Node& n, const std::string& w) {
    return scalar<std::string>(n, w, "a string");
  });
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void require_file(const std::filesystem::path& path, const std::string& key) {
  if (!std::filesystem::exists(path)) throw ConfigError("config key '" + key + "': " + path.string() + " does not exist");
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json_value(const RunConfig& c) {
  json j;
  j["backend"] = {{"kind", c.backend.kind == BackendKind::native ? "native" : "remote"},
                  {"corpus", c.backend.corpus.string()},
                  {"order", c.backend.order},
                  {"pseudocount", c.backend.pseudocount},
                  {"url", c.backend.remote.url},
                  {"timeout_s", c.backend.remote.timeout_s},
                  {"max_in_flight", c.backend.remote.max_in_flight},
                  {"retries", c.backend.remote.retries},
                  {"server_sampling", c.backend.remote.server_sampling}};
  j["measures"] = c.measures;
  j["n"] = c.n;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  j["epsilon"] = c.epsilon;
  j["jobs"] = c.jobs;
  j["prefer_exact"] = c.prefer_exact;
  j["exact_vs_mc"] = c.exact_vs_mc;
  j["independent_batches"] = c.independent_batches;
  j["dataset"] = c.dataset.string();
  j["frequencies"] = c.frequencies.string();
  j["embeddings"] = c.embeddings;
  j["output"] = c.output.string();
  j["variance"] = {{"sample_sizes", c.variance.sample_sizes},
                   {"max_lengths", c.variance.max_lengths},
                   {"resamples", c.variance.resamples},
                   {"runtime_max_lengths", c.variance.runtime_max_lengths},
                   {"max_stimuli", c.variance.max_stimuli}};
  j["evaluate"] = {{"responses", c.evaluate.responses},
                   {"baseline", c.evaluate.baseline},
                   {"folds", c.evaluate.folds},
                   {"seeds", c.evaluate.seeds},
                   {"permutation_resamples", c.evaluate.permutation_resamples},
                   {"group_by_sentence", c.evaluate.group_by_sentence},
                   {"spillover_lags", c.evaluate.spillover_lags}};
  return j;
}

}  // namespace

RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir, bool check_paths) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig c;
  if (root.IsNull()) throw ConfigError("config is empty");
  reject_unknown(root, "", {"backend", "measures", "n", "max_len", "seed", "epsilon", "jobs", "prefer_exact",
                            "exact_vs_mc", "independent_batches", "dataset", "frequencies", "embeddings", "output", "variance", "evaluate"});

  if (const auto b = root["backend"]) {
    reject_unknown(b, "backend", {"kind", "corpus", "order", "pseudocount", "url", "timeout_s", "max_in_flight",
                                  "retries", "server_sampling"});
    if (b["kind"]) {
      const auto kind = scalar<std::string>(b["kind"], "backend.kind", "a string");
      if (kind == "native") {
        c.backend.kind = BackendKind::native;
      } else if (kind == "remote") {
        c.backend.kind = BackendKind::remote;
      } else {
        throw ConfigError("config key 'backend.kind' must be 'native' or 'remote', got '" + kind + "'");
      }
    }
    if (b["corpus"]) c.backend.corpus = resolve(base_dir, scalar<std::string>(b["corpus"], "backend.corpus", "a path"));
    if (b["order"]) c.backend.order = scalar<int>(b["order"], "backend.order", "an integer");
    if (b["pseudocount"]) c.backend.pseudocount = scalar<double>(b["pseudocount"], "backend.pseudocount", "a number");
    if (b["url"]) c.backend.remote.url = scalar<std::string>(b["url"], "backend.url", "a URL");
    if (b["timeout_s"]) c.backend.remote.timeout_s = scalar<double>(b["timeout_s"], "backend.timeout_s", "a number");
    if (b["max_in_flight"]) c.backend.remote.max_in_flight = count(b["max_in_flight"], "backend.max_in_flight");
    if (b["retries"]) c.backend.remote.retries = scalar<int>(b["retries"], "backend.retries", "an integer");
    if (b["server_sampling"]) {
      c.backend.remote.server_sampling = scalar<bool>(b["server_sampling"], "backend.server_sampling", "a boolean");
    }
  }
  if (root["measures"]) c.measures = strings(root["measures"], "measures");
  if (root["n"]) c.n = count(root["n"], "n");
  if (root["max_len"]) c.max_len = count(root["max_len"], "max_len");
  if (root["seed"]) {
    if (root["seed"].IsScalar() && root["seed"].Scalar().rfind('-', 0) == 0) throw ConfigError("config key 'seed' must be >= 0");
    c.seed = scalar<std::uint64_t>(root["seed"], "seed", "an unsigned 64-bit integer");
  }
  if (root["epsilon"]) c.epsilon = scalar<double>(root["epsilon"], "epsilon", "a number");
  if (root["jobs"]) c.jobs = static_cast<unsigned>(count(root["jobs"], "jobs"));
  if (root["prefer_exact"]) c.prefer_exact = scalar<bool>(root["prefer_exact"], "prefer_exact", "a boolean");
  if (root["exact_vs_mc"]) c.exact_vs_mc = scalar<bool>(root["exact_vs_mc"], "exact_vs_mc", "a boolean");
  if (root["independent_batches"]) {
    c.independent_batches = scalar<bool>(root["independent_batches"], "independent_batches", "a boolean");
  }
  if (root["dataset"]) c.dataset = resolve(base_dir, scalar<std::string>(root["dataset"], "dataset", "a path"));
  if (root["frequencies"]) {
    c.frequencies = resolve(base_dir, scalar<std::string>(root["frequencies"], "frequencies", "a path"));
  }
  if (root["embeddings"]) {
    c.embeddings = scalar<std::string>(root["embeddings"], "embeddings", "a path or 'remote'");
    if (c.embeddings != "remote" && !c.embeddings.empty()) c.embeddings = resolve(base_dir, c.embeddings).string();
  }
  if (root["output"]) c.output = resolve(base_dir, scalar<std::string>(root["output"], "output", "a path"));
  else c.output = resolve(base_dir, "out");

  if (const auto v = root["variance"]) {
    reject_unknown(v, "variance", {"sample_sizes", "max_lengths", "resamples", "runtime_max_lengths", "max_stimuli"});
    if (v["sample_sizes"]) c.variance.sample_sizes = counts(v["sample_sizes"], "variance.sample_sizes");
    if (v["max_lengths"]) c.variance.max_lengths = counts(v["max_lengths"], "variance.max_lengths");
    if (v["resamples"]) c.variance.resamples = count(v["resamples"], "variance.resamples");
    if (v["runtime_max_lengths"]) {
      c.variance.runtime_max_lengths = counts(v["runtime_max_lengths"], "variance.runtime_max_lengths");
    }
    if (v["max_stimuli"]) c.variance.max_stimuli = count(v["max_stimuli"], "variance.max_stimuli");
  }
  if (const auto e = root["evaluate"]) {
    reject_unknown(e, "evaluate", {"responses", "baseline", "folds", "seeds", "permutation_resamples",
                                   "group_by_sentence", "spillover_lags"});
    if (e["responses"]) c.evaluate.responses = strings(e["responses"], "evaluate.responses");
    if (e["baseline"]) c.evaluate.baseline = strings(e["baseline"], "evaluate.baseline");
    if (e["folds"]) c.evaluate.folds = count(e["folds"], "evaluate.folds");
    if (e["seeds"]) c.evaluate.seeds = count(e["seeds"], "evaluate.seeds");
    if (e["permutation_resamples"]) {
      c.evaluate.permutation_resamples = count(e["permutation_resamples"], "evaluate.permutation_resamples");
    }
    if (e["group_by_sentence"]) {
      c.evaluate.group_by_sentence = scalar<bool>(e["group_by_sentence"], "evaluate.group_by_sentence", "a boolean");
    }
    if (const auto s = e["spillover_lags"]) {
      if (!s.IsMap()) throw ConfigError("config key 'evaluate.spillover_lags' must be a mapping");
      for (const auto& kv : s) {
        const auto key = kv.first.as<std::string>();
        const auto lags = scalar<int>(kv.second, "evaluate.spillover_lags." + key, "an integer");
        c.evaluate.spillover_lags[key] = lags;
      }
    }
  }

  if (c.measures.empty()) {
    for (const auto& m : catalog()) {
      if (!m.needs_representation || !c.embeddings.empty()) c.measures.push_back(m.name);
    }
  }
  validate(c);
  if (check_paths) {
    if (c.backend.kind == BackendKind::native) require_file(c.backend.corpus, "backend.corpus");
    if (!c.dataset.empty()) require_file(c.dataset, "dataset");
    if (!c.frequencies.empty()) require_file(c.frequencies, "frequencies");
    if (!c.embeddings.empty() && c.embeddings != "remote") require_file(c.embeddings, "embeddings");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

void validate(const RunConfig& c) {
  if (c.n < 1 || c.n > kMaxSamples) throw ConfigError("config key 'n' must be in [1, 2^20], got " + std::to_string(c.n));
  if (c.max_len > kMaxLength) throw ConfigError("config key 'max_len' must be in [0, 1024], got " + std::to_string(c.max_len));
  if (!(c.epsilon > 0.0)) throw ConfigError("config key 'epsilon' must be > 0");
  if (c.jobs < 1) throw ConfigError("config key 'jobs' must be >= 1");
  if (c.backend.kind == BackendKind::native) {
    if (c.backend.corpus.empty()) throw ConfigError("config key 'backend.corpus' is required for the native backend");
    if (c.backend.order < 1) throw ConfigError("config key 'backend.order' must be >= 1");
    if (!(c.backend.pseudocount > 0.0)) throw ConfigError("config key 'backend.pseudocount' must be > 0");
  } else {
    if (c.backend.remote.max_in_flight < 1) throw ConfigError("config key 'backend.max_in_flight' must be >= 1");
    if (!(c.backend.remote.timeout_s > 0.0)) throw ConfigError("config key 'backend.timeout_s' must be > 0");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.measures.size(); ++i) {
    const auto where = "measures[" + std::to_string(i) + "]";
    GSModel m;
    try {
      m = find_measure(c.measures[i], c.epsilon);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + where + "': " + e.what());
    }
    if (!seen.insert(c.measures[i]).second) throw ConfigError("config key '" + where + "': duplicate measure");
    if (m.needs_representation && c.embeddings.empty()) {
      throw ConfigError("config key '" + where + "': measure '" + m.name + "' needs 'embeddings'");
    }
  }
  for (const auto n : c.variance.sample_sizes) {
    if (n < 1 || n > kMaxSamples) throw ConfigError("config key 'variance.sample_sizes' entries must be in [1, 2^20]");
  }
  for (const auto* lens : {&c.variance.max_lengths, &c.variance.runtime_max_lengths}) {
    for (const auto l : *lens) {
      if (l > kMaxLength) throw ConfigError("config key 'variance' lengths must be in [0, 1024]");
    }
  }
  if (c.variance.resamples < 2) throw ConfigError("config key 'variance.resamples' must be >= 2");
  if (c.evaluate.folds < 2) throw ConfigError("config key 'evaluate.folds' must be >= 2");
  if (c.evaluate.seeds < 1) throw ConfigError("config key 'evaluate.seeds' must be >= 1");
  if (c.evaluate.permutation_resamples < 1) throw ConfigError("config key 'evaluate.permutation_resamples' must be >= 1");
  for (const auto& [response, lags] : c.evaluate.spillover_lags) {
    if (lags < 0) throw ConfigError("config key 'evaluate.spillover_lags." + response + "' must be >= 0");
  }
}

int spillover_for(const EvaluateConfig& config, const std::string& response) {
  if (const auto it = config.spillover_lags.find(response); it != config.spillover_lags.end()) return it->second;
  return response.rfind("rt_", 0) == 0 ? 2 : 0;
}

std::string config_json(const RunConfig& config) { return to_json_value(config).dump(); }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest config is not JSON: ") + e.what());
  }
  try {
    RunConfig c;
    const auto& b = j.at("backend");
    c.backend.kind = b.at("kind").get<std::string>() == "remote" ? BackendKind::remote : BackendKind::native;
    c.backend.corpus = b.at("corpus").get<std::string>();
    c.backend.order = b.at("order").get<int>();
    c.backend.pseudocount = b.at("pseudocount").get<double>();
    c.backend.remote.url = b.at("url").get<std::string>();
    c.backend.remote.timeout_s = b.at("timeout_s").get<double>();
    c.backend.remote.max_in_flight = b.at("max_in_flight").get<std::size_t>();
    c.backend.remote.retries = b.at("retries").get<int>();
    c.backend.remote.server_sampling = b.at("server_sampling").get<bool>();
    c.measures = j.at("measures").get<std::vector<std::string>>();
    c.n = j.at("n").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epsilon = j.at("epsilon").get<double>();
    c.jobs = j.at("jobs").get<unsigned>();
    c.prefer_exact = j.at("prefer_exact").get<bool>();
    c.exact_vs_mc = j.at("exact_vs_mc").get<bool>();
    c.independent_batches = j.value("independent_batches", false);
    c.dataset = j.at("dataset").get<std::string>();
    c.frequencies = j.at("frequencies").get<std::string>();
    c.embeddings = j.at("embeddings").get<std::string>();
    c.output = j.at("output").get<std::string>();
    const auto& v = j.at("variance");
    c.variance.sample_sizes = v.at("sample_sizes").get<std::vector<std::size_t>>();
    c.variance.max_lengths = v.at("max_lengths").get<std::vector<std::size_t>>();
    c.variance.resamples = v.at("resamples").get<std::size_t>();
    c.variance.runtime_max_lengths = v.at("runtime_max_lengths").get<std::vector<std::size_t>>();
    c.variance.max_stimuli = v.at("max_stimuli").get<std::size_t>();
    const auto& e = j.at("evaluate");
    c.evaluate.responses = e.at("responses").get<std::vector<std::string>>();
    c.evaluate.baseline = e.at("baseline").get<std::vector<std::string>>();
    c.evaluate.folds = e.at("folds").get<std::size_t>();
    c.evaluate.seeds = e.at("seeds").get<std::size_t>();
    c.evaluate.permutation_resamples = e.at("permutation_resamples").get<std::size_t>();
    c.evaluate.group_by_sentence = e.at("group_by_sentence").get<bool>();
    c.evaluate.spillover_lags = e.at("spillover_lags").get<std::map<std::string, int>>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest config is incomplete: ") + e.what());
  }
}

std::string config_hash(const RunConfig& config) { return hex(stable_hash(config_json(config))); }

std::string config_hash_except_seed(const RunConfig& config) {
  auto j = to_json_value(config);
  j.erase("seed");
  return hex(stable_hash(j.dump()));
}

Manifest make_manifest(const RunConfig& config, std::string backend) {
  Manifest m;
  m.config = config;
  m.config_hash = config_hash(config);
  m.config_hash_except_seed = config_hash_except_seed(config);
  m.seed = config.seed;
  m.backend = std::move(backend);
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j;
  j["config"] = json::parse(config_json(m.config));
  j["config_hash"] = m.config_hash;
  j["config_hash_except_seed"] = m.config_hash_except_seed;
  j["seed"] = m.seed;
  j["backend"] = m.backend;
  j["stages"] = json::array();
  for (const auto& s : m.stages) j["stages"].push_back({{"name", s.name}, {"wall_time_s", s.wall_time_s}});
  j["outputs"] = m.outputs;
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("cannot write manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
    Manifest m;
    m.config = config_from_json(j.at("config").dump());
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config_hash_except_seed = j.at("config_hash_except_seed").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.backend = j.at("backend").get<std::string>();
    for (const auto& s : j.at("stages")) m.stages.push_back({s.at("name"), s.at("wall_time_s")});
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace gensurp
