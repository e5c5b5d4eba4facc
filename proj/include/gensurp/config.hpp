#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gensurp/remote.hpp"

namespace gensurp {

inline constexpr std::size_t kMaxSamples = std::size_t{1} << 20;
inline constexpr std::size_t kMaxLength = 1024;

enum class BackendKind { native, remote };

struct BackendConfig {
  BackendKind kind = BackendKind::native;
  std::filesystem::path corpus;
  int order = 3;
  double pseudocount = 0.1;
  RemoteOptions remote;
};

struct VarianceConfig {
  std::vector<std::size_t> sample_sizes{4, 8, 16, 32, 64, 128, 256, 512};
  std::vector<std::size_t> max_lengths{5};
  std::size_t resamples = 1000;
  // Grid for the runtime profile.
  std::vector<std::size_t> runtime_max_lengths{5, 10, 15};
  std::size_t max_stimuli = 100;
};

struct EvaluateConfig {
  // Empty: every measurement column of the dataset.
  std::vector<std::string> responses;
  std::vector<std::string> baseline{"target_length", "frequency", "context_length"};
  std::size_t folds = 10;
  std::size_t seeds = 100;
  std::size_t permutation_resamples = 10000;
  bool group_by_sentence = false;
  // Per-response override; otherwise 2 for responses named rt_*, else 0.
  std::map<std::string, int> spillover_lags;
};

struct RunConfig {
  BackendConfig backend;
  std::vector<std::string> measures;
  std::size_t n = 512;
  std::size_t max_len = 5;
  std::uint64_t seed = 0;
  double epsilon = 1e-4;
  unsigned jobs = 1;
  // Closed-form measures use the exact path; with exact_vs_mc they are also
  // estimated by sampling so the two can be correlated.
  bool prefer_exact = true;
  bool exact_vs_mc = true;
  // By default every measure of a stimulus scores the same sample batch.
  bool independent_batches = false;
  std::filesystem::path dataset;
  std::filesystem::path frequencies;  // empty: every word gets the OOV floor
  // Empty: none; "remote": fetched from the bridge; otherwise a TSV path.
  std::string embeddings;
  std::filesystem::path output = "out";
  VarianceConfig variance;
  EvaluateConfig evaluate;
};

// YAML document. Relative paths resolve against the config file's directory.
// Unknown keys and out-of-range values raise ConfigError naming the key path.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = ".",
                       bool check_paths = true);
void validate(const RunConfig& config);

int spillover_for(const EvaluateConfig& config, const std::string& response);

// Canonical JSON of every field (paths as given after resolution).
std::string config_json(const RunConfig& config);
RunConfig config_from_json(const std::string& json_text);
// Hex FNV-1a of config_json(), with and without the seed.
std::string config_hash(const RunConfig& config);
std::string config_hash_except_seed(const RunConfig& config);

struct StageTiming {
  std::string name;
  double wall_time_s = 0.0;
};

struct Manifest {
  RunConfig config;
  std::string config_hash;
  std::string config_hash_except_seed;
  std::uint64_t seed = 0;
  std::string backend;
  std::vector<StageTiming> stages;
  std::vector<std::string> outputs;
};

Manifest make_manifest(const RunConfig& config, std::string backend);
// Throws DataError when the directory cannot be written.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace gensurp
