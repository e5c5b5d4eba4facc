#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gensurp/remote.hpp"

namespace gensurp {

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
};

struct ConformanceOptions {
  RemoteOptions remote;
  // Directory of recorded exchanges (*.json with method, path, request,
  // response) to replay. Recordings are model-specific.
  std::optional<std::filesystem::path> golden_dir;
  double tolerance = 1e-4;
  std::size_t contexts = 8;
  std::size_t samples = 16;
  std::size_t max_tokens = 6;
  std::uint64_t seed = 12345;
};

// Protocol checks against a running bridge. Never throws on a misbehaving
// server; failures are reported per check.
std::vector<ConformanceCheck> run_conformance(const ConformanceOptions& options);

// Writes one golden exchange per endpoint for the server at options.remote.url.
void record_golden(const ConformanceOptions& options, const std::filesystem::path& dir);

}  // namespace gensurp
