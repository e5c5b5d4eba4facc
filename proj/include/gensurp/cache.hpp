#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gensurp/estimator.hpp"

namespace gensurp {

// Identity of one estimate. Exact rows carry n = max_len = seed = 0 so they
// are shared by runs that differ only in sampling parameters.
struct CacheKey {
  std::string item_id;
  std::string measure;
  EstimateMode mode = EstimateMode::exact;
  std::size_t n = 0;
  std::size_t max_len = 0;
  std::uint64_t seed = 0;

  static CacheKey exact(std::string item, std::string measure);
  static CacheKey mc(std::string item, std::string measure, std::size_t n, std::size_t max_len, std::uint64_t seed);
  std::string str() const;
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheRow {
  CacheKey key;
  double value = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kCacheHeader = "item_id\tmeasure\tmode\tN\tL\tseed\tvalue\twall_time_s";

// Append-only TSV of estimates. Values are written in shortest round-trip form
// so they read back bit-identically; wall_time_s is informational and is the
// only column that differs between otherwise identical runs. One writer per file; appends are
// serialized and flushed per batch. A torn final line left by an interrupted
// run is dropped on open.
class EstimateCache {
 public:
  explicit EstimateCache(std::filesystem::path path);

  std::optional<double> find(const CacheKey& key) const;
  bool contains(const CacheKey& key) const { return find(key).has_value(); }
  // Rows whose key is already present are ignored. Returns the number written.
  std::size_t append(const std::vector<CacheRow>& rows);
  const std::vector<CacheRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<CacheRow> rows_;
  std::unordered_map<std::string, double> index_;
  mutable std::mutex mutex_;
};

std::string format_value(double v);

}  // namespace gensurp
