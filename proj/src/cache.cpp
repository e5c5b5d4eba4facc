#include "gensurp/cache.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "gensurp/error.hpp"

namespace gensurp {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size();
}

}  // namespace

CacheKey CacheKey::exact(std::string item, std::string measure) {
  return {std::move(item), std::move(measure), EstimateMode::exact, 0, 0, 0};
}

CacheKey CacheKey::mc(std::string item, std::string measure, std::size_t n, std::size_t max_len, std::uint64_t seed) {
  return {std::move(item), std::move(measure), EstimateMode::mc, n, max_len, seed};
}

std::string CacheKey::str() const {
  return item_id + '\t' + measure + '\t' + std::string(to_string(mode)) + '\t' + std::to_string(n) + '\t' +
         std::to_string(max_len) + '\t' + std::to_string(seed);
}

std::string format_value(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? end : buf);
}

EstimateCache::EstimateCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_);
    if (!out) throw DataError("cannot create estimates cache " + path_.string());
    out << kCacheHeader << "\n";
    return;
  }
  std::ifstream in(path_, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::size_t pos = 0, lineno = 0, good_end = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
    ++lineno;
    const auto fail = [&](const std::string& msg) {
      if (!terminated) {
        spdlog::warn("{}: dropping incomplete final line {}", path_.string(), lineno);
        return true;
      }
      throw DataError(path_.string() + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (lineno == 1) {
      if (line != kCacheHeader) throw DataError(path_.string() + ":1: unexpected header");
    } else {
      const auto f = split_tabs(line);
      CacheRow row;
      bool torn = false;
      if (f.size() != 8) {
        torn = fail("expected 8 fields");
      } else {
        row.key.item_id = f[0];
        row.key.measure = f[1];
        try {
          row.key.mode = parse_mode(f[2]);
        } catch (const std::exception&) {
          torn = fail("bad mode '" + f[2] + "'");
        }
        if (!torn && !(parse_number(f[3], row.key.n) && parse_number(f[4], row.key.max_len) &&
                       parse_number(f[5], row.key.seed) && parse_number(f[6], row.value) &&
                       parse_number(f[7], row.wall_time_s))) {
          torn = fail("malformed numeric field");
        }
      }
      if (torn) break;
      const auto key = row.key.str();
      if (!index_.emplace(key, row.value).second) {
        throw DataError(path_.string() + ":" + std::to_string(lineno) + ": duplicate key");
      }
      rows_.push_back(std::move(row));
    }
    if (!terminated) {
      // A complete row without its newline: keep it, restore the terminator.
      good_end = text.size();
      std::ofstream(path_, std::ios::app) << "\n";
      return;
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < text.size()) std::filesystem::resize_file(path_, good_end);
}

std::optional<double> EstimateCache::find(const CacheKey& key) const {
  std::lock_guard lock(mutex_);
  const auto it = index_.find(key.str());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EstimateCache::append(const std::vector<CacheRow>& rows) {
  std::lock_guard lock(mutex_);
  std::string buffer;
  std::size_t written = 0;
  for (const auto& row : rows) {
    for (const auto* field : {&row.key.item_id, &row.key.measure}) {
      if (field->find_first_of("\t\n") != std::string::npos) {
        throw DataError("cache key field contains a tab or newline: '" + *field + "'");
      }
    }
    const auto key = row.key.str();
    if (!index_.emplace(key, row.value).second) continue;
    rows_.push_back(row);
    buffer += key + '\t' + format_value(row.value) + '\t' + format_value(row.wall_time_s) + '\n';
    ++written;
  }
  if (written == 0) return 0;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << buffer;
  out.flush();
  if (!out) throw DataError("cannot append to estimates cache " + path_.string());
  return written;
}

}  // namespace gensurp
