#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gensurp/cache.hpp"
#include "gensurp/config.hpp"
#include "gensurp/error.hpp"

using namespace gensurp;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gensurp_config_tests";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove_all(p);
  return p;
}

const char* kMinimal = "backend:\n  corpus: corpus.txt\n";

}  // namespace

TEST_CASE("load_config defaults and validation") {
  const auto c = parse_config(kMinimal, "/data", false);
  CHECK(c.n == 512);
  CHECK(c.max_len == 5);
  CHECK(c.epsilon == 1e-4);
  CHECK(c.backend.corpus == std::filesystem::path("/data/corpus.txt"));
  CHECK(c.variance.resamples == 1000);
  CHECK(c.evaluate.folds == 10);
  CHECK(c.evaluate.seeds == 100);
  CHECK(c.evaluate.permutation_resamples == 10000);
  CHECK(std::find(c.measures.begin(), c.measures.end(), "information_value") == c.measures.end());
  CHECK(std::find(c.measures.begin(), c.measures.end(), "surprisal") != c.measures.end());
  CHECK(spillover_for(c.evaluate, "rt_self_paced") == 2);
  CHECK(spillover_for(c.evaluate, "N400") == 0);

  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "n: 0\n", ".", false), doctest::Contains("'n'"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "n: 1048577\n", ".", false), ConfigError);
  CHECK_NOTHROW(parse_config(std::string(kMinimal) + "n: 1048576\nmax_len: 1024\n", ".", false));
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "max_len: 1025\n", ".", false), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "epsilon: 0\n", ".", false), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "warp_mode: neglog\n", ".", false),
                       doctest::Contains("warp_mode"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "variance:\n  resamplez: 3\n", ".", false),
                       doctest::Contains("variance.resamplez"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "measures: [surprisal, nonsense]\n", ".", false),
                       doctest::Contains("measures[1]"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "measures: [information_value]\n", ".", false),
                       doctest::Contains("embeddings"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "n: many\n", ".", false), doctest::Contains("'n'"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "seed: -1\n", ".", false), ConfigError);
  CHECK_THROWS_AS(parse_config("n: 4\n", ".", false), ConfigError);  // native backend needs a corpus
  CHECK_NOTHROW(parse_config("backend: {kind: remote, url: 'http://h:1'}\n", ".", false));
  CHECK_THROWS_WITH_AS(parse_config(kMinimal, "/nonexistent", true), doctest::Contains("backend.corpus"),
                       ConfigError);
}

TEST_CASE("config hashing and manifests") {
  const auto a = parse_config(std::string(kMinimal) + "seed: 1\n", "/d", false);
  const auto b = parse_config(std::string(kMinimal) + "seed: 1\n", "/d", false);
  const auto c = parse_config(std::string(kMinimal) + "seed: 2\n", "/d", false);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash_except_seed(a) == config_hash_except_seed(c));
  const auto d = parse_config(std::string(kMinimal) + "seed: 1\nn: 64\n", "/d", false);
  CHECK(config_hash_except_seed(a) != config_hash_except_seed(d));

  auto m = make_manifest(a, "ngram(order=3)");
  m.stages.push_back({"estimate", 1.5});
  m.outputs.push_back("estimates.tsv");
  const auto path = scratch("manifest") / "manifest.json";
  write_manifest(m, path);
  const auto back = read_manifest(path);
  CHECK(back.config_hash == m.config_hash);
  CHECK(config_hash(back.config) == m.config_hash);
  CHECK(back.stages.size() == 1);
  CHECK(back.outputs == m.outputs);
  CHECK(back.backend == m.backend);

  const auto other = make_manifest(c, "ngram(order=3)");
  CHECK(other.config_hash != m.config_hash);
  CHECK(other.config_hash_except_seed == m.config_hash_except_seed);
  CHECK_THROWS_AS(write_manifest(m, "/proc/forbidden/manifest.json"), DataError);
}

TEST_CASE("estimate cache") {
  const auto path = scratch("cache") / "estimates.tsv";
  {
    EstimateCache cache(path);
    CHECK(cache.size() == 0);
    const double third = 1.0 / 3.0;
    CHECK(cache.append({{CacheKey::exact("i1", "surprisal"), third},
                        {CacheKey::mc("i1", "entropy", 512, 5, 7), -0.1},
                        {CacheKey::exact("i1", "surprisal"), 9.0}}) == 2);
    CHECK(cache.append({{CacheKey::exact("i1", "surprisal"), 2.0}}) == 0);
    CHECK(*cache.find(CacheKey::exact("i1", "surprisal")) == third);
  }
  {
    EstimateCache reopened(path);
    REQUIRE(reopened.size() == 2);
    CHECK(*reopened.find(CacheKey::exact("i1", "surprisal")) == 1.0 / 3.0);
    CHECK(*reopened.find(CacheKey::mc("i1", "entropy", 512, 5, 7)) == -0.1);
    CHECK_FALSE(reopened.find(CacheKey::mc("i1", "entropy", 512, 5, 8)).has_value());
  }
  SUBCASE("torn final line is dropped") {
    std::ofstream(path, std::ios::app) << "i2\tsurprisal\texa";
    EstimateCache cache(path);
    CHECK(cache.size() == 2);
    cache.append({{CacheKey::exact("i2", "surprisal"), 4.0}});
    EstimateCache again(path);
    CHECK(again.size() == 3);
  }
  SUBCASE("corruption in the middle is an error") {
    std::ofstream(path, std::ios::app) << "garbage\n";
    std::ofstream(path, std::ios::app) << "i3\tsurprisal\texact\t0\t0\t0\t1\t0\n";
    CHECK_THROWS_WITH_AS(EstimateCache{path}, doctest::Contains(":4:"), DataError);
  }
  CHECK(format_value(0.1) == "0.1");
  CHECK_THROWS_AS(EstimateCache(path).append({{CacheKey::exact("a\tb", "m"), 1.0}}), DataError);
}
