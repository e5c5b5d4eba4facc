#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "gensurp/error.hpp"
#include "gensurp/eval.hpp"
#include "synthetic_regression.hpp"

using namespace gensurp;
using namespace gensurp::testing;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("gensurp_eval_" + name);
  std::ofstream(path) << body;
  return path;
}

std::vector<Stimulus> sentence_rows() {
  // Two sentences, three words each.
  std::vector<Stimulus> rows;
  for (int s = 0; s < 2; ++s) {
    for (int w = 0; w < 3; ++w) {
      Stimulus st;
      st.item_id = std::to_string(s) + "-" + std::to_string(w);
      st.sentence_id = "s" + std::to_string(s);
      st.word_index = w;
      st.target = "word";
      st.target_length = 4 + static_cast<std::size_t>(w);
      st.context_length = static_cast<std::size_t>(w + 1);
      st.frequency = 10.0 * (s + 1);
      st.measurements["rt"] = 200.0 + 10 * w + s;
      rows.push_back(st);
    }
  }
  return rows;
}

}  // namespace

TEST_CASE("load_dataset and frequencies") {
  const auto freq = write_temp("freq.tsv", "word\tcount_per_million\nthe\t50000\ndog\t120.5\n");
  const auto data = write_temp("data.tsv",
                               "item_id\tsentence_id\tword_index\tcontext\ttarget\tcloze_p\tN400\n"
                               "1\ts1\t2\tthe big\tdog\t0.4\t\n"
                               "2\ts1\t3\tthe big dog\tbarked\t0.1\t-1.5\n");
  const auto table = load_frequencies(freq);
  CHECK(table.lookup("dog") == 120.5);
  CHECK(table.lookup("zebra") == kFrequencyFloor);
  const auto rows = load_dataset(data, table);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].frequency == 120.5);
  CHECK(rows[1].frequency == kFrequencyFloor);
  CHECK(rows[0].context_length == 2);
  CHECK(rows[1].target_length == 6);
  CHECK_FALSE(rows[0].measurements.at("N400").has_value());
  CHECK(*rows[1].measurements.at("N400") == -1.5);
  CHECK(*rows[0].measurements.at("cloze_p") == 0.4);

  const auto bad = write_temp("bad.tsv",
                              "item_id\tsentence_id\tword_index\tcontext\ttarget\trating\n"
                              "1\ts\t0\ta\tb\t3\n"
                              "2\ts\t1\ta b\tc\tlots\n");
  try {
    load_dataset(bad);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.tsv:3:") != std::string::npos);
  }
  const auto schema = write_temp("schema.tsv", "item_id\tcontext\ttarget\n1\ta\tb\n");
  CHECK_THROWS_WITH_AS(load_dataset(schema), doctest::Contains("sentence_id"), DataError);
  CHECK(utf8_length("caf\xc3\xa9") == 4);
}

TEST_CASE("laplace_cloze") {
  const auto c = laplace_cloze({{"A", 3}, {"B", 1}}, "A", 1.0);
  CHECK(c.probability == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
  const auto unseen = laplace_cloze({{"A", 3}, {"B", 1}}, "C", 1.0);
  CHECK(unseen.probability == doctest::Approx(1.0 / 7.0));
  const auto sharp = laplace_cloze({{"A", 50}}, "A", 1e-9);
  CHECK(sharp.probability > 1 - 1e-9);
  CHECK(sharp.entropy < 1e-8);
  const auto flat = laplace_cloze({{"a", 5}, {"b", 5}, {"c", 5}, {"d", 5}}, "a", 1.0);
  CHECK(flat.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK_THROWS_AS(laplace_cloze({}, "a"), DataError);
}

TEST_CASE("build_design") {
  const auto rows = sentence_rows();
  PredictorTable est;
  for (const auto& r : rows) est["surprisal"][r.item_id] = 1.0 + r.word_index;
  RegressionSpec spec;
  spec.response = "rt";
  spec.targets = {"surprisal"};
  const auto d0 = build_design(spec, rows, est);
  CHECK(d0.x.cols() == 5);
  CHECK(d0.x.rows() == 6);
  CHECK(d0.dropped == 0);
  CHECK(d0.baseline_columns.size() == 4);
  CHECK(d0.x(0, 2) == doctest::Approx(std::log(11.0)));

  spec.spillover_lags = 2;
  const auto d2 = build_design(spec, rows, est);
  CHECK(d2.x.cols() == 11);  // no lagged context_length
  CHECK(d2.x.rows() == 2);  // only word_index 2 has two predecessors
  CHECK(d2.dropped == 4);
  CHECK(d2.columns[5] == "target_length@-1");
  CHECK(d2.columns[7] == "surprisal@-1");
  CHECK(d2.x(0, 7) == 2.0);  // surprisal of the previous word
  CHECK(std::find(d2.columns.begin(), d2.columns.end(), "context_length@-1") == d2.columns.end());

  spec.spillover_lags = 0;
  est["surprisal"].erase("1-1");
  CHECK(build_design(spec, rows, est).dropped == 1);
  spec.response = "missing";
  CHECK_THROWS_AS(build_design(spec, rows, est), DataError);
}

TEST_CASE("ols_fit and r_squared") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 0, 2, 4;
  const auto fit = ols_fit(x, y);
  CHECK(std::abs(fit.beta(0)) < 1e-12);
  CHECK(std::abs(fit.beta(1) - 2.0) < 1e-12);
  CHECK(r_squared(fit.beta, x, y) == doctest::Approx(1.0));

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(3, 5.0);
  CHECK(r_squared(ols_fit(x, flat).beta, x, flat) == 0.0);

  SUBCASE("signal-to-total variance ratio") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> z;
    const int n = 10000;
    Eigen::MatrixXd a(n, 2), b(n, 2);
    Eigen::VectorXd ya(n), yb(n);
    for (int i = 0; i < n; ++i) {
      a(i, 0) = b(i, 0) = 1.0;
      a(i, 1) = z(gen);
      ya(i) = a(i, 1) + z(gen);
      b(i, 1) = z(gen);
      yb(i) = b(i, 1) + z(gen);
    }
    CHECK(std::abs(r_squared(ols_fit(a, ya).beta, b, yb) - 0.5) < 0.03);
  }
  SUBCASE("rank deficiency falls back to least norm") {
    Eigen::MatrixXd dup(4, 3);
    dup << 1, 1, 1, 1, 2, 2, 1, 3, 3, 1, 4, 4;
    Eigen::VectorXd yy(4);
    yy << 2, 4, 6, 8;
    const auto f = ols_fit(dup, yy);
    CHECK(f.rank_deficient);
    CHECK(f.beta(1) == doctest::Approx(f.beta(2)));
    CHECK((dup * f.beta - yy).norm() < 1e-9);
  }
}

TEST_CASE("assign_folds") {
  std::vector<std::string> keys;
  for (int i = 0; i < 53; ++i) keys.push_back("k" + std::to_string(i));
  const auto a = assign_folds(keys, 10, 3);
  CHECK(a == assign_folds(keys, 10, 3));
  CHECK(a != assign_folds(keys, 10, 4));
  std::vector<int> sizes(10, 0);
  for (auto f : a) ++sizes[f];
  for (int s : sizes) CHECK((s == 5 || s == 6));
  // Fold of a key does not depend on row order.
  std::vector<std::string> reversed(keys.rbegin(), keys.rend());
  const auto b = assign_folds(reversed, 10, 3);
  for (std::size_t i = 0; i < keys.size(); ++i) CHECK(b[keys.size() - 1 - i] == a[i]);
  CHECK_THROWS_AS(assign_folds(std::vector<std::string>{"a", "b"}, 10, 0), DataError);
}

TEST_CASE("delta_r2_cv") {
  const auto data = synthetic_regression(1500, 2.0, 5);
  auto spec = synthetic_spec({"m"}, 10);
  const auto report = delta_r2_cv(spec, data.stimuli, data.estimates);
  CHECK(report.delta_r2.size() == 100);
  CHECK(report.n_rows == 1500);
  CHECK(std::abs(report.delta.mean - 4.0 / 6.0) < 0.02);
  CHECK(report.delta.low <= report.delta.mean);
  CHECK(report.delta.high >= report.delta.mean);
  CHECK(report.p_value < 0.001);

  SUBCASE("deterministic and independent of jobs") {
    spec.jobs = 4;
    const auto again = delta_r2_cv(spec, data.stimuli, data.estimates);
    CHECK(again.delta_r2 == report.delta_r2);
    CHECK(again.p_value == report.p_value);
  }
  SUBCASE("redundant target") {
    auto redundant = spec;
    redundant.targets = {"x"};
    const auto r = delta_r2_cv(redundant, data.stimuli, data.estimates);
    CHECK(std::abs(r.delta.mean) < 0.005);
    CHECK(r.p_value > 0.05);
    CHECK(r.rank_deficient_fits == r.delta_r2.size());
  }
  SUBCASE("affine transform of a predictor") {
    auto shifted = data;
    for (auto& [id, v] : shifted.estimates["m"]) v = 1000.0 * v + 7.0;
    const auto r = delta_r2_cv(spec, shifted.stimuli, shifted.estimates);
    for (std::size_t i = 0; i < r.delta_r2.size(); ++i) CHECK(std::abs(r.delta_r2[i] - report.delta_r2[i]) < 1e-9);
  }
  SUBCASE("grouped folds") {
    auto grouped = spec;
    grouped.group_by_sentence = true;
    const auto r = delta_r2_cv(grouped, data.stimuli, data.estimates);
    CHECK(std::abs(r.delta.mean - 4.0 / 6.0) < 0.03);
  }
  SUBCASE("json report") {
    const auto j = nlohmann::json::parse(to_json(report));
    CHECK(j["delta_r2"]["samples"].size() == 100);
    CHECK(j["n_rows"] == 1500);
    CHECK(j["p_value"].get<double>() == report.p_value);
  }
}

TEST_CASE("permutation_test") {
  std::vector<double> base(1000), same(1000), better(1000);
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i] = u(gen);
    same[i] = base[i];
    better[i] = base[i] + 1.0;
  }
  CHECK(permutation_test(base, same, 2000, 1) >= 0.45);
  CHECK(permutation_test(base, better, 10000, 1) <= 1.0 / 10000 + 1e-12);
  CHECK(permutation_test(base, better, 10000, 1) >= 1.0 / 10001);
  std::normal_distribution<double> z;
  for (auto& v : same) v += z(gen);
  const double p = permutation_test(base, same, 500, 9);
  CHECK(p >= 1.0 / 501);
  CHECK(p <= 1.0);
  CHECK_THROWS_AS(permutation_test(std::vector<double>{1}, std::vector<double>{1}), DataError);
}

TEST_CASE("substituting a baseline predictor") {
  auto data = testing::synthetic_regression(1500, 2.0, 21);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  for (const auto& s : data.stimuli) {
    data.estimates["copy"][s.item_id] = data.estimates["m"][s.item_id];
    data.estimates["noise"][s.item_id] = z(gen);
  }
  auto spec = testing::synthetic_spec({"copy"}, 5);
  spec.baseline = {"x", "m"};
  spec.replaced = {"m"};
  const auto design = build_design(spec, data.stimuli, data.estimates);
  CHECK(design.columns.size() == 4);
  CHECK(design.baseline_columns == std::vector<Eigen::Index>{0, 1, 2});
  CHECK(design.target_columns == std::vector<Eigen::Index>{0, 1, 3});
  // Swapping m for an identical column changes nothing.
  CHECK(std::abs(delta_r2_cv(spec, design).delta.mean) < 1e-12);

  spec.targets = {"noise"};
  const auto worse = delta_r2_cv(spec, data.stimuli, data.estimates);
  CHECK(worse.delta.mean == doctest::Approx(-4.0 / 6.0).epsilon(0.03));
  CHECK(worse.p_value > 0.5);

  spec.replaced = {"frequency"};
  CHECK_THROWS_AS(build_design(spec, data.stimuli, data.estimates), ConfigError);
}
