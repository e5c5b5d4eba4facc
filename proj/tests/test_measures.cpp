#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gensurp/error.hpp"
#include "gensurp/measures.hpp"

using namespace gensurp;
using namespace gensurp::testing;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

std::vector<Continuation> as_batch(const Alphabet& ab, std::initializer_list<const char*> texts) {
  std::vector<Continuation> out;
  for (const char* t : texts) out.push_back({ab.encode_text(t), true});
  return out;
}

TokenString random_string(std::mt19937_64& gen, std::size_t max_len) {
  TokenString s(gen() % (max_len + 1));
  for (auto& x : s) x = static_cast<Symbol>(gen() % 2);
  return s;
}

}  // namespace

TEST_CASE("warping functions") {
  const WarpingFunction id{WarpKind::identity}, neglog{WarpKind::neglog};
  CHECK(id(0.37) == 0.37);
  CHECK(neglog(0.0) == doctest::Approx(-std::log(1e-4)));
  CHECK(std::isfinite(neglog(0.0)));
  CHECK(neglog(0.5) == -std::log(0.5 + 1e-4));
}

TEST_CASE("catalog flags") {
  for (const char* name : {"exp_next_surprisal", "exp_next_probability", "exp_next_info_value",
                           "entropy", "exp_info_value"}) {
    CHECK(is_anticipatory(find_measure(name)));
  }
  for (const char* name : {"surprisal", "probability", "information_value", "pmi",
                           "sim_adjusted_surprisal", "semantic_update"}) {
    CHECK_FALSE(is_anticipatory(find_measure(name)));
  }
  for (const char* name : {"surprisal", "probability", "exp_next_surprisal",
                           "exp_next_probability", "pmi"}) {
    CHECK(find_measure(name).closed_form);
  }
  CHECK_FALSE(find_measure("entropy").closed_form);
  CHECK_FALSE(find_measure("exp_next_info_value").closed_form);
  CHECK(find_measure("surprisal", 1e-3).warping.epsilon == 1e-3);
  CHECK_THROWS_AS(find_measure("warp_mode"), ConfigError);
  CHECK(catalog().size() == 11);
}

TEST_CASE("indicator") {
  const Alphabet ab = ab_alphabet();
  CHECK(score_indicator(str(ab, "a b b"), str(ab, "a")) == 1.0);
  CHECK(score_indicator(str(ab, "b a"), str(ab, "a")) == 0.0);
  CHECK(score_indicator(str(ab, "b a"), TokenString{}) == 1.0);

  std::mt19937_64 gen(1);
  for (int i = 0; i < 300; ++i) {
    const auto v = random_string(gen, 4), w = random_string(gen, 3);
    CHECK(score_indicator(v, w) == score_indicator(v, w) * score_indicator(w, w));
    CHECK(score_indicator(v, TokenString{}) == 1.0);
  }
}

TEST_CASE("information value and similarity") {
  const Alphabet ab = ab_alphabet();
  const auto table = orthonormal_embeddings();
  const Representer rep(table, ab);
  const double d_ab_a = 1.0 - kInvSqrt2;
  CHECK(score_info_value(str(ab, "a b"), str(ab, "a"), rep) == doctest::Approx(d_ab_a));
  CHECK(score_info_value(str(ab, "a b"), str(ab, "a"), rep) == doctest::Approx(0.2929).epsilon(1e-4));
  CHECK(score_info_value(str(ab, "a b"), str(ab, "b a"), rep) == 0.0);
  CHECK(score_info_value(str(ab, "b"), str(ab, "a"), rep) == doctest::Approx(1.0));

  const double z = 1.0 - d_ab_a / 2.0;
  CHECK(score_similarity_adjusted(str(ab, "a b"), str(ab, "a"), rep) == doctest::Approx(z));
  CHECK(z == doctest::Approx(0.8536).epsilon(1e-4));
  const WarpingFunction neglog{WarpKind::neglog};
  CHECK(neglog(z) == doctest::Approx(0.1584).epsilon(1e-3));
  CHECK(score_similarity_adjusted(str(ab, "a"), str(ab, "a"), rep) == 1.0);
  CHECK(neglog(1.0) == doctest::Approx(0.0).epsilon(1e-3));

  const EmbeddingTable antipodal(1, {{"a", {1}}, {"b", {-1}}});
  const Representer rep1(antipodal, ab);
  CHECK(score_similarity_adjusted(str(ab, "a"), str(ab, "b"), rep1) == doctest::Approx(0.0));

  std::mt19937_64 gen(9);
  for (int i = 0; i < 300; ++i) {
    const auto v = random_string(gen, 4), w = random_string(gen, 4);
    const double d = score_info_value(v, w, rep);
    CHECK(d == score_info_value(w, v, rep));
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(score_info_value(v, v, rep) == 0.0);
    const double s = score_similarity_adjusted(v, w, rep);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("next-symbol scorers") {
  const auto lm = toy();
  const Alphabet& ab = lm.alphabet();
  const auto next = lm.next_distribution({});
  CHECK(score_next_symbol_surprisal(str(ab, "a b"), next) == doctest::Approx(std::log(2.0)));
  CHECK(score_next_symbol_surprisal(TokenString{}, next) == doctest::Approx(-std::log(0.2)));
  CHECK(score_next_symbol_surprisal(TokenString{}, next) == doctest::Approx(1.6094).epsilon(1e-4));
  CHECK(score_next_symbol_probability(str(ab, "b a"), next) == 0.3);
  CHECK(score_next_symbol_probability(TokenString{}, next) == 0.2);

  const auto det = always_a().next_distribution({});
  CHECK(score_next_symbol_surprisal(str(ab, "a"), det) == 0.0);
  CHECK(score_next_symbol_probability(str(ab, "a"), det) == 1.0);

  const auto table = orthonormal_embeddings();
  const Representer rep(table, ab);
  CHECK(score_next_symbol_info_value(str(ab, "a b"), next, rep) == doctest::Approx(0.3 + 0.2));
  CHECK(score_next_symbol_info_value(str(ab, "a"), det, rep) == 0.0);

  // Exhaustive pair sum over Σ ∪ {EOS}: 1 − Σ p² = 0.62.
  const double p[] = {0.5, 0.3, 0.2};
  const TokenString first[] = {str(ab, "a"), str(ab, "b"), TokenString{}};
  double mean = 0.0;
  for (int i = 0; i < 3; ++i) mean += p[i] * score_next_symbol_info_value(first[i], next, rep);
  CHECK(mean == doctest::Approx(0.62).epsilon(1e-12));
}

TEST_CASE("entropy scorer") {
  const auto lm = toy();
  const Alphabet& ab = lm.alphabet();
  CHECK(score_entropy({str(ab, "a"), true}, {}, lm) == doctest::Approx(-std::log(0.1)));
  CHECK(score_entropy({str(ab, "a"), true}, {}, lm) == doctest::Approx(2.3026).epsilon(1e-4));
  // Truncated continuations use the prefix probability.
  CHECK(score_entropy({str(ab, "a"), false}, {}, lm) == doctest::Approx(std::log(2.0)));
  CHECK(score_entropy({str(ab, "a"), true}, {}, a_then_stop()) == 0.0);
}

TEST_CASE("entropy of the memoryless stop process") {
  // E[−log p(v)] = h / p_EOS with h the per-step entropy. Oracle: sum over
  // compositions (j a's, k−j b's), which covers every string of length k.
  const double pa = 0.5, pb = 0.3, pe = 0.2;
  const double h = -(pa * std::log(pa) + pb * std::log(pb) + pe * std::log(pe));
  CHECK(h == doctest::Approx(1.0297).epsilon(1e-4));
  CHECK(h / pe == doctest::Approx(5.1482).epsilon(1e-4));

  auto oracle = [&](int max_len) {
    double total = 0.0;
    for (int k = 0; k <= max_len; ++k) {
      for (int j = 0; j <= k; ++j) {
        const double log_choose = std::lgamma(k + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0);
        const double logp = j * std::log(pa) + (k - j) * std::log(pb) + std::log(pe);
        total += std::exp(log_choose + logp) * -logp;
      }
    }
    return total;
  };
  CHECK(oracle(40) == doctest::Approx(h / pe).epsilon(2e-3));
  CHECK(oracle(300) == doctest::Approx(h / pe).epsilon(1e-12));
}

TEST_CASE("expected information value") {
  const Alphabet ab = ab_alphabet();
  const auto table = orthonormal_embeddings();
  const Representer rep(table, ab);
  const auto two = as_batch(ab, {"a", "b"});
  CHECK(score_expected_info_value(0, two, rep) == doctest::Approx(1.0));
  const auto same = as_batch(ab, {"a b", "b a", "a b"});
  CHECK(score_expected_info_value(1, same, rep) == 0.0);
  const auto three = as_batch(ab, {"a", "b", "a b"});
  CHECK(score_expected_info_value(2, three, rep) == doctest::Approx(1.0 - kInvSqrt2));
  CHECK_THROWS_AS(score_expected_info_value(0, as_batch(ab, {"a"}), rep), DataError);
  CHECK_THROWS_AS(score_expected_info_value(str(ab, "a"), std::vector<Continuation>{}, rep),
                  DataError);

  // Grouped batch scorer agrees with the direct U-statistic.
  const auto lm = toy();
  std::mt19937_64 gen(4);
  std::vector<Continuation> batch;
  for (int i = 0; i < 40; ++i) batch.push_back({random_string(gen, 3), true});
  const ScoreContext ctx{&lm, &rep, {}};
  const auto scores = score_batch(find_measure("exp_info_value"), batch, {}, ctx);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(scores[i] == doctest::Approx(score_expected_info_value(i, batch, rep)).epsilon(1e-12));
  }
}

TEST_CASE("pointwise mutual information") {
  const auto lm = toy();
  const Alphabet& ab = lm.alphabet();
  const TokenString c = str(ab, "a");
  const double pc = prefix_probability(lm, c, {});
  CHECK(pc == 0.5);
  CHECK(score_pmi(str(ab, "b a"), str(ab, "b"), pc) == 0.5);
  CHECK(score_pmi(str(ab, "a b"), str(ab, "b"), pc) == 0.0);
  CHECK(score_pmi(str(ab, "b"), str(ab, "b"), prefix_probability(lm, {}, {})) == 1.0);
  // The log-warped expectation: ln(p(c) · π(b | c)) = ln 0.15.
  CHECK(std::log(0.5 * 0.3) == doctest::Approx(-1.897).epsilon(1e-3));
}

TEST_CASE("semantic update") {
  const Alphabet ab = ab_alphabet();
  const EmbeddingTable table(3, {{"a", {1, 0, 0}}, {"b", {0, 1, 0}}});
  const Representer rep(table, ab);
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
  const double expected = 2.0 * (sig1 - 0.5);
  CHECK(expected == doctest::Approx(0.4621).epsilon(1e-4));
  CHECK(score_semantic_update(str(ab, "a b"), str(ab, "a"), str(ab, "a b"), rep) ==
        doctest::Approx(expected));
  CHECK(score_semantic_update(str(ab, "b"), str(ab, "a"), str(ab, "b"), rep) == 0.0);
  CHECK(score_semantic_update(str(ab, "a"), str(ab, "a"), str(ab, "b a"), rep) == 0.0);
  CHECK_THROWS_AS(score_semantic_update(str(ab, "a"), str(ab, "a"), {}, rep), DataError);
}

TEST_CASE("anticipatory scorers ignore the target") {
  const auto lm = toy();
  const Alphabet& ab = lm.alphabet();
  const auto table = orthonormal_embeddings();
  const Representer rep(table, ab);
  std::mt19937_64 gen(12);
  std::vector<Continuation> batch;
  for (int i = 0; i < 30; ++i) batch.push_back({random_string(gen, 4), gen() % 2 == 0});
  const ScoreContext ctx{&lm, &rep, str(ab, "b a")};
  for (const auto& model : catalog()) {
    const auto base = score_batch(model, batch, str(ab, "a"), ctx);
    bool invariant = true;
    for (int i = 0; i < 20; ++i) {
      auto w = random_string(gen, 3);
      if (w.empty()) w.push_back(1);
      invariant = invariant && score_batch(model, batch, w, ctx) == base;
    }
    CHECK_MESSAGE(invariant == is_anticipatory(model), model.name);
  }
}

TEST_CASE("score_batch errors carry the sample index") {
  const auto lm = toy();
  const Alphabet& ab = lm.alphabet();
  const EmbeddingTable partial(2, {{"a", {1, 0}}});
  const Representer rep(partial, ab);
  const ScoreContext ctx{&lm, &rep, {}};
  const auto batch = as_batch(ab, {"a", "a", "b"});
  CHECK_THROWS_WITH_AS(score_batch(find_measure("information_value"), batch, str(ab, "a"), ctx),
                       "sample 2: no embedding for token 'b'", DataError);
  const ScoreContext no_rep{&lm, nullptr, {}};
  CHECK_THROWS_AS(score_batch(find_measure("information_value"), batch, str(ab, "a"), no_rep),
                  DataError);
}
