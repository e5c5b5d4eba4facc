// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fixtures.hpp"
#include "gensurp/analysis.hpp"
#include "gensurp/estimator.hpp"
#include "gensurp/eval.hpp"
#include "gensurp/ngram.hpp"
#include "gensurp/rng.hpp"
#include "gensurp/testbed.hpp"
#include "oracles.hpp"
#include "synthetic_regression.hpp"

using namespace gensurp;
using namespace gensurp::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects sub-checks of one criterion; prints the failing ones.
struct Criterion {
  std::string name;
  bool ok = true;
  std::vector<std::string> notes;

  void check(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Criterion oracle_equivalence() {
  Criterion c{"oracle equivalence on the toy LM"};
  const auto start = Clock::now();
  const auto lm = toy();
  const auto table = orthonormal_embeddings();
  const Representer rep(table, lm.alphabet());
  const TokenString a{0}, b{1};

  const double h = -(0.5 * std::log(0.5) + 0.3 * std::log(0.3) + 0.2 * std::log(0.2));
  const struct {
    const char* name;
    double value;
    double expected;
    double rounded;
  } exact[] = {
      {"surprisal", estimate_exact(find_measure("surprisal"), a, b, lm).value, std::log(2.0), 0.6931},
      {"probability", estimate_exact(find_measure("probability"), a, b, lm).value, 0.5, 0.5},
      {"exp_next_surprisal", estimate_exact(find_measure("exp_next_surprisal"), a, b, lm).value, h, 1.0297},
      {"exp_next_probability", estimate_exact(find_measure("exp_next_probability"), a, b, lm).value,
       0.5 * 0.5 + 0.3 * 0.3 + 0.2 * 0.2, 0.38},
      {"exp_next_info_value", estimate_exact(find_measure("exp_next_info_value"), a, b, lm, &rep).value,
       1.0 - (0.5 * 0.5 + 0.3 * 0.3 + 0.2 * 0.2), 0.62},
      {"next-symbol info value, v = a", score_next_symbol_info_value(a, lm.next_distribution(b), rep), 0.3 + 0.2,
       0.5},
  };
  for (const auto& e : exact) {
    c.check(std::abs(e.value - e.expected) <= 1e-9, fmt("%s exact %.12g vs %.12g", e.name, e.value, e.expected));
    c.check(std::abs(e.value - e.rounded) <= 5e-5, fmt("%s exact %.6g vs stated %.4g", e.name, e.value, e.rounded));
  }

  const std::size_t n = std::size_t{1} << 15, max_len = 20;
  double worst_rel = 0.0, worst_nats = 0.0;
  for (const auto& model : catalog()) {
    const double oracle = truncated_oracle(model, a, b, lm, &rep, max_len);
    const double mc = estimate_mc(model, a, b, lm, &rep, n, max_len, 11).value;
    if (model.warping.kind == WarpKind::identity) {
      const double rel = std::abs(mc - oracle) / std::abs(oracle);
      worst_rel = std::max(worst_rel, rel);
      c.check(rel <= 0.01, fmt("%s MC %.6g vs oracle %.6g (rel %.4f)", model.name.c_str(), mc, oracle, rel));
    } else {
      // neglog and the log warp of PMI are both in nats.
      const double diff = std::abs(mc - oracle);
      worst_nats = std::max(worst_nats, diff);
      c.check(diff <= 0.02, fmt("%s MC %.6g vs oracle %.6g (%.4f nats)", model.name.c_str(), mc, oracle, diff));
    }
  }
  const double elapsed = seconds_since(start);
  c.check(elapsed < 120.0, fmt("runtime %.1f s", elapsed));
  c.note(fmt("worst relative error %.4f, worst log-scale error %.4f nats, %.1f s", worst_rel, worst_nats, elapsed));
  return c;
}

Criterion unbiasedness() {
  Criterion c{"identity-warped MC estimates are unbiased"};
  const auto lm = toy();
  const auto table = orthonormal_embeddings();
  const Representer rep(table, lm.alphabet());
  const TokenString a{0}, b{1};
  const std::size_t n = 256, max_len = 20, runs = 200;
  double worst = 0.0;
  for (const auto& model : catalog()) {
    if (model.warping.kind != WarpKind::identity) continue;
    const double oracle = truncated_oracle(model, a, b, lm, &rep, max_len);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t seed = 0; seed < runs; ++seed) {
      const double v = estimate_mc(model, a, b, lm, &rep, n, max_len, 5000 + seed).value;
      sum += v;
      sumsq += v * v;
    }
    const double r = static_cast<double>(runs);
    const double mean = sum / r;
    const double se = std::sqrt(std::max(0.0, (sumsq - r * mean * mean) / (r - 1)) / r);
    const double z = se > 0 ? std::abs(mean - oracle) / se : (mean == oracle ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    c.check(z <= 3.0, fmt("%s mean %.6g vs oracle %.6g (%.2f SE)", model.name.c_str(), mean, oracle, z));
  }
  c.note(fmt("worst deviation %.2f SE over 200 seeds", worst));
  return c;
}

Criterion anticipatory_invariance(const Testbed& tb) {
  Criterion c{"anticipatory measures ignore the target"};
  const Representer rep(*tb.embeddings, tb.model->alphabet());
  const auto refs = tb.stimuli();
  RandomStream rng(substream_seed(3, "pairs"));
  const std::size_t vocab = tb.model->alphabet().size();
  std::size_t compared = 0;
  for (const auto& model : catalog()) {
    if (!model.anticipatory) continue;
    for (int pair = 0; pair < 20; ++pair) {
      const auto& ctx = refs[rng.below(refs.size())].context;
      const auto i = static_cast<TokenString::value_type>(rng.below(vocab));
      const auto j = static_cast<TokenString::value_type>((i + 1 + rng.below(vocab - 1)) % vocab);
      const TokenString w{i}, w2{j};
      const double x = estimate_mc(model, w, ctx, *tb.model, &rep, 64, 5, 17, 9).value;
      const double y = estimate_mc(model, w2, ctx, *tb.model, &rep, 64, 5, 17, 9).value;
      c.check(x == y, fmt("%s pair %d: %.17g vs %.17g", model.name.c_str(), pair, x, y));
      if (supports_exact(model, *tb.model)) {
        const double ex = estimate_exact(model, w, ctx, *tb.model, &rep).value;
        const double ey = estimate_exact(model, w2, ctx, *tb.model, &rep).value;
        c.check(ex == ey, fmt("%s exact pair %d", model.name.c_str(), pair));
      }
      ++compared;
    }
  }
  c.note(fmt("%zu target pairs compared bit for bit", compared));
  return c;
}

// Character-level model of the testbed corpus, so words span several tokens.
Criterion closed_form_identities(const Testbed& tb) {
  Criterion c{"closed-form identities"};
  const auto surprisal = find_measure("surprisal");
  const auto probability = find_measure("probability");
  const auto refs = tb.stimuli();
  double worst = 0.0;
  for (const auto& ref : refs) {
    const double s = estimate_exact(surprisal, ref.target, ref.context, *tb.model).value;
    const double p = estimate_exact(probability, ref.target, ref.context, *tb.model).value;
    worst = std::max(worst, std::abs(std::exp(-s) - p));
  }
  c.check(refs.size() >= 500, fmt("%zu stimuli", refs.size()));
  c.check(worst <= 1e-12, fmt("max |exp(-s) - p| = %.3g", worst));

  auto spell = [](const std::string& word) {
    std::vector<std::string> out;
    for (char ch : word) out.emplace_back(1, ch);
    return out;
  };
  Corpus chars;
  for (const auto& sentence : tb.corpus) {
    std::vector<std::string> line;
    for (const auto& word : sentence) {
      if (!line.empty()) line.push_back("_");
      for (auto& ch : spell(word)) line.push_back(std::move(ch));
    }
    chars.push_back(std::move(line));
  }
  const auto char_lm = train_ngram(chars, 3, 0.1);
  const auto& alphabet = char_lm.alphabet();
  double worst_agg = 0.0;
  std::size_t multi = 0;
  for (const auto& item : tb.items) {
    std::vector<std::string> ctx;
    for (const auto& word : item.context) {
      for (auto& ch : spell(word)) ctx.push_back(std::move(ch));
      ctx.push_back("_");
    }
    const auto target_chars = spell(item.target);
    const auto w = alphabet.encode(target_chars);
    const auto cc = alphabet.encode(ctx);
    multi += w.size() > 1;
    const double sum = estimate_word_exact(surprisal, w, cc, char_lm).value;
    const double product = estimate_word_exact(probability, w, cc, char_lm).value;
    worst_agg = std::max(worst_agg, std::abs(sum + std::log(product)));
  }
  c.check(multi > 0, "multi-token words present");
  c.check(worst_agg <= 1e-9, fmt("max |sum of surprisals + log(product)| = %.3g", worst_agg));
  c.note(fmt("%zu stimuli; aggregation over %zu words, %zu multi-token; max errors %.2g and %.2g", refs.size(),
             tb.items.size(), multi, worst, worst_agg));
  return c;
}

Criterion variance_trends() {
  Criterion c{"variance trends on the n-gram testbed"};
  const auto start = Clock::now();
  TestbedOptions o;
  o.stimuli = 100;
  const auto tb = make_testbed(o);
  const Representer rep(*tb.embeddings, tb.model->alphabet());
  const auto refs = tb.stimuli();
  // The sampling-based measures of the variance study.
  std::vector<GSModel> measures;
  for (const char* name : {"information_value", "exp_next_info_value", "entropy", "exp_info_value"}) {
    measures.push_back(find_measure(name));
  }
  VarianceOptions options;
  options.resamples = 1000;
  options.seed = 1;
  const auto cells = variance_analysis(*tb.model, &rep, refs, measures, options);
  auto cell = [&](const std::string& m, std::size_t n) -> const VarianceCell& {
    for (const auto& x : cells) {
      if (x.measure == m && x.n == n) return x;
    }
    throw std::runtime_error("missing cell");
  };
  double cv_small = 0.0, cv_large = 0.0;
  for (const auto& m : measures) {
    cv_small += cell(m.name, 4).cv.mean / static_cast<double>(measures.size());
    cv_large += cell(m.name, 512).cv.mean / static_cast<double>(measures.size());
    const double r128 = cell(m.name, 128).correlation.summary.mean;
    const double r512 = cell(m.name, 512).correlation.summary.mean;
    c.note(fmt("%s: CV %.3f -> %.3f, corr(2^7) %.4f, corr(2^9) %.4f", m.name.c_str(), cell(m.name, 4).cv.mean,
               cell(m.name, 512).cv.mean, r128, r512));
    if (m.name == "entropy") {
      c.check(r512 >= 0.99, fmt("entropy corr(2^9) %.4f >= 0.99", r512));
    } else {
      c.check(r128 >= 0.99, fmt("%s corr(2^7) %.4f >= 0.99", m.name.c_str(), r128));
    }
  }
  c.check(cv_large < cv_small, fmt("mean CV(2^9) %.4f < mean CV(2^2) %.4f", cv_large, cv_small));
  const double elapsed = seconds_since(start);
  c.check(elapsed < 1800.0, fmt("runtime %.1f s", elapsed));
  c.note(fmt("100 stimuli, B = 1000, %.1f s", elapsed));
  return c;
}

Criterion exact_vs_mc(const Testbed& tb) {
  Criterion c{"exact vs MC correlation"};
  const auto refs = tb.stimuli();
  std::vector<double> es, ms, ep, mp;
  for (const auto& ref : refs) {
    const auto key = stable_hash(ref.id);
    es.push_back(estimate_exact(find_measure("surprisal"), ref.target, ref.context, *tb.model).value);
    ep.push_back(estimate_exact(find_measure("probability"), ref.target, ref.context, *tb.model).value);
    const auto batch = simulate_batch(*tb.model, ref.context, 512, 5, 1, key);
    const ScoreContext ctx{tb.model.get(), nullptr, ref.context};
    ms.push_back(estimate_from_batch(find_measure("surprisal"), ref.target, ctx, batch).value);
    mp.push_back(estimate_from_batch(find_measure("probability"), ref.target, ctx, batch).value);
  }
  const double rp = pearson(ep, mp).value_or(NAN);
  const double rs = pearson(es, ms).value_or(NAN);
  const double rank = spearman(es, ep).value_or(NAN);
  c.check(refs.size() >= 200, fmt("%zu stimuli", refs.size()));
  c.check(rp >= 0.95, fmt("probability r = %.4f >= 0.95", rp));
  c.check(rs >= 0.90, fmt("surprisal r = %.4f >= 0.90", rs));
  c.check(rank == -1.0, fmt("Spearman(surprisal, probability) = %.17g", rank));
  c.note(fmt("%zu stimuli at N = 2^9: probability r = %.4f, surprisal r = %.4f, Spearman = %.17g", refs.size(), rp,
             rs, rank));
  return c;
}

Criterion regression_calibration() {
  Criterion c{"regression harness calibration"};
  {
    const auto data = synthetic_regression(4000, 1.0, 101);
    auto spec = synthetic_spec({"m"}, 20);
    spec.permutation_resamples = 10000;
    const auto r = delta_r2_cv(spec, data.stimuli, data.estimates);
    const double truth = 1.0 / 3.0;
    c.check(std::abs(r.delta.mean - truth) <= 0.02, fmt("recovered %.4f vs %.4f", r.delta.mean, truth));
    c.note(fmt("partial R2 recovered %.4f (truth %.4f)", r.delta.mean, truth));

    auto redundant = spec;
    redundant.targets = {"x"};
    const auto rr = delta_r2_cv(redundant, data.stimuli, data.estimates);
    c.check(std::abs(rr.delta.mean) < 0.005, fmt("redundant |mean| %.3g", std::abs(rr.delta.mean)));
    c.note(fmt("redundant predictor mean %.3g", rr.delta.mean));
  }
  {
    const auto data = synthetic_regression(1000, 0.3, 202);
    auto spec = synthetic_spec({"m"}, 10);
    spec.permutation_resamples = 10000;
    const auto r = delta_r2_cv(spec, data.stimuli, data.estimates);
    c.check(r.p_value < 0.001, fmt("planted p = %.3g", r.p_value));
    c.note(fmt("planted effect 0.3: p = %.3g", r.p_value));
  }
  std::size_t calm = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    const auto data = synthetic_regression(300, 0.0, 10000 + run);
    auto spec = synthetic_spec({"m"}, 5);
    spec.permutation_resamples = 2000;
    spec.seed = run;
    calm += delta_r2_cv(spec, data.stimuli, data.estimates).p_value > 0.01;
  }
  c.check(calm >= 90, fmt("null runs with p > 0.01: %zu / 100", calm));
  c.note(fmt("null runs with p > 0.01: %zu / 100", calm));
  return c;
}

Criterion ols_correctness() {
  Criterion c{"OLS correctness"};
  std::mt19937_64 gen(8);
  std::normal_distribution<double> z;
  const int n = 200, k = 4;
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd beta(k), y_exact(n), y_noisy(n);
  beta << 1.5, -2.0, 0.25, 3.0;
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) x(i, j) = z(gen);
  }
  y_exact = x * beta;
  for (int i = 0; i < n; ++i) y_noisy(i) = y_exact(i) + z(gen);
  const auto fit = ols_fit(x, y_exact);
  const double coef_err = (fit.beta - beta).cwiseAbs().maxCoeff();
  c.check(coef_err <= 1e-9, fmt("coefficient error %.3g", coef_err));

  // Affine maps of the predictors and of the response leave R² unchanged.
  Eigen::MatrixXd x2 = x;
  for (int j = 1; j < k; ++j) x2.col(j) = (10.0 * j) * x.col(j).array() - 3.0 * j;
  const Eigen::VectorXd y2 = (-4.0 * y_noisy.array() + 100.0).matrix();
  const double r1 = r_squared(ols_fit(x, y_noisy).beta, x, y_noisy);
  const double r2 = r_squared(ols_fit(x2, y_noisy).beta, x2, y_noisy);
  const double r3 = r_squared(ols_fit(x2, y2).beta, x2, y2);
  c.check(std::abs(r1 - r2) <= 1e-9 && std::abs(r1 - r3) <= 1e-9,
          fmt("R2 %.15g / %.15g / %.15g", r1, r2, r3));
  c.note(fmt("coefficient error %.2g, R2 spread %.2g", coef_err, std::max(std::abs(r1 - r2), std::abs(r1 - r3))));
  return c;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  TestbedOptions small;
  small.stimuli = 200;
  const auto tb200 = make_testbed(small);
  small.stimuli = 500;
  const auto tb500 = make_testbed(small);

  const std::vector<std::function<Criterion()>> criteria = {
      oracle_equivalence,
      unbiasedness,
      [&] { return anticipatory_invariance(tb200); },
      [&] { return closed_form_identities(tb500); },
      variance_trends,
      [&] { return exact_vs_mc(tb200); },
      regression_calibration,
      ols_correctness,
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Criterion c;
    try {
      c = criteria[i]();
    } catch (const std::exception& e) {
      c.name = "criterion " + std::to_string(i + 1);
      c.ok = false;
      c.notes.push_back(std::string("exception: ") + e.what());
    }
    failed += !c.ok;
    std::printf("%s [%zu] %s (%.1f s)\n", c.ok ? "PASS" : "FAIL", i + 1, c.name.c_str(), seconds_since(start));
    for (const auto& note : c.notes) std::printf("       %s\n", note.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
