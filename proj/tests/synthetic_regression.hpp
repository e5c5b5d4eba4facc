#pragma once

#include <random>
#include <string>
#include <vector>

#include "gensurp/eval.hpp"

namespace gensurp::testing {

// Rows with one baseline predictor x ~ N(0,1) (stored as measurement "x"),
// a target measure m ~ N(0,1) (in the predictor table), and
//   y = x + effect · m + N(0,1).
// The analytic gain in R² from adding m is effect² / (1 + effect² + 1).
struct SyntheticRegression {
  std::vector<Stimulus> stimuli;
  PredictorTable estimates;
};

inline SyntheticRegression synthetic_regression(std::size_t n, double effect, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  SyntheticRegression out;
  auto& m_col = out.estimates["m"];
  for (std::size_t i = 0; i < n; ++i) {
    Stimulus s;
    s.item_id = "i" + std::to_string(i);
    s.sentence_id = "s" + std::to_string(i / 8);
    s.word_index = static_cast<int>(i % 8);
    s.target = "w";
    const double x = z(gen), m = z(gen), e = z(gen);
    s.measurements["x"] = x;
    s.measurements["y"] = x + effect * m + e;
    m_col[s.item_id] = m;
    out.stimuli.push_back(std::move(s));
  }
  return out;
}

inline RegressionSpec synthetic_spec(std::vector<std::string> targets, std::size_t seeds = 100) {
  RegressionSpec spec;
  spec.response = "y";
  spec.baseline = {"x"};
  spec.targets = std::move(targets);
  spec.seeds = seeds;
  return spec;
}

}  // namespace gensurp::testing
