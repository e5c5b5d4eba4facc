#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gensurp/analysis.hpp"
#include "gensurp/ngram.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

// Synthetic corpus from a first-order Markov grammar whose states differ
// sharply in branching factor and stop probability, so stimuli span nearly
// deterministic and nearly uniform continuations. Everything is a pure
// function of the options.
struct TestbedOptions {
  std::size_t vocabulary = 40;
  std::size_t sentences = 4000;
  std::size_t stimuli = 200;
  std::size_t max_sentence_length = 12;
  int order = 2;
  double pseudocount = 0.1;
  std::size_t embedding_dim = 8;
  // Words fall into semantic clusters; embeddings are centroid + N(0, I) with
  // centroids drawn from N(0, cluster_spread² I).
  std::size_t clusters = 8;
  double cluster_spread = 2.0;
  // Successor weights are exp(weight_spread · N(0, 1)), normalized.
  double weight_spread = 1.5;
  // A final_fraction of states end the sentence with probability around
  // final_stop (uniform on [0.5, 1.5] · final_stop); the rest rarely do.
  double final_fraction = 0.3;
  double final_stop = 0.6;
  std::uint64_t seed = 1;
};

struct TestbedItem {
  std::string item_id;
  std::string sentence_id;
  int word_index = 0;
  std::vector<std::string> context;
  std::string target;
};

struct Testbed {
  TestbedOptions options;
  Corpus corpus;
  std::unique_ptr<NGramBackend> model;  // trained on corpus
  std::unique_ptr<EmbeddingTable> embeddings;
  // Every word after the first of held-out sentences from the same grammar.
  std::vector<TestbedItem> items;

  std::vector<StimulusRef> stimuli() const;
};

Testbed make_testbed(const TestbedOptions& options = {});

// Writes corpus.txt, dataset.tsv, frequencies.tsv and embeddings.tsv. The
// dataset carries two synthetic responses driven by exact surprisal:
//   rt_synth = 250 + 20 · surprisal + N(0, 15²)
//   rating   = 5 − 0.5 · surprisal + N(0, 0.5²)
void write_testbed(const Testbed& testbed, const std::filesystem::path& dir);

}  // namespace gensurp
