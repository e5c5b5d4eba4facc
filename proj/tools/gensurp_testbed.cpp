// Writes the synthetic Markov-grammar testbed (corpus, dataset, frequencies,
// embeddings) plus a ready-to-run config.yaml.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gensurp/error.hpp"
#include "gensurp/testbed.hpp"

using namespace gensurp;

int main(int argc, char** argv) {
  CLI::App app{"gensurp-testbed: generate the synthetic testbed"};
  std::string out;
  TestbedOptions o;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", o.seed)->capture_default_str();
  app.add_option("--stimuli", o.stimuli)->capture_default_str();
  app.add_option("--sentences", o.sentences)->capture_default_str();
  app.add_option("--vocabulary", o.vocabulary)->capture_default_str();
  app.add_option("--order", o.order)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto tb = make_testbed(o);
    write_testbed(tb, out);
    std::ofstream config(std::filesystem::path(out) / "config.yaml");
    config << "# Synthetic testbed run. Paths are relative to this file.\n"
           << "backend:\n  kind: native\n  corpus: corpus.txt\n  order: " << o.order
           << "\n  pseudocount: " << o.pseudocount << "\n"
           << "dataset: dataset.tsv\nfrequencies: frequencies.tsv\nembeddings: embeddings.tsv\n"
           << "output: out\nseed: " << o.seed << "\njobs: 1\n"
           << "evaluate:\n  seeds: 20\n  permutation_resamples: 2000\n";
    std::cout << "wrote " << tb.corpus.size() << " sentences and " << tb.items.size() << " stimuli to " << out
              << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
}
