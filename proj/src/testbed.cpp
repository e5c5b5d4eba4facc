#include "gensurp/testbed.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <unordered_map>

#include "gensurp/cache.hpp"
#include "gensurp/error.hpp"
#include "gensurp/estimator.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

// Box-Muller on RandomStream::uniform(); std::normal_distribution is not
// specified bit-for-bit across standard libraries.
double gaussian(RandomStream& rng) {
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

std::vector<std::string> make_words(std::size_t count, RandomStream& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < count) {
    std::string w;
    const auto syllables = 1 + rng.below(3);
    for (std::uint64_t s = 0; s < syllables; ++s) {
      w += onsets[rng.below(std::size(onsets))];
      w += vowels[rng.below(std::size(vowels))];
    }
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

struct State {
  std::vector<std::size_t> successors;
  std::vector<double> cumulative;  // normalized cumulative weights
  double stop = 0.0;
};

struct Grammar {
  std::vector<std::string> words;
  std::vector<State> states;  // one per word, then the start state
  std::size_t start() const { return words.size(); }
};

Grammar make_grammar(const TestbedOptions& o) {
  RandomStream rng(substream_seed(o.seed, "grammar"));
  Grammar g;
  g.words = make_words(o.vocabulary, rng);
  const std::size_t v = o.vocabulary;
  const std::size_t clusters = std::max<std::size_t>(1, std::min(o.clusters, v));
  const std::size_t branching[] = {1, 1, 2, 2, 3, 5, 10, 20, v};
  g.states.resize(v + 1);
  for (std::size_t s = 0; s <= v; ++s) {
    auto& st = g.states[s];
    const std::size_t k = s == v ? v : std::min(v, branching[rng.below(std::size(branching))]);
    // Narrow states stay inside one semantic cluster (word i belongs to
    // cluster i mod clusters); broad ones range over the whole vocabulary.
    std::vector<std::size_t> pool;
    const std::size_t home = s == v ? rng.below(clusters) : s % clusters;
    for (std::size_t i = 0; i < v; ++i) {
      if (k > v / clusters || i % clusters == home) pool.push_back(i);
    }
    const std::size_t take = std::min(k, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      st.successors.push_back(pool[i]);
    }
    // Peakedness varies per state as well as branching.
    const double spread = 2.0 * o.weight_spread * rng.uniform();
    double total = 0.0;
    for (std::size_t i = 0; i < take; ++i) {
      total += std::exp(spread * gaussian(rng));
      st.cumulative.push_back(total);
    }
    for (double& c : st.cumulative) c /= total;
    // Bimodal stop probability: sentence-final states and chaining states.
    if (s != v) {
      st.stop = rng.uniform() < o.final_fraction ? o.final_stop * (0.5 + rng.uniform()) : 0.02 + 0.1 * rng.uniform();
    }
  }
  return g;
}

std::vector<std::string> generate_sentence(const Grammar& g, std::size_t max_len, RandomStream& rng) {
  std::vector<std::string> out;
  std::size_t state = g.start();
  while (out.size() < max_len) {
    const auto& st = g.states[state];
    const double u = rng.uniform();
    std::size_t i = 0;
    while (i + 1 < st.cumulative.size() && u >= st.cumulative[i]) ++i;
    state = st.successors[i];
    out.push_back(g.words[state]);
    if (rng.uniform() < g.states[state].stop) break;
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<StimulusRef> Testbed::stimuli() const {
  std::vector<StimulusRef> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    out.push_back({item.item_id, model->alphabet().encode(item.context),
                   model->alphabet().encode(std::span(&item.target, 1))});
  }
  return out;
}

Testbed make_testbed(const TestbedOptions& options) {
  if (options.vocabulary < 2 || options.sentences == 0 || options.max_sentence_length == 0) {
    throw ConfigError("testbed needs vocabulary >= 2, sentences > 0 and max_sentence_length > 0");
  }
  const auto grammar = make_grammar(options);
  Testbed tb;
  tb.options = options;

  RandomStream corpus_rng(substream_seed(options.seed, "corpus"));
  for (std::size_t i = 0; i < options.sentences; ++i) {
    tb.corpus.push_back(generate_sentence(grammar, options.max_sentence_length, corpus_rng));
  }
  // Every grammar word is in the alphabet even if the corpus never produced it.
  auto symbols = grammar.words;
  std::sort(symbols.begin(), symbols.end());
  tb.model = std::make_unique<NGramBackend>(
      train_ngram(tb.corpus, options.order, options.pseudocount, Alphabet(symbols)));

  // Cluster centroid plus isotropic noise.
  RandomStream emb_rng(substream_seed(options.seed, "embeddings"));
  const std::size_t clusters = std::max<std::size_t>(1, std::min(options.clusters, options.vocabulary));
  std::vector<Vector> centroids(clusters, Vector(options.embedding_dim));
  for (auto& c : centroids) {
    for (double& x : c) x = options.cluster_spread * gaussian(emb_rng);
  }
  std::vector<std::pair<std::string, Vector>> rows;
  for (std::size_t i = 0; i < grammar.words.size(); ++i) {
    Vector v(options.embedding_dim);
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = centroids[i % clusters][d] + gaussian(emb_rng);
    rows.emplace_back(grammar.words[i], std::move(v));
  }
  std::sort(rows.begin(), rows.end());
  tb.embeddings = std::make_unique<EmbeddingTable>(options.embedding_dim, std::move(rows));

  // Held-out sentences, every word after the first, as in word-by-word
  // reading data; spillover predictors need the preceding words.
  RandomStream item_rng(substream_seed(options.seed, "stimuli"));
  for (std::size_t s = 0; tb.items.size() < options.stimuli; ++s) {
    const auto sentence = generate_sentence(grammar, options.max_sentence_length, item_rng);
    for (std::size_t pos = 1; pos < sentence.size() && tb.items.size() < options.stimuli; ++pos) {
      TestbedItem item;
      item.sentence_id = "s" + std::to_string(s);
      item.word_index = static_cast<int>(pos);
      item.item_id = item.sentence_id + "w" + std::to_string(pos);
      item.context.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(pos));
      item.target = sentence[pos];
      tb.items.push_back(std::move(item));
    }
  }
  return tb;
}

void write_testbed(const Testbed& tb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "corpus.txt");
    for (const auto& s : tb.corpus) out << join(s) << '\n';
  }
  {
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& s : tb.corpus) {
      for (const auto& w : s) ++counts[w];
      total += s.size();
    }
    auto out = open_out(dir / "frequencies.tsv");
    out << "word\tper_million\n";
    for (const auto& w : tb.model->alphabet().symbols()) {
      const auto it = counts.find(w);
      if (it == counts.end()) continue;
      out << w << '\t' << format_value(1e6 * static_cast<double>(it->second) / static_cast<double>(total)) << '\n';
    }
  }
  {
    auto out = open_out(dir / "embeddings.tsv");
    out << "#dim " << tb.embeddings->dim() << '\n';
    for (const auto& w : tb.embeddings->tokens()) {
      out << w << '\t';
      const auto v = tb.embeddings->vector(w);
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_value(v[i]);
      out << '\n';
    }
  }
  {
    const auto surprisal = find_measure("surprisal");
    RandomStream rng(substream_seed(tb.options.seed, "responses"));
    auto out = open_out(dir / "dataset.tsv");
    out << "item_id\tsentence_id\tword_index\tcontext\ttarget\trt_synth\trating\n";
    const auto refs = tb.stimuli();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const double s = estimate_exact(surprisal, refs[i].target, refs[i].context, *tb.model).value;
      const double rt = 250.0 + 20.0 * s + 15.0 * gaussian(rng);
      const double rating = 5.0 - 0.5 * s + 0.5 * gaussian(rng);
      const auto& item = tb.items[i];
      out << item.item_id << '\t' << item.sentence_id << '\t' << item.word_index << '\t' << join(item.context)
          << '\t' << item.target << '\t' << format_value(std::round(rt * 100) / 100) << '\t'
          << format_value(std::round(rating * 1000) / 1000) << '\n';
    }
  }
}

}  // namespace gensurp
