// Reference bridge server over a native model, plus the protocol conformance
// runner that works against any bridge implementation.
#include <csignal>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gensurp/bridge_server.hpp"
#include "gensurp/conformance.hpp"
#include "gensurp/error.hpp"
#include "gensurp/ngram.hpp"
#include "gensurp/representation.hpp"

using namespace gensurp;

namespace {

BridgeServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gensurp-bridge: serve a native model over the bridge protocol, or check a bridge"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "serve the fixture model or an n-gram model");
  bool toy = false;
  std::string corpus, embeddings, host = "127.0.0.1";
  int order = 3, port = 8765;
  double pseudocount = 0.1;
  serve->add_flag("--toy", toy, "memoryless fixture: a 0.5, b 0.3, EOS 0.2");
  serve->add_option("--corpus", corpus, "train an n-gram model on this corpus");
  serve->add_option("--order", order)->capture_default_str();
  serve->add_option("--pseudocount", pseudocount)->capture_default_str();
  serve->add_option("--embeddings", embeddings, "embedding TSV served on /v1/embed");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  auto* check = app.add_subcommand("conformance", "run the protocol conformance suite");
  ConformanceOptions options;
  std::string golden;
  check->add_option("--url", options.remote.url, "bridge base URL")->required();
  check->add_option("--golden", golden, "directory of recorded exchanges to replay");
  check->add_option("--tolerance", options.tolerance)->capture_default_str();
  check->add_option("--timeout", options.remote.timeout_s)->capture_default_str();

  auto* record = app.add_subcommand("record", "record golden exchanges from a bridge");
  std::string out_dir;
  record->add_option("--url", options.remote.url)->required();
  record->add_option("--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      std::unique_ptr<LanguageModel> lm;
      std::string name;
      if (toy == !corpus.empty()) throw ConfigError("give exactly one of --toy or --corpus");
      if (toy) {
        lm = std::make_unique<MemorylessBackend>(Alphabet({"a", "b"}), std::vector<double>{0.5, 0.3}, 0.2);
        name = "toy-memoryless";
      } else {
        lm = std::make_unique<NGramBackend>(train_ngram(read_corpus(corpus), order, pseudocount));
        name = lm->describe();
      }
      std::optional<EmbeddingTable> table;
      if (!embeddings.empty()) table = load_embeddings(embeddings);
      BridgeServer server(*lm, table ? &*table : nullptr, name);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("serving {} on http://{}:{}", name, host, port);
      server.listen(host, port);
      return 0;
    }
    if (*check) {
      if (!golden.empty()) options.golden_dir = golden;
      const auto checks = run_conformance(options);
      bool ok = true;
      for (const auto& c : checks) {
        const char* status = c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL");
        std::cout << status << "  " << c.name << "  " << c.detail << "\n";
        ok = ok && (c.passed || c.skipped);
      }
      return ok ? 0 : 1;
    }
    record_golden(options, out_dir);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 4;
  }
}
