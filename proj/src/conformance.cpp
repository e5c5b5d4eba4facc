#include "gensurp/conformance.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gensurp/error.hpp"
#include "gensurp/rng.hpp"

namespace gensurp {

namespace {

using nlohmann::json;

struct Skip {
  std::string reason;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Probe contexts drawn from the vocabulary, lengths 0..3, deterministic in seed.
std::vector<std::vector<std::string>> probe_contexts(const std::vector<std::string>& vocab, std::size_t count,
                                                     std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<std::vector<std::string>> out{{}};
  while (out.size() < count) {
    std::vector<std::string> c;
    const auto len = 1 + rng.below(3);
    for (std::size_t i = 0; i < len; ++i) c.push_back(vocab[rng.below(vocab.size())]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<ConformanceCheck> run_conformance(const ConformanceOptions& options) {
  std::vector<ConformanceCheck> checks;
  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    ConformanceCheck c;
    c.name = name;
    try {
      c.detail = body();
      c.passed = true;
    } catch (const Skip& s) {
      c.skipped = true;
      c.detail = s.reason;
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    checks.push_back(std::move(c));
  };

  std::optional<BridgeClient> client;
  try {
    client.emplace(options.remote);
  } catch (const std::exception& e) {
    checks.push_back({"client", false, false, e.what()});
    return checks;
  }

  protocol::Info info;
  std::vector<std::string> vocab;
  run("info", [&] {
    info = client->info();
    return info.model_name + ", vocab_size " + std::to_string(info.vocab_size);
  });
  run("vocabulary", [&] {
    auto r = client->logprobs({});
    protocol::validate(r);
    expect(r.symbols.size() + 1 == info.vocab_size, "symbols plus EOS do not match vocab_size");
    vocab = r.symbols;
    return std::to_string(vocab.size()) + " symbols";
  });
  if (vocab.empty()) return checks;

  run("logprobs normalization", [&] {
    double worst = 0.0;
    for (const auto& c : probe_contexts(vocab, options.contexts, options.seed)) {
      const auto r = client->logprobs({c});
      expect(r.symbols == vocab, "symbol list changes with the context");
      double mass = std::exp(r.eos_logprob);
      for (double lp : r.logprobs) {
        expect(std::isfinite(lp), "non-finite logprob");
        mass += std::exp(lp);
      }
      worst = std::max(worst, std::abs(mass - 1.0));
    }
    expect(worst <= options.tolerance, "normalization error " + std::to_string(worst));
    return "max |mass - 1| = " + std::to_string(worst);
  });

  protocol::SampleRequest sample_request;
  sample_request.context = probe_contexts(vocab, 2, options.seed)[1];
  sample_request.n = options.samples;
  sample_request.max_tokens = options.max_tokens;
  sample_request.seed = options.seed;
  std::optional<protocol::SampleResponse> sampled;

  run("sample shape", [&] {
    sampled = client->sample(sample_request);
    for (const auto& c : sampled->continuations) {
      for (const auto& t : c) expect(std::find(vocab.begin(), vocab.end(), t) != vocab.end(), "unknown token '" + t + "'");
    }
    return std::to_string(sampled->continuations.size()) + " continuations";
  });
  run("sample determinism", [&] {
    const auto a = client->call("POST", "/v1/sample", protocol::encode(sample_request));
    const auto b = client->call("POST", "/v1/sample", protocol::encode(sample_request));
    expect(protocol::canonical_json(a) == protocol::canonical_json(b), "same seed gave different continuations");
    return std::string("identical bodies");
  });
  run("sample logprob consistency", [&] {
    if (!sampled) throw Skip{"no sample response"};
    if (!sampled->logprobs) throw Skip{"server does not report sampling logprobs"};
    double worst = 0.0;
    std::size_t compared = 0;
    for (std::size_t i = 0; i < sampled->continuations.size(); ++i) {
      auto prefix = sample_request.context;
      for (std::size_t k = 0; k < sampled->continuations[i].size(); ++k) {
        const auto& token = sampled->continuations[i][k];
        const auto r = client->logprobs({prefix});
        const auto pos = std::find(r.symbols.begin(), r.symbols.end(), token) - r.symbols.begin();
        expect(static_cast<std::size_t>(pos) < r.symbols.size(), "sampled token missing from logprobs");
        worst = std::max(worst, std::abs(r.logprobs[static_cast<std::size_t>(pos)] - (*sampled->logprobs)[i][k]));
        ++compared;
        prefix.push_back(token);
      }
    }
    expect(worst <= options.tolerance, "logprob mismatch " + std::to_string(worst));
    return std::to_string(compared) + " tokens, max diff " + std::to_string(worst);
  });
  run("malformed body -> 400", [&] {
    const auto r = client->raw("POST", "/v1/logprobs", "{\"context\": [");
    expect(r.status == 400, "got HTTP " + std::to_string(r.status));
    return std::string("400");
  });
  run("unknown token -> 422", [&] {
    std::string bogus = "\x01unknown-token";
    while (std::find(vocab.begin(), vocab.end(), bogus) != vocab.end()) bogus += "_";
    const auto r = client->raw("POST", "/v1/logprobs", protocol::encode(protocol::LogprobsRequest{{bogus}}));
    expect(r.status == 422, "got HTTP " + std::to_string(r.status));
    return std::string("422");
  });
  run("embed", [&] {
    protocol::EmbedRequest request;
    for (std::size_t i = 0; i < std::min<std::size_t>(8, vocab.size()); ++i) request.items.push_back(vocab[i]);
    const auto r = client->raw("POST", "/v1/embed", protocol::encode(request));
    if (r.status == 501 || r.status == 404) throw Skip{"embeddings not provided (HTTP " + std::to_string(r.status) + ")"};
    expect(r.status == 200, "got HTTP " + std::to_string(r.status));
    const auto e = protocol::decode_embed_response(r.body);
    protocol::validate(e, request.items.size());
    return "dimension " + std::to_string(e.vectors.front().size());
  });
  run("tokenize", [&] {
    const auto r = client->tokenize({vocab.front(), ""});
    if (!r) throw Skip{"optional endpoint not implemented"};
    expect(!r->tokens.empty(), "no tokens for a vocabulary item");
    for (const auto& t : r->tokens) expect(std::find(vocab.begin(), vocab.end(), t) != vocab.end(), "unknown token");
    return std::to_string(r->tokens.size()) + " token(s)";
  });

  if (options.golden_dir) {
    run("golden replay", [&] {
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(*options.golden_dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      expect(!files.empty(), "no golden files in " + options.golden_dir->string());
      for (const auto& path : files) {
        const auto g = json::parse(read_file(path));
        const auto method = g.at("method").get<std::string>();
        const auto request = method == "GET" ? std::string() : g.at("request").dump();
        const auto body = client->call(method, g.at("path").get<std::string>(), request);
        expect(protocol::canonical_json(body) == g.at("response").dump(),
               path.filename().string() + ": response differs from the recording");
      }
      return std::to_string(files.size()) + " exchanges";
    });
  }
  return checks;
}

void record_golden(const ConformanceOptions& options, const std::filesystem::path& dir) {
  BridgeClient client(options.remote);
  std::filesystem::create_directories(dir);
  const auto vocab = protocol::decode_logprobs_response(client.call("POST", "/v1/logprobs", "{\"context\":[]}")).symbols;
  const auto contexts = probe_contexts(vocab, 3, options.seed);

  std::vector<std::tuple<std::string, std::string, std::string, std::string>> exchanges;
  exchanges.emplace_back("info", "GET", "/v1/info", "");
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    exchanges.emplace_back("logprobs_" + std::to_string(i), "POST", "/v1/logprobs",
                           protocol::encode(protocol::LogprobsRequest{contexts[i]}));
  }
  protocol::SampleRequest s;
  s.context = contexts.back();
  s.n = 4;
  s.max_tokens = options.max_tokens;
  s.seed = options.seed;
  exchanges.emplace_back("sample", "POST", "/v1/sample", protocol::encode(s));

  for (const auto& [name, method, path, request] : exchanges) {
    json g;
    g["method"] = method;
    g["path"] = path;
    g["request"] = request.empty() ? json(nullptr) : json::parse(request);
    g["response"] = json::parse(client.call(method, path, request));
    std::ofstream(dir / (name + ".json")) << g.dump(2) << "\n";
  }
}

}  // namespace gensurp
