#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gensurp/language_model.hpp"
#include "gensurp/protocol.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

struct RemoteOptions {
  std::string url = "http://127.0.0.1:8765";
  double timeout_s = 30.0;
  std::size_t max_in_flight = 8;
  // Extra attempts after a transport failure. Every endpoint is idempotent.
  int retries = 2;
  std::size_t cache_capacity = 1 << 16;
  // Use /v1/sample for batches instead of symbol-by-symbol /v1/logprobs calls.
  bool server_sampling = true;
};

// Raw HTTP access to a bridge. Thread safe; at most max_in_flight requests
// are outstanding at once. Connection failures, timeouts, 5xx answers and
// unparseable bodies raise TransportError; 4xx answers raise ValidationError.
// Connection failures and 500/502/503/504 are retried.
class BridgeClient {
 public:
  explicit BridgeClient(RemoteOptions options);
  ~BridgeClient();

  struct Response {
    int status = 0;
    std::string body;
  };
  // Returns whatever the server answered, retrying only on transport failures.
  Response raw(const std::string& method, const std::string& path, const std::string& body) const;
  // raw() plus status mapping; returns the body of a 200 answer.
  std::string call(const std::string& method, const std::string& path, const std::string& body) const;

  protocol::Info info() const;
  protocol::LogprobsResponse logprobs(const protocol::LogprobsRequest& request) const;
  protocol::SampleResponse sample(const protocol::SampleRequest& request) const;
  protocol::EmbedResponse embed(const protocol::EmbedRequest& request) const;
  // Empty when the server does not implement /v1/tokenize.
  std::optional<protocol::TokenizeResponse> tokenize(const protocol::TokenizeRequest& request) const;

  const RemoteOptions& options() const { return options_; }

 private:
  struct Impl;
  RemoteOptions options_;
  std::unique_ptr<Impl> impl_;
};

// LanguageModel over the bridge protocol. The alphabet is the symbol list the
// server reports for the empty context; every later response must repeat it.
class RemoteBackend final : public LanguageModel {
 public:
  explicit RemoteBackend(RemoteOptions options);

  const Alphabet& alphabet() const override { return *alphabet_; }
  NextSymbolDistribution next_distribution(TokenView context) const override;
  std::string describe() const override;
  std::vector<Continuation> sample_batch(TokenView context, std::size_t n, std::size_t max_len,
                                         RandomStream& rng) const override;
  TokenString tokenize(std::string_view text, std::string_view preceding) const override;

  const protocol::Info& info() const { return info_; }
  const BridgeClient& client() const { return client_; }
  std::size_t requests_served_from_cache() const { return cache_hits_.load(); }

 private:
  std::vector<std::string> decode_tokens(TokenView tokens) const;
  TokenString encode_tokens(const std::vector<std::string>& tokens) const;

  BridgeClient client_;
  protocol::Info info_;
  std::optional<Alphabet> alphabet_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<TokenString, NextSymbolDistribution, TokenStringHash> cache_;
  mutable std::atomic<std::size_t> cache_hits_{0};
  mutable std::atomic<bool> tokenize_unsupported_{false};
};

// Embeddings for every alphabet symbol via /v1/embed, in chunks.
EmbeddingTable fetch_embeddings(const RemoteBackend& backend, std::size_t chunk = 1024);

}  // namespace gensurp
