#pragma once

#include <memory>
#include <string>

#include "gensurp/language_model.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

// Serves any in-process LanguageModel over the bridge protocol. Used as the
// reference implementation for conformance tests and to put a native model
// behind the remote code path. 400 on malformed bodies, 422 on unknown tokens.
class BridgeServer {
 public:
  // `embeddings` may be null; /v1/embed then answers 501.
  BridgeServer(const LanguageModel& lm, const EmbeddingTable* embeddings, std::string model_name);
  ~BridgeServer();
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);
  void stop();
  std::string url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gensurp
