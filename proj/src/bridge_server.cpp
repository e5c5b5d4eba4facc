#include "gensurp/bridge_server.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>

#include "gensurp/error.hpp"
#include "gensurp/protocol.hpp"
#include "gensurp/representation.hpp"

namespace gensurp {

struct BridgeServer::Impl {
  const LanguageModel& lm;
  const EmbeddingTable* embeddings;
  std::string model_name;
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;

  Impl(const LanguageModel& l, const EmbeddingTable* e, std::string name)
      : lm(l), embeddings(e), model_name(std::move(name)) {
    install();
  }

  static void reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  // Runs `fn`, mapping decode failures to 400 and unknown tokens to 422.
  template <typename Fn>
  static void guarded(httplib::Response& res, Fn fn) {
    try {
      reply(res, 200, fn());
    } catch (const ValidationError&) {
      reply(res, 400, R"({"error":"malformed request"})");
    } catch (const DataError&) {
      reply(res, 422, R"({"error":"unknown token"})");
    }
  }

  TokenString encode(const std::vector<std::string>& tokens) const {
    return lm.alphabet().encode(tokens);
  }

  void install() {
    server.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      protocol::Info info{model_name, lm.alphabet().size() + 1, static_cast<std::int64_t>(lm.alphabet().size())};
      reply(res, 200, protocol::encode(info));
    });
    server.Post("/v1/logprobs", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto request = protocol::decode_logprobs_request(req.body);
        const auto dist = lm.next_distribution(encode(request.context));
        protocol::LogprobsResponse out;
        out.symbols = lm.alphabet().symbols();
        for (double p : dist.symbol_probs()) out.logprobs.push_back(std::log(p));
        out.eos_logprob = std::log(dist.eos());
        return protocol::encode(out);
      });
    });
    server.Post("/v1/sample", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto request = protocol::decode_sample_request(req.body);
        const auto context = encode(request.context);
        RandomStream rng(request.seed);
        protocol::SampleResponse out;
        std::vector<std::vector<double>> logprobs;
        for (const auto& c : lm.sample_batch(context, request.n, request.max_tokens, rng)) {
          out.continuations.push_back(lm.alphabet().decode(c.tokens));
          std::vector<double> lp;
          TokenString prefix = context;
          for (Symbol s : c.tokens) {
            lp.push_back(std::log(lm.next_distribution(prefix).prob(s)));
            prefix.push_back(s);
          }
          logprobs.push_back(std::move(lp));
        }
        out.logprobs = std::move(logprobs);
        return protocol::encode(out);
      });
    });
    server.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      if (!embeddings) {
        reply(res, 501, "{\"error\":\"no embeddings\"}");
        return;
      }
      guarded(res, [&] {
        const auto request = protocol::decode_embed_request(req.body);
        protocol::EmbedResponse out;
        for (const auto& item : request.items) {
          if (!embeddings->contains(item)) throw DataError("unknown item");
          const auto v = embeddings->vector(item);
          out.vectors.emplace_back(v.begin(), v.end());
        }
        return protocol::encode(out);
      });
    });
    server.Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto request = protocol::decode_tokenize_request(req.body);
        protocol::TokenizeResponse out;
        out.tokens = lm.alphabet().decode(lm.tokenize(request.text, request.preceding));
        return protocol::encode(out);
      });
    });
  }
};

BridgeServer::BridgeServer(const LanguageModel& lm, const EmbeddingTable* embeddings, std::string model_name)
    : impl_(std::make_unique<Impl>(lm, embeddings, std::move(model_name))) {}

BridgeServer::~BridgeServer() { stop(); }

int BridgeServer::start(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port <= 0) throw BackendError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void BridgeServer::listen(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) throw BackendError("cannot listen on " + host + ":" + std::to_string(port));
}

void BridgeServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string BridgeServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace gensurp
