#include "gensurp/remote.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gensurp/error.hpp"

namespace gensurp {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing '/'
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("remote url '" + url + "' has no scheme");
  const auto slash = url.find('/', scheme + 3);
  ParsedUrl out;
  out.origin = url.substr(0, slash);
  if (slash != std::string::npos) out.prefix = url.substr(slash);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  if (out.origin.size() <= scheme + 3) throw ConfigError("remote url '" + url + "' has no host");
  return out;
}

}  // namespace

struct BridgeClient::Impl {
  ParsedUrl url;
  std::mutex mutex;
  std::condition_variable cv;
  std::size_t in_flight = 0;

  // Bounds concurrent requests.
  struct Slot {
    Impl& impl;
    explicit Slot(Impl& i, std::size_t limit) : impl(i) {
      std::unique_lock lock(impl.mutex);
      impl.cv.wait(lock, [&] { return impl.in_flight < limit; });
      ++impl.in_flight;
    }
    ~Slot() {
      {
        std::lock_guard lock(impl.mutex);
        --impl.in_flight;
      }
      impl.cv.notify_one();
    }
  };
};

BridgeClient::BridgeClient(RemoteOptions options) : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  if (options_.max_in_flight == 0) throw ConfigError("remote.max_in_flight must be positive");
  if (!(options_.timeout_s > 0.0)) throw ConfigError("remote.timeout_s must be positive");
  impl_->url = parse_url(options_.url);
}

BridgeClient::~BridgeClient() = default;

BridgeClient::Response BridgeClient::raw(const std::string& method, const std::string& path,
                                         const std::string& body) const {
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(options_.timeout_s));
  const std::string full_path = impl_->url.prefix + path;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    Impl::Slot slot(*impl_, options_.max_in_flight);
    httplib::Client cli(impl_->url.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    cli.set_keep_alive(false);
    auto result = method == "GET" ? cli.Get(full_path) : cli.Post(full_path, body, "application/json");
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status == 500 || (result->status >= 502 && result->status <= 504)) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    return {result->status, result->body};
  }
  throw TransportError(method + " " + options_.url + path + " failed after " +
                       std::to_string(options_.retries + 1) + " attempt(s): " + last_error);
}

std::string BridgeClient::call(const std::string& method, const std::string& path, const std::string& body) const {
  auto response = raw(method, path, body);
  if (response.status != 200) {
    std::string detail = response.body.substr(0, 200);
    if (response.status >= 500) {
      throw TransportError(method + " " + path + " failed with HTTP " + std::to_string(response.status));
    }
    throw ValidationError(method + " " + path + " was rejected with HTTP " + std::to_string(response.status) +
                          (detail.empty() ? "" : ": " + detail));
  }
  if (!nlohmann::json::accept(response.body)) {
    throw TransportError(method + " " + path + " returned a body that is not JSON");
  }
  return std::move(response.body);
}

protocol::Info BridgeClient::info() const {
  auto m = protocol::decode_info(call("GET", "/v1/info", ""));
  protocol::validate(m);
  return m;
}

protocol::LogprobsResponse BridgeClient::logprobs(const protocol::LogprobsRequest& request) const {
  return protocol::decode_logprobs_response(call("POST", "/v1/logprobs", protocol::encode(request)));
}

protocol::SampleResponse BridgeClient::sample(const protocol::SampleRequest& request) const {
  auto m = protocol::decode_sample_response(call("POST", "/v1/sample", protocol::encode(request)));
  protocol::validate(m, request);
  return m;
}

protocol::EmbedResponse BridgeClient::embed(const protocol::EmbedRequest& request) const {
  auto m = protocol::decode_embed_response(call("POST", "/v1/embed", protocol::encode(request)));
  protocol::validate(m, request.items.size());
  return m;
}

std::optional<protocol::TokenizeResponse> BridgeClient::tokenize(const protocol::TokenizeRequest& request) const {
  const auto response = raw("POST", "/v1/tokenize", protocol::encode(request));
  if (response.status == 404) return std::nullopt;
  if (response.status != 200) {
    throw ValidationError("POST /v1/tokenize was rejected with HTTP " + std::to_string(response.status));
  }
  if (!nlohmann::json::accept(response.body)) throw TransportError("POST /v1/tokenize returned a body that is not JSON");
  return protocol::decode_tokenize_response(response.body);
}

RemoteBackend::RemoteBackend(RemoteOptions options) : client_(std::move(options)) {
  info_ = client_.info();
  auto first = client_.logprobs({});
  protocol::validate(first);
  if (first.symbols.size() + 1 != info_.vocab_size) {
    throw ValidationError("vocab_size " + std::to_string(info_.vocab_size) + " does not match " +
                          std::to_string(first.symbols.size()) + " symbols plus EOS");
  }
  std::string eos = "</s>";
  for (int k = 0; std::find(first.symbols.begin(), first.symbols.end(), eos) != first.symbols.end(); ++k) {
    eos = "<eos:" + std::to_string(k) + ">";
  }
  try {
    alphabet_.emplace(first.symbols, eos);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("server vocabulary is not a valid alphabet: ") + e.what());
  }
}

std::string RemoteBackend::describe() const {
  return "remote:" + info_.model_name + "@" + client_.options().url;
}

std::vector<std::string> RemoteBackend::decode_tokens(TokenView tokens) const {
  return alphabet_->decode(tokens);
}

TokenString RemoteBackend::encode_tokens(const std::vector<std::string>& tokens) const {
  TokenString out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!alphabet_->contains(t)) throw ValidationError("server returned token '" + t + "' outside its vocabulary");
    out.push_back(alphabet_->id(t));
  }
  return out;
}

NextSymbolDistribution RemoteBackend::next_distribution(TokenView context) const {
  TokenString key(context.begin(), context.end());
  {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) {
      ++cache_hits_;
      return it->second;
    }
  }
  const auto response = client_.logprobs({decode_tokens(context)});
  protocol::validate(response, &alphabet_->symbols());
  // Accepted responses are within the wire tolerance; renormalize so the
  // distribution meets the tighter in-process invariant.
  std::vector<double> probs(response.logprobs.size());
  double mass = std::exp(response.eos_logprob);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(response.logprobs[i]);
    mass += probs[i];
  }
  for (auto& p : probs) p /= mass;
  NextSymbolDistribution dist(std::move(probs), std::exp(response.eos_logprob) / mass);
  std::lock_guard lock(cache_mutex_);
  if (cache_.size() >= client_.options().cache_capacity) cache_.clear();
  cache_.emplace(std::move(key), dist);
  return dist;
}

std::vector<Continuation> RemoteBackend::sample_batch(TokenView context, std::size_t n, std::size_t max_len,
                                                      RandomStream& rng) const {
  if (!client_.options().server_sampling) return LanguageModel::sample_batch(context, n, max_len, rng);
  protocol::SampleRequest request;
  request.context = decode_tokens(context);
  request.n = n;
  request.max_tokens = max_len;
  // 53 bits so the seed survives JSON stacks that store numbers as doubles.
  request.seed = rng.next_u64() >> 11;
  const auto response = client_.sample(request);
  std::vector<Continuation> out;
  out.reserve(n);
  for (const auto& tokens : response.continuations) {
    Continuation c;
    c.tokens = encode_tokens(tokens);
    c.complete = c.tokens.size() < max_len;
    out.push_back(std::move(c));
  }
  return out;
}

TokenString RemoteBackend::tokenize(std::string_view text, std::string_view preceding) const {
  if (!tokenize_unsupported_.load()) {
    const auto response = client_.tokenize({std::string(text), std::string(preceding)});
    if (response) return encode_tokens(response->tokens);
    if (!tokenize_unsupported_.exchange(true)) {
      spdlog::warn("{} has no /v1/tokenize; falling back to whitespace tokenization", describe());
    }
  }
  return LanguageModel::tokenize(text, preceding);
}

EmbeddingTable fetch_embeddings(const RemoteBackend& backend, std::size_t chunk) {
  const auto& symbols = backend.alphabet().symbols();
  std::vector<std::pair<std::string, Vector>> rows;
  rows.reserve(symbols.size());
  std::size_t dim = 0;
  for (std::size_t start = 0; start < symbols.size(); start += chunk) {
    protocol::EmbedRequest request;
    request.items.assign(symbols.begin() + static_cast<std::ptrdiff_t>(start),
                         symbols.begin() + static_cast<std::ptrdiff_t>(std::min(symbols.size(), start + chunk)));
    auto response = backend.client().embed(request);
    for (std::size_t i = 0; i < request.items.size(); ++i) {
      if (dim == 0) dim = response.vectors[i].size();
      if (response.vectors[i].size() != dim) throw ValidationError("embedding dimension changed between requests");
      rows.emplace_back(request.items[i], std::move(response.vectors[i]));
    }
  }
  try {
    return EmbeddingTable(dim, std::move(rows));
  } catch (const DataError& e) {
    throw ValidationError(std::string("server embeddings rejected: ") + e.what());
  }
}

}  // namespace gensurp
