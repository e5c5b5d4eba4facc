#pragma once

// Bridge wire protocol: JSON bodies over HTTP.
//   GET  /v1/info      -> {model_name, vocab_size, eos_id}
//   POST /v1/logprobs  {context}                      -> {symbols, logprobs, eos_logprob}
//   POST /v1/sample    {context, n, max_tokens, seed} -> {continuations[, logprobs]}
//   POST /v1/embed     {items}                        -> {vectors}
//   POST /v1/tokenize  {text, preceding}              -> {tokens}      (optional)
// Tokens travel as strings. Log probabilities are natural logs. EOS is not
// one of `symbols`; vocab_size counts the symbols plus EOS.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gensurp::protocol {

// Tolerance on |Σ exp(logprobs) + exp(eos_logprob) − 1| for a response to be accepted.
inline constexpr double kNormalizationTolerance = 1e-4;

struct Info {
  std::string model_name;
  std::size_t vocab_size = 0;
  std::int64_t eos_id = 0;
};

struct LogprobsRequest {
  std::vector<std::string> context;
};

struct LogprobsResponse {
  std::vector<std::string> symbols;
  std::vector<double> logprobs;
  double eos_logprob = 0.0;
};

struct SampleRequest {
  std::vector<std::string> context;
  std::size_t n = 0;
  std::size_t max_tokens = 0;
  std::uint64_t seed = 0;
  // Omitted from the body unless set; servers default to 1.
  std::optional<double> temperature;
};

struct SampleResponse {
  std::vector<std::vector<std::string>> continuations;
  // Per-token log probabilities reported at sampling time, when the server provides them.
  std::optional<std::vector<std::vector<double>>> logprobs;
};

struct EmbedRequest {
  std::vector<std::string> items;
};

struct EmbedResponse {
  std::vector<std::vector<double>> vectors;
};

struct TokenizeRequest {
  std::string text;
  std::string preceding;
};

struct TokenizeResponse {
  std::vector<std::string> tokens;
};

std::string encode(const Info& m);
std::string encode(const LogprobsRequest& m);
std::string encode(const LogprobsResponse& m);
std::string encode(const SampleRequest& m);
std::string encode(const SampleResponse& m);
std::string encode(const EmbedRequest& m);
std::string encode(const EmbedResponse& m);
std::string encode(const TokenizeRequest& m);
std::string encode(const TokenizeResponse& m);

// Decoders check JSON shape and field types and throw ValidationError naming
// the offending field. Unknown fields are ignored.
Info decode_info(std::string_view body);
LogprobsRequest decode_logprobs_request(std::string_view body);
LogprobsResponse decode_logprobs_response(std::string_view body);
SampleRequest decode_sample_request(std::string_view body);
SampleResponse decode_sample_response(std::string_view body);
EmbedRequest decode_embed_request(std::string_view body);
EmbedResponse decode_embed_response(std::string_view body);
TokenizeRequest decode_tokenize_request(std::string_view body);
TokenizeResponse decode_tokenize_response(std::string_view body);

// Semantic checks beyond shape. All throw ValidationError.
void validate(const Info& info);
// Finite log probabilities, matching lengths, normalization within tolerance
// and, when `expected_symbols` is given, the same symbol list in the same order.
void validate(const LogprobsResponse& response,
              const std::vector<std::string>* expected_symbols = nullptr);
void validate(const SampleResponse& response, const SampleRequest& request);
// Equal count to the request, uniform non-zero dimension, finite entries.
void validate(const EmbedResponse& response, std::size_t expected_items);

// Key-sorted, whitespace-free serialization used to compare bodies.
std::string canonical_json(std::string_view body);

}  // namespace gensurp::protocol
