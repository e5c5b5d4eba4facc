#include "gensurp/protocol.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "gensurp/error.hpp"

namespace gensurp::protocol {

namespace {

using nlohmann::json;

json parse(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON body: ") + e.what());
  }
}

const json& field(const json& j, const char* name) {
  if (!j.is_object()) throw ValidationError("body is not a JSON object");
  const auto it = j.find(name);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + name + "'");
  return *it;
}

std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ValidationError("'" + where + "' must be a string");
  return j.get<std::string>();
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError("'" + where + "' must be a number");
  return j.get<double>();
}

std::uint64_t as_unsigned(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ValidationError("'" + where + "' must be a non-negative integer");
}

std::vector<std::string> as_strings(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("'" + where + "' must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<double> as_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("'" + where + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

}  // namespace

std::string encode(const Info& m) {
  return dump({{"model_name", m.model_name}, {"vocab_size", m.vocab_size}, {"eos_id", m.eos_id}});
}
std::string encode(const LogprobsRequest& m) { return dump({{"context", m.context}}); }
std::string encode(const LogprobsResponse& m) {
  return dump({{"symbols", m.symbols}, {"logprobs", m.logprobs}, {"eos_logprob", m.eos_logprob}});
}
std::string encode(const SampleRequest& m) {
  json j{{"context", m.context}, {"n", m.n}, {"max_tokens", m.max_tokens}, {"seed", m.seed}};
  if (m.temperature) j["temperature"] = *m.temperature;
  return dump(j);
}
std::string encode(const SampleResponse& m) {
  json j{{"continuations", m.continuations}};
  if (m.logprobs) j["logprobs"] = *m.logprobs;
  return dump(j);
}
std::string encode(const EmbedRequest& m) { return dump({{"items", m.items}}); }
std::string encode(const EmbedResponse& m) { return dump({{"vectors", m.vectors}}); }
std::string encode(const TokenizeRequest& m) { return dump({{"text", m.text}, {"preceding", m.preceding}}); }
std::string encode(const TokenizeResponse& m) { return dump({{"tokens", m.tokens}}); }

Info decode_info(std::string_view body) {
  const auto j = parse(body);
  Info m;
  m.model_name = as_string(field(j, "model_name"), "model_name");
  m.vocab_size = as_unsigned(field(j, "vocab_size"), "vocab_size");
  const auto& eos = field(j, "eos_id");
  if (!eos.is_number_integer()) throw ValidationError("'eos_id' must be an integer");
  m.eos_id = eos.get<std::int64_t>();
  return m;
}

LogprobsRequest decode_logprobs_request(std::string_view body) {
  const auto j = parse(body);
  return {as_strings(field(j, "context"), "context")};
}

LogprobsResponse decode_logprobs_response(std::string_view body) {
  const auto j = parse(body);
  LogprobsResponse m;
  m.symbols = as_strings(field(j, "symbols"), "symbols");
  m.logprobs = as_numbers(field(j, "logprobs"), "logprobs");
  m.eos_logprob = as_number(field(j, "eos_logprob"), "eos_logprob");
  return m;
}

SampleRequest decode_sample_request(std::string_view body) {
  const auto j = parse(body);
  SampleRequest m;
  m.context = as_strings(field(j, "context"), "context");
  m.n = as_unsigned(field(j, "n"), "n");
  m.max_tokens = as_unsigned(field(j, "max_tokens"), "max_tokens");
  m.seed = as_unsigned(field(j, "seed"), "seed");
  if (const auto it = j.find("temperature"); it != j.end() && !it->is_null()) {
    m.temperature = as_number(*it, "temperature");
  }
  return m;
}

SampleResponse decode_sample_response(std::string_view body) {
  const auto j = parse(body);
  SampleResponse m;
  const auto& conts = field(j, "continuations");
  if (!conts.is_array()) throw ValidationError("'continuations' must be an array");
  for (std::size_t i = 0; i < conts.size(); ++i) {
    m.continuations.push_back(as_strings(conts[i], "continuations[" + std::to_string(i) + "]"));
  }
  if (const auto it = j.find("logprobs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("'logprobs' must be an array");
    std::vector<std::vector<double>> lp;
    for (std::size_t i = 0; i < it->size(); ++i) {
      lp.push_back(as_numbers((*it)[i], "logprobs[" + std::to_string(i) + "]"));
    }
    m.logprobs = std::move(lp);
  }
  return m;
}

EmbedRequest decode_embed_request(std::string_view body) {
  const auto j = parse(body);
  return {as_strings(field(j, "items"), "items")};
}

EmbedResponse decode_embed_response(std::string_view body) {
  const auto j = parse(body);
  EmbedResponse m;
  const auto& vectors = field(j, "vectors");
  if (!vectors.is_array()) throw ValidationError("'vectors' must be an array");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    m.vectors.push_back(as_numbers(vectors[i], "vectors[" + std::to_string(i) + "]"));
  }
  return m;
}

TokenizeRequest decode_tokenize_request(std::string_view body) {
  const auto j = parse(body);
  TokenizeRequest m;
  m.text = as_string(field(j, "text"), "text");
  if (const auto it = j.find("preceding"); it != j.end()) m.preceding = as_string(*it, "preceding");
  return m;
}

TokenizeResponse decode_tokenize_response(std::string_view body) {
  const auto j = parse(body);
  return {as_strings(field(j, "tokens"), "tokens")};
}

void validate(const Info& info) {
  if (info.vocab_size < 2) throw ValidationError("vocab_size must count at least one symbol plus EOS");
  if (info.model_name.empty()) throw ValidationError("model_name is empty");
}

void validate(const LogprobsResponse& r, const std::vector<std::string>* expected_symbols) {
  if (r.symbols.empty()) throw ValidationError("logprobs response has no symbols");
  if (r.symbols.size() != r.logprobs.size()) {
    throw ValidationError("logprobs response has " + std::to_string(r.symbols.size()) + " symbols but " +
                          std::to_string(r.logprobs.size()) + " logprobs");
  }
  if (expected_symbols && *expected_symbols != r.symbols) {
    throw ValidationError("logprobs response symbol list differs from the model vocabulary");
  }
  if (!std::isfinite(r.eos_logprob) || r.eos_logprob > 0.0) throw ValidationError("eos_logprob must be finite and <= 0");
  double mass = std::exp(r.eos_logprob);
  for (std::size_t i = 0; i < r.logprobs.size(); ++i) {
    if (!std::isfinite(r.logprobs[i]) || r.logprobs[i] > 0.0) {
      throw ValidationError("logprob for symbol '" + r.symbols[i] + "' must be finite and <= 0");
    }
    mass += std::exp(r.logprobs[i]);
  }
  if (std::abs(mass - 1.0) > kNormalizationTolerance) {
    throw ValidationError("logprobs are not normalized: total probability " + std::to_string(mass));
  }
}

void validate(const SampleResponse& r, const SampleRequest& request) {
  if (r.continuations.size() != request.n) {
    throw ValidationError("sample response has " + std::to_string(r.continuations.size()) +
                          " continuations, expected " + std::to_string(request.n));
  }
  for (std::size_t i = 0; i < r.continuations.size(); ++i) {
    if (r.continuations[i].size() > request.max_tokens) {
      throw ValidationError("continuation " + std::to_string(i) + " exceeds max_tokens");
    }
  }
  if (r.logprobs) {
    if (r.logprobs->size() != r.continuations.size()) throw ValidationError("sample logprobs count mismatch");
    for (std::size_t i = 0; i < r.continuations.size(); ++i) {
      if ((*r.logprobs)[i].size() != r.continuations[i].size()) {
        throw ValidationError("sample logprobs length mismatch for continuation " + std::to_string(i));
      }
      for (double lp : (*r.logprobs)[i]) {
        if (!std::isfinite(lp) || lp > 0.0) throw ValidationError("sample logprobs must be finite and <= 0");
      }
    }
  }
}

void validate(const EmbedResponse& r, std::size_t expected_items) {
  if (r.vectors.size() != expected_items) {
    throw ValidationError("embed response has " + std::to_string(r.vectors.size()) + " vectors, expected " +
                          std::to_string(expected_items));
  }
  if (r.vectors.empty()) return;
  const auto dim = r.vectors.front().size();
  if (dim == 0) throw ValidationError("embedding vectors are empty");
  for (std::size_t i = 0; i < r.vectors.size(); ++i) {
    if (r.vectors[i].size() != dim) throw ValidationError("embedding " + std::to_string(i) + " has a different length");
    for (double x : r.vectors[i]) {
      if (!std::isfinite(x)) throw ValidationError("embedding " + std::to_string(i) + " has a non-finite entry");
    }
  }
}

std::string canonical_json(std::string_view body) {
  // nlohmann::json objects are key-sorted std::maps, so dump() is canonical.
  return parse(body).dump();
}

}  // namespace gensurp::protocol
