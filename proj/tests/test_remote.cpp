#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "gensurp/bridge_server.hpp"
#include "gensurp/conformance.hpp"
#include "gensurp/error.hpp"
#include "gensurp/estimator.hpp"
#include "gensurp/protocol.hpp"
#include "gensurp/remote.hpp"

using namespace gensurp;
using namespace gensurp::testing;

namespace {

RemoteOptions fast(const std::string& url) {
  RemoteOptions o;
  o.url = url;
  o.timeout_s = 2.0;
  o.retries = 0;
  return o;
}

// A misbehaving bridge: each test installs its own handlers.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
  ~StubServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
};

}  // namespace

TEST_CASE("protocol codec") {
  using namespace protocol;
  const LogprobsResponse r{{"a", "b"}, {std::log(0.5), std::log(0.3)}, std::log(0.2)};
  const auto back = decode_logprobs_response(encode(r));
  CHECK(back.symbols == r.symbols);
  CHECK(back.logprobs == r.logprobs);
  CHECK(back.eos_logprob == r.eos_logprob);
  CHECK_NOTHROW(validate(back));

  SampleRequest s{{"a"}, 3, 5, 42, std::nullopt};
  CHECK(encode(s).find("temperature") == std::string::npos);
  s.temperature = 0.7;
  CHECK(*decode_sample_request(encode(s)).temperature == 0.7);

  CHECK_THROWS_WITH_AS(decode_info(R"({"model_name":"m","eos_id":1})"), doctest::Contains("vocab_size"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(decode_logprobs_response(R"({"symbols":["a"],"logprobs":["x"],"eos_logprob":0})"),
                       doctest::Contains("logprobs[0]"), ValidationError);
  CHECK_THROWS_AS(decode_embed_response("{not json"), ValidationError);

  const LogprobsResponse unnormalized{{"a", "b"}, {std::log(0.5), std::log(0.5)}, std::log(0.2)};
  CHECK_THROWS_WITH_AS(validate(unnormalized), doctest::Contains("normalized"), ValidationError);
  const LogprobsResponse within{{"a", "b"}, {std::log(0.5 + 5e-5), std::log(0.3)}, std::log(0.2)};
  CHECK_NOTHROW(validate(within));
  const std::vector<std::string> other{"b", "a"};
  CHECK_THROWS_AS(validate(r, &other), ValidationError);

  SampleResponse sr{{{"a", "b"}, {}}, std::nullopt};
  CHECK_NOTHROW(validate(sr, SampleRequest{{}, 2, 2, 0, std::nullopt}));
  CHECK_THROWS_AS(validate(sr, SampleRequest{{}, 2, 1, 0, std::nullopt}), ValidationError);
  CHECK_THROWS_AS(validate(EmbedResponse{{{1.0, 2.0}, {1.0}}}, 2), ValidationError);

  CHECK(canonical_json(R"({ "b": 1, "a": [1, 2] })") == R"({"a":[1,2],"b":1})");
}

TEST_CASE("remote backend against the reference server") {
  const auto lm = toy();
  const auto table = orthonormal_embeddings();
  BridgeServer server(lm, &table, "toy");
  server.start();
  RemoteBackend remote(fast(server.url()));

  CHECK(remote.alphabet().symbols() == lm.alphabet().symbols());
  CHECK(remote.info().vocab_size == 3);
  const auto d = remote.next_distribution(str(remote.alphabet(), "a b"));
  CHECK(std::abs(d.prob(0) - 0.5) < 1e-12);
  CHECK(std::abs(d.eos() - 0.2) < 1e-12);
  remote.next_distribution(str(remote.alphabet(), "a b"));
  CHECK(remote.requests_served_from_cache() >= 1);
  CHECK(std::abs(prefix_probability(remote, str(remote.alphabet(), "a b"), {}) - 0.15) < 1e-12);

  SUBCASE("server-side sampling is seeded") {
    RandomStream r1(9), r2(9);
    const auto a = remote.sample_batch({}, 32, 4, r1);
    const auto b = remote.sample_batch({}, 32, 4, r2);
    CHECK(a == b);
    REQUIRE(a.size() == 32);
    for (const auto& c : a) CHECK(c.complete == (c.tokens.size() < 4));
    const auto est = estimate_mc(find_measure("probability"), str(lm.alphabet(), "a"), {}, remote, nullptr, 4096, 3, 1);
    CHECK(std::abs(est.value - 0.5) < 0.03);
  }
  SUBCASE("client-side sampling") {
    auto o = fast(server.url());
    o.server_sampling = false;
    RemoteBackend local(o);
    RandomStream r1(5), r2(5);
    CHECK(local.sample_batch({}, 8, 3, r1) == lm.sample_batch({}, 8, 3, r2));
  }
  SUBCASE("tokenize and embeddings") {
    CHECK(remote.tokenize("b a", "") == TokenString{1, 0});
    const auto fetched = fetch_embeddings(remote, 1);
    CHECK(fetched.size() == 2);
    CHECK(fetched.vector("b")[1] == 1.0);
  }
  SUBCASE("concurrent queries agree") {
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 6; ++t) {
      threads.emplace_back([&, t] {
        TokenString c(static_cast<std::size_t>(t), 1);
        if (std::abs(remote.next_distribution(c).prob(1) - 0.3) > 1e-12) ++mismatches;
      });
    }
    for (auto& th : threads) th.join();
    CHECK(mismatches == 0);
  }
}

TEST_CASE("transport and validation errors are distinct") {
  SUBCASE("unreachable") {
    StubServer probe;
    probe.start();
    const auto url = probe.url();
    probe.server.stop();
    probe.thread.join();
    CHECK_THROWS_AS(RemoteBackend(fast(url)), TransportError);
  }
  SUBCASE("unnormalized payload") {
    StubServer stub;
    stub.server.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"model_name":"bad","vocab_size":3,"eos_id":2})", "application/json");
    });
    stub.server.Post("/v1/logprobs", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"symbols":["a","b"],"logprobs":[-0.1,-0.1],"eos_logprob":-1})", "application/json");
    });
    stub.start();
    try {
      RemoteBackend r(fast(stub.url()));
      FAIL("expected a ValidationError");
    } catch (const TransportError&) {
      FAIL("classified as a transport error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("normalized") != std::string::npos);
    }
  }
  SUBCASE("non-JSON body") {
    StubServer stub;
    stub.server.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>oops</html>", "text/html");
    });
    stub.start();
    CHECK_THROWS_AS(RemoteBackend(fast(stub.url())), TransportError);
  }
  SUBCASE("503 is retried") {
    StubServer stub;
    std::atomic<int> calls{0};
    stub.server.Get("/v1/info", [&](const httplib::Request&, httplib::Response& res) {
      if (calls++ == 0) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"model_name":"m","vocab_size":2,"eos_id":1})", "application/json");
    });
    stub.start();
    auto o = fast(stub.url());
    o.retries = 1;
    CHECK(BridgeClient(o).info().model_name == "m");
    CHECK(calls == 2);
  }
  SUBCASE("timeout") {
    StubServer stub;
    stub.server.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content(R"({"model_name":"m","vocab_size":2,"eos_id":1})", "application/json");
    });
    stub.start();
    auto o = fast(stub.url());
    o.timeout_s = 0.2;
    CHECK_THROWS_AS(BridgeClient(o).info(), TransportError);
  }
}

TEST_CASE("max_in_flight bounds concurrency") {
  StubServer stub;
  std::atomic<int> current{0}, peak{0};
  stub.server.new_task_queue = [] { return new httplib::ThreadPool(8); };
  stub.server.Get("/v1/info", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++current;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
    --current;
    res.set_content(R"({"model_name":"m","vocab_size":2,"eos_id":1})", "application/json");
  });
  stub.start();
  auto o = fast(stub.url());
  o.max_in_flight = 2;
  BridgeClient client(o);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.info(); });
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(peak.load() >= 1);
}

TEST_CASE("conformance suite") {
  const auto lm = toy();
  BridgeServer server(lm, nullptr, "toy-memoryless");
  server.start();
  ConformanceOptions o;
  o.remote = fast(server.url());
  o.golden_dir = std::filesystem::path(GENSURP_TEST_DIR) / "golden" / "toy";
  const auto checks = run_conformance(o);
  for (const auto& c : checks) {
    INFO(c.name << ": " << c.detail);
    CHECK((c.passed || (c.skipped && c.name == "embed")));
  }
  CHECK(std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.name == "golden replay" && c.passed; }));

  SUBCASE("detects a broken bridge") {
    StubServer stub;
    stub.server.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"model_name":"m","vocab_size":3,"eos_id":2})", "application/json");
    });
    stub.server.Post("/v1/logprobs", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"symbols":["a","b"],"logprobs":[-0.69314718,-1.2039728],"eos_logprob":-1.6094379})",
                      "application/json");
    });
    std::atomic<int> n{0};
    stub.server.Post("/v1/sample", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(++n % 2 ? R"({"continuations":[]})" : R"({"continuations":[["a"]]})", "application/json");
    });
    stub.start();
    ConformanceOptions bad;
    bad.remote = fast(stub.url());
    const auto r = run_conformance(bad);
    auto find = [&](const std::string& name) {
      return *std::find_if(r.begin(), r.end(), [&](const auto& c) { return c.name == name; });
    };
    CHECK(find("logprobs normalization").passed);
    CHECK_FALSE(find("sample shape").passed);
    CHECK_FALSE(find("sample determinism").passed);
    CHECK_FALSE(find("unknown token -> 422").passed);
  }
}
