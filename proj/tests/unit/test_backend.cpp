#include <doctest.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "figclass/backend.hpp"
#include "figclass/commands.hpp"
#include "figclass/error.hpp"
#include "figclass/http_backend.hpp"
#include "figclass/text.hpp"
#include "support/stub_server.hpp"
#include "support/synthetic.hpp"

using namespace figclass;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

// Reference SplitMix64 / FNV-1a written from the published constants.
std::uint64_t ref_fnv(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct RefSplitMix {
  std::uint64_t s;
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

std::vector<double> ref_hash_embedding(std::string_view text, std::uint64_t seed, std::size_t dim) {
  RefSplitMix g{seed ^ ref_fnv(text)};
  std::vector<double> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = 2.0 * (static_cast<double>(g.next() >> 11) / 9007199254740992.0) - 1.0;
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

BackendConfig fast_config(const std::string& url) {
  BackendConfig c;
  c.base_url = url;
  c.backoff_base = std::chrono::milliseconds(1);
  c.timeout = std::chrono::milliseconds(5000);
  return c;
}

}  // namespace

TEST_CASE("hash primitives match published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  SplitMix64 g(0);
  CHECK(g() == 0xe220a8397b1dcdafULL);
  CHECK(g() == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("model response wire form") {
  auto j = nlohmann::json::parse(R"({"text":"Yes","token_logprobs":[["Yes",-0.5],["!",-0.25]],"cumulative_logprob":-0.75})");
  const auto r = response_from_json(j);
  CHECK(r.text == "Yes");
  REQUIRE(r.token_logprobs.size() == 2);
  CHECK(*r.cumulative_logprob == doctest::Approx(-0.75));
  CHECK(response_from_json(to_json(r)).token_logprobs[1].token == "!");

  CHECK(kind_of([] { response_from_json(nlohmann::json::parse(R"({"token_logprobs":[]})")); }) ==
        ErrorKind::ProtocolError);
  CHECK(kind_of([] {
          response_from_json(nlohmann::json::parse(R"({"text":"a","token_logprobs":[["a",0.5]],"cumulative_logprob":0.5})"));
        }) == ErrorKind::ProtocolError);
  CHECK(kind_of([] {
          response_from_json(nlohmann::json::parse(R"({"text":"a","token_logprobs":[["a",-0.5]],"cumulative_logprob":-0.4})"));
        }) == ErrorKind::ProtocolError);
  const auto bare = response_from_json(nlohmann::json::parse(R"({"text":"a"})"));
  CHECK_FALSE(bare.has_logprobs());
}

TEST_CASE("backend config invariants") {
  BackendConfig c;
  c.max_in_flight = 0;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidConfig);
  c.max_in_flight = 1;
  c.max_retries = -1;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("backend url from the environment") {
  ::setenv(kBackendUrlEnv, "http://example.invalid:9", 1);
  CHECK(BackendConfig::from_env().base_url == "http://example.invalid:9");
  ::unsetenv(kBackendUrlEnv);
  CHECK(BackendConfig::from_env().base_url.empty());
}

TEST_CASE("scripted backend lookup order") {
  ScriptedBackend b([](const Figure*, std::string_view p) -> std::optional<ModelResponse> {
    if (p == "cb") return make_response("from callback");
    return std::nullopt;
  });
  b.add("q", make_response("any figure"));
  b.add("f1", "q", make_response("figure one"));
  Figure f1{"f1", {}, {}, {}}, f2{"f2", {}, {}, {}};
  CHECK(b.answer(&f1, "q").text == "figure one");
  CHECK(b.answer(&f2, "q").text == "any figure");
  CHECK(b.answer(nullptr, "cb").text == "from callback");
  CHECK(kind_of([&] { b.answer(&f1, "other"); }) == ErrorKind::ProtocolError);
  b.set_default(make_response("fallback"));
  CHECK(b.answer(&f1, "other").text == "fallback");
  CHECK(kind_of([&] { b.answer(&f1, "  "); }) == ErrorKind::InvalidRequest);
  CHECK(b.answer_calls() == 5);

  auto loaded = ScriptedBackend::from_json(nlohmann::json::parse(
      R"j({"default":{"text":"No"},"entries":[{"prompt":"p","figure_id":"f2","response":{"text":"(ii)"}}]})j"));
  CHECK(loaded->answer(&f2, "p").text == "(ii)");
  CHECK(loaded->answer(&f1, "p").text == "No");
}

TEST_CASE("hash embedding is a pure function reproduced independently") {
  HashEmbeddingBackend b(17);
  const auto v = b.embed({"a", "a", "chair"});
  CHECK(v[0] == v[1]);
  for (const std::string t : {"a", "chair", "office chair", ""}) {
    const auto mine = hash_embedding(t, 17);
    const auto ref = ref_hash_embedding(t, 17, 64);
    REQUIRE(mine.size() == 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(mine[i] == doctest::Approx(ref[i]).epsilon(1e-15));
  }
  CHECK(kind_of([&] { b.embed({}); }) == ErrorKind::InvalidRequest);
  CHECK(kind_of([&] { b.answer(nullptr, "q"); }) == ErrorKind::InvalidRequest);
  CHECK(b.id() == "hash-64-17");
}

TEST_CASE("oracle answers from ground truth") {
  const auto set = default_type_concepts();
  Figure f{"fig", {}, {{"type", "graph"}}, {}};
  const std::vector<Figure> figs{f};
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  const auto yes = oracle->answer(&f, render_binary(set.aspect(), *set.find("graph")).text);
  CHECK(yes.text == "Yes");
  CHECK(*yes.cumulative_logprob == 0.0);
  CHECK(oracle->answer(&f, render_binary(set.aspect(), *set.find("table")).text).text == "No");
  CHECK(oracle->answer(&f, render_open(set.aspect()).text).text == "graph");

  std::vector<Concept> opts{*set.find("table"), *set.find("drawing"), *set.find("graph")};
  CHECK(oracle->answer(&f, render_multiple_choice(set.aspect(), OptionList(opts)).text).text == "(iii)");

  auto inverted = make_oracle_backend(truth_from_figures(figs, set), 1.0, 1);
  for (const auto& c : set) {
    const auto r = inverted->answer(&f, render_binary(set.aspect(), c).text);
    CHECK(r.text == (c.id == "graph" ? "No" : "Yes"));
  }
  CHECK(inverted->answer(&f, render_multiple_choice(set.aspect(), OptionList(opts)).text).text != "(iii)");
  CHECK(kind_of([&] { make_oracle_backend({}, 1.5, 0); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("oracle flip rate at error_rate 0.2") {
  const auto set = testing::synthetic_concepts(50, "type");
  const auto figs = testing::synthetic_figures(set, 200);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.2, 42);
  int flips = 0, total = 0;
  for (const auto& f : figs) {
    for (const auto& c : set) {
      const bool truth = *f.truth_for("type") == c.id;
      const bool said_yes = oracle->answer(&f, render_binary(set.aspect(), c).text).text == "Yes";
      if (said_yes != truth) ++flips;
      ++total;
    }
  }
  REQUIRE(total == 10000);
  CHECK(std::abs(flips / double(total) - 0.2) <= 0.01);
}

TEST_CASE("oracle is reproducible and order independent") {
  const auto set = testing::synthetic_concepts(20, "type");
  const auto figs = testing::synthetic_figures(set, 30);
  auto a = make_oracle_backend(truth_from_figures(figs, set), 0.3, 9);
  auto b = make_oracle_backend(truth_from_figures(figs, set), 0.3, 9);
  std::vector<std::string> forward, backward(figs.size() * set.size());
  for (const auto& f : figs)
    for (const auto& c : set) forward.push_back(a->answer(&f, render_binary(set.aspect(), c).text).text);
  for (std::size_t i = figs.size(); i-- > 0;)
    for (std::size_t j = set.size(); j-- > 0;)
      backward[i * set.size() + j] = b->answer(&figs[i], render_binary(set.aspect(), set[j]).text).text;
  CHECK(forward == backward);
}

TEST_CASE("http: answer round trip with correlation id and image") {
  testing::StubServer server;
  std::string seen_image;
  server.answer = [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    seen_image = body.value("image_b64", "");
    res.set_content(R"j({"text":"(ii)","token_logprobs":[["(ii)",-0.1]],"cumulative_logprob":-0.1})j", "application/json");
  };
  const auto img = std::filesystem::temp_directory_path() / "figclass_test_image.bin";
  std::ofstream(img, std::ios::binary) << "PNGDATA";
  Figure f{"f", ImagePath{img}, {}, {}};
  HttpBackend b(fast_config(server.url()));
  const auto r = b.answer(&f, "Which?");
  CHECK(r.text == "(ii)");
  CHECK(*r.cumulative_logprob == doctest::Approx(-0.1));
  CHECK(seen_image == to_base64("PNGDATA"));
  CHECK(b.health().at("status") == "ok");
  const auto v = b.embed({"ab", "c"});
  CHECK(v.size() == 2);
}

TEST_CASE("http: 5xx retried then BackendUnavailable") {
  testing::StubServer server;
  server.answer = [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  };
  auto cfg = fast_config(server.url());
  cfg.max_retries = 2;
  HttpBackend b(cfg);
  CHECK(kind_of([&] { b.answer(nullptr, "q"); }) == ErrorKind::BackendUnavailable);
  CHECK(server.requests() == 3);
}

TEST_CASE("http: a transient 5xx recovers") {
  testing::StubServer server;
  std::atomic<int> n{0};
  server.answer = [&](const httplib::Request&, httplib::Response& res) {
    if (n++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"text":"No","token_logprobs":[],"cumulative_logprob":0})", "application/json");
  };
  HttpBackend b(fast_config(server.url()));
  CHECK(b.answer(nullptr, "q").text == "No");
  CHECK(server.requests() == 2);
}

TEST_CASE("http: 4xx is not retried and carries the server message") {
  testing::StubServer server;
  server.answer = [](const httplib::Request&, httplib::Response& res) {
    res.status = 422;
    res.set_content("prompt too long", "text/plain");
  };
  HttpBackend b(fast_config(server.url()));
  try {
    b.answer(nullptr, "q");
    FAIL("expected ProtocolError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ProtocolError);
    CHECK(std::string(e.what()).find("prompt too long") != std::string::npos);
  }
  CHECK(server.requests() == 1);
}

TEST_CASE("http: unreachable server is BackendUnavailable") {
  auto cfg = fast_config("http://127.0.0.1:1");
  cfg.max_retries = 1;
  HttpBackend b(cfg);
  CHECK(kind_of([&] { b.answer(nullptr, "q"); }) == ErrorKind::BackendUnavailable);
}

TEST_CASE("http: correlation mismatch is a ProtocolError") {
  testing::StubServer server;
  server.answer = [](const httplib::Request&, httplib::Response& res) {
    res.headers.erase("X-Correlation-Id");
    res.set_header("X-Correlation-Id", "someone-else");
    res.set_content(R"({"text":"Yes"})", "application/json");
  };
  HttpBackend b(fast_config(server.url()));
  CHECK(kind_of([&] { b.answer(nullptr, "q"); }) == ErrorKind::ProtocolError);
}

TEST_CASE("http: in-flight limit and no swapped answers under concurrency") {
  testing::StubServer server;
  server.set_delay(std::chrono::milliseconds(20));
  server.answer = [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"text", body["prompt"]}}.dump(), "application/json");
  };
  auto cfg = fast_config(server.url());
  cfg.max_in_flight = 3;
  HttpBackend b(cfg);
  std::vector<std::string> got(48);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 12; ++t) {
      threads.emplace_back([&, t] {
        for (int i = t; i < 48; i += 12) got[i] = b.answer(nullptr, "prompt " + std::to_string(i)).text;
      });
    }
  }
  for (int i = 0; i < 48; ++i) CHECK(got[i] == "prompt " + std::to_string(i));
  CHECK(server.peak_in_flight() <= 3);
  CHECK(server.peak_in_flight() >= 2);
}

TEST_CASE("conformance passes against a compliant stub") {
  testing::StubServer server;
  const auto checks = cmd_conformance(server.url());
  CHECK(checks.size() == 6);
  for (const auto& c : checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);
}

TEST_CASE("conformance names a missing cumulative_logprob") {
  testing::StubServer server;
  server.answer = [](const httplib::Request& req, httplib::Response& res) {
    if (nlohmann::json::parse(req.body, nullptr, false).is_discarded()) {
      res.status = 400;
      return;
    }
    res.set_content(R"({"text":"Yes","token_logprobs":[["Yes",-0.1]]})", "application/json");
  };
  const auto checks = cmd_conformance(server.url());
  CHECK_FALSE(all_passed(checks));
  bool named = false;
  for (const auto& c : checks) {
    if (!c.passed && c.detail.find("cumulative_logprob") != std::string::npos) named = true;
  }
  CHECK(named);
}
