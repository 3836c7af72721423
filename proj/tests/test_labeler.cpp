#include "tour/labeler.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

using namespace tour;

namespace {

struct CountingLabeler final : Labeler {
  std::size_t candidates_seen = 0;
  std::size_t requests = 0;
  std::vector<double> score(const QueryMeta&, std::span<const CorpusMeta> candidates) override {
    ++requests;
    candidates_seen += candidates.size();
    std::vector<double> out;
    for (const auto& c : candidates) out.push_back(static_cast<double>(c.id.size()));
    return out;
  }
};

struct BrokenLabeler final : Labeler {
  std::vector<double> score(const QueryMeta&, std::span<const CorpusMeta> candidates) override {
    return std::vector<double>(candidates.size(), std::numeric_limits<double>::quiet_NaN());
  }
};

// Stand-in for the scoring service: score = length of the candidate text.
class FakeService {
 public:
  FakeService() {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      if (fail_next_ > 0) {
        --fail_next_;
        res.status = fail_status_;
        return;
      }
      if (!reply_override_.empty()) {
        res.set_content(reply_override_, "application/json");
        return;
      }
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (...) {
        res.status = 400;
        return;
      }
      if (!body.contains("query") || !body["candidates"].is_array() || body["candidates"].empty()) {
        res.status = 400;
        res.set_content(R"({"error":"bad request"})", "application/json");
        return;
      }
      last_request_ = body;
      nlohmann::json scores = nlohmann::json::array();
      for (const auto& c : body["candidates"]) scores.push_back(static_cast<double>(c["text"].get<std::string>().size()));
      res.set_content(nlohmann::json{{"scores", scores}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_; }
  void fail_next(int n, int status = 503) {
    fail_status_ = status;
    fail_next_ = n;
  }
  void reply_with(std::string body) { reply_override_ = std::move(body); }
  const nlohmann::json& last_request() const { return last_request_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> hits_{0};
  std::atomic<int> fail_next_{0};
  std::atomic<int> fail_status_{503};
  std::string reply_override_;
  nlohmann::json last_request_;
};

const QueryMeta kQuery{"q1", "when was it founded", {"1983"}, std::nullopt};

}  // namespace

TEST_CASE("answer normalization") {
  CHECK(normalize_answer("The  Beatles!") == "beatles");
  CHECK(normalize_answer("A U.S. city, an example") == "us city example");
  CHECK(normalize_answer("Sound\tand\nfury") == "sound and fury");
  CHECK(contains_answer("\xE2\x80\xA6" "founded in 1983" "\xE2\x80\xA6", std::vector<std::string>{"1983"}));
  CHECK_FALSE(contains_answer("founded in 19834", std::vector<std::string>{"1983"}));
  CHECK_FALSE(contains_answer("anything", std::vector<std::string>{"the"}));
}

TEST_CASE("oracle scores") {
  SUBCASE("gold membership") {
    const QueryMeta q{"q", "", {}, std::vector<std::string>{"c7"}};
    CHECK(oracle_score(q, {"c7", "", "unrelated"}) == 1.0);
    CHECK(oracle_score(q, {"c8", "", "unrelated"}) == -1.0);
  }
  SUBCASE("answer containment") {
    CHECK(oracle_score(kQuery, {"c1", "", "The company was founded in 1983 by two engineers."}) == 1.0);
  }
  SUBCASE("missing answer") {
    const QueryMeta q{"q", "", {"Sound"}, std::nullopt};
    CHECK(oracle_score(q, {"c1", "", "a candidate about light and colour"}) == -1.0);
  }
  SUBCASE("nothing to judge with") {
    const QueryMeta q{"q", "", {}, std::vector<std::string>{}};
    CHECK_THROWS_AS(oracle_score(q, {"c1", "", "text"}), ConfigError);
  }
}

TEST_CASE("synthetic labeler is pure in (query, context)") {
  SyntheticLabeler a(42), b(42), other(43);
  const std::vector<CorpusMeta> cands{{"c1", "", ""}, {"c2", "", ""}, {"c3", "", ""}};
  const auto first = a.score(kQuery, cands);
  CHECK(first == a.score(kQuery, cands));
  CHECK(first == b.score(kQuery, cands));
  CHECK(first != other.score(kQuery, cands));
  for (double s : first) {
    CHECK(s >= -1.0);
    CHECK(s < 1.0);
  }
  // Order of candidates does not change a candidate's score.
  const std::vector<CorpusMeta> reversed{cands[2], cands[1], cands[0]};
  CHECK(a.score(kQuery, reversed)[0] == first[2]);
}

TEST_CASE("score_candidates validates") {
  OracleLabeler oracle;
  CHECK_THROWS_AS(score_candidates(oracle, kQuery, {}), ContractError);
  BrokenLabeler broken;
  const std::vector<CorpusMeta> one{{"c1", "", "x"}};
  CHECK_THROWS_AS(score_candidates(broken, kQuery, one), ValidationError);
  const auto scores = score_candidates(oracle, kQuery, one);
  REQUIRE(scores.size() == 1);
  CHECK(scores.query_id == "q1");
  CHECK(scores.scores[0].context_id == "c1");
}

TEST_CASE("caching labeler serves repeats from cache") {
  CountingLabeler backend;
  CachingLabeler cache(backend);
  const std::vector<CorpusMeta> round0{{"c1", "", ""}, {"c22", "", ""}};
  const std::vector<CorpusMeta> round2{{"c22", "", ""}, {"c333", "", ""}};

  const auto s0 = cache.score(kQuery, round0);
  const auto s2 = cache.score(kQuery, round2);
  CHECK(s0[1] == s2[0]);
  CHECK(backend.candidates_seen == 3);

  const LabelerStats stats = cache.stats_for("q1");
  CHECK(stats.backend_calls == 3);
  CHECK(stats.cache_hits == 1);
  CHECK(stats.requests() == 4);

  // Keys include the query id.
  const QueryMeta other{"q2", "", {"x"}, std::nullopt};
  cache.score(other, round0);
  CHECK(cache.stats_for("q2").backend_calls == 2);
  CHECK(cache.total().backend_calls == 5);

  SUBCASE("duplicates inside a request reach the backend once") {
    const QueryMeta q3{"q3", "", {"x"}, std::nullopt};
    const std::vector<CorpusMeta> dup{{"c1", "", ""}, {"c1", "", ""}};
    const auto s = cache.score(q3, dup);
    CHECK(s[0] == s[1]);
    CHECK(cache.stats_for("q3").backend_calls == 1);
    CHECK(cache.stats_for("q3").cache_hits == 1);
  }
}

TEST_CASE("caching labeler under concurrent queries") {
  SyntheticLabeler backend(9);
  CachingLabeler cache(backend);
  std::vector<CorpusMeta> cands;
  for (int i = 0; i < 20; ++i) cands.push_back({"c" + std::to_string(i), "", ""});

  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const QueryMeta q{"q" + std::to_string(t), "", {}, std::nullopt};
      for (int rep = 0; rep < 3; ++rep) cache.score(q, cands);
    });
  }
  for (auto& th : threads) th.join();
  for (int t = 0; t < 8; ++t) {
    const auto s = cache.stats_for("q" + std::to_string(t));
    CHECK(s.backend_calls == 20);
    CHECK(s.cache_hits == 40);
  }
}

TEST_CASE("remote labeler speaks the scoring protocol") {
  FakeService service;
  RemoteLabeler client({service.url(), std::chrono::milliseconds(2000), 2, 128});
  const std::vector<CorpusMeta> cands{{"c1", "Title", "abc"}, {"c2", "", "abcdef"}};

  const auto scores = client.score(kQuery, cands);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == doctest::Approx(9.0));  // "Title abc"
  CHECK(scores[1] == doctest::Approx(6.0));
  const auto& req = service.last_request();
  CHECK(req["query"] == kQuery.text);
  CHECK(req["candidates"][0]["id"] == "c1");
  CHECK(req["candidates"][0]["text"] == "Title abc");

  CHECK(client.score(kQuery, cands) == scores);

  SUBCASE("batches are split at max_batch") {
    RemoteLabeler small({service.url(), std::chrono::milliseconds(2000), 0, 1});
    const int before = service.hits();
    CHECK(small.score(kQuery, cands) == scores);
    CHECK(service.hits() - before == 2);
  }
  SUBCASE("5xx is retried") {
    service.fail_next(2);
    CHECK(client.score(kQuery, cands) == scores);
  }
  SUBCASE("retries run out") {
    service.fail_next(3);
    CHECK_THROWS_AS(client.score(kQuery, cands), TransportError);
  }
  SUBCASE("malformed response") {
    service.reply_with("not json");
    CHECK_THROWS_AS(client.score(kQuery, cands), ProtocolError);
  }
  SUBCASE("score count mismatch") {
    service.reply_with(R"({"scores":[1.0]})");
    CHECK_THROWS_AS(client.score(kQuery, cands), ProtocolError);
  }
  SUBCASE("missing scores field") {
    service.reply_with(R"({"result":[1.0, 2.0]})");
    CHECK_THROWS_AS(client.score(kQuery, cands), ProtocolError);
  }
  SUBCASE("4xx is a protocol error, not retried") {
    service.fail_next(1, 400);
    const int before = service.hits();
    CHECK_THROWS_AS(client.score(kQuery, cands), ProtocolError);
    CHECK(service.hits() - before == 1);
  }
}

TEST_CASE("remote labeler reports an unreachable endpoint") {
  // Grab a free port, then close it.
  int port = 0;
  {
    httplib::Server tmp;
    port = tmp.bind_to_any_port("127.0.0.1");
  }
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  RemoteLabeler client({url, std::chrono::milliseconds(300), 1, 16});
  const std::vector<CorpusMeta> cands{{"c1", "", "abc"}};
  try {
    score_candidates(client, kQuery, cands);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    const std::string what = e.what();
    CHECK(what.find(url) != std::string::npos);
    CHECK(what.find("q1") != std::string::npos);
  }
}

TEST_CASE("remote labeler config validation") {
  CHECK_THROWS_AS(RemoteLabeler({"", std::chrono::milliseconds(10), 0, 1}), ConfigError);
  CHECK_THROWS_AS(RemoteLabeler({"localhost:80", std::chrono::milliseconds(10), 0, 1}), ConfigError);
  CHECK_THROWS_AS(RemoteLabeler({"http://x", std::chrono::milliseconds(10), 0, 0}), ConfigError);
}
