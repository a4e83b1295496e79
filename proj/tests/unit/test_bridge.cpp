#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aequiv/bridge_client.hpp"
#include "aequiv/error.hpp"
#include "aequiv/scoring.hpp"

namespace {

namespace br = aequiv::bridge;
using namespace std::chrono_literals;

const std::string kGoldenDir = std::string(AEQUIV_TEST_DATA_DIR) + "/bridge_golden";
const std::string kRequests = kGoldenDir + "/requests.jsonl";
const std::string kResponses = kGoldenDir + "/responses.jsonl";

std::vector<std::vector<std::string>> golden_batches(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::vector<std::string>> out(1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!out.back().empty()) out.emplace_back();
    } else {
      out.back().push_back(line);
    }
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

std::vector<br::ScoreRequest> golden_requests() {
  std::vector<br::ScoreRequest> out;
  for (const auto& batch : golden_batches(kRequests)) {
    for (const auto& line : batch) {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j["id"], j["question"], j["reference"], j["candidate"]});
    }
  }
  return out;
}

std::vector<double> golden_scores() {
  std::vector<double> out;
  for (const auto& batch : golden_batches(kResponses)) {
    for (const auto& line : batch) out.push_back(nlohmann::json::parse(line)["score"].get<double>());
  }
  return out;
}

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

std::string replay_command() {
  return shell_quote(AEQUIV_GOLDEN_BRIDGE) + " replay " + shell_quote(kRequests) + " " +
         shell_quote(kResponses);
}

// In-process transport returning canned responses.
class CannedTransport final : public br::Transport {
 public:
  explicit CannedTransport(std::function<std::vector<br::ScoreResponse>(std::span<const br::ScoreRequest>)> fn)
      : fn_(std::move(fn)) {}
  std::vector<br::ScoreResponse> send(std::span<const br::ScoreRequest> batch) override {
    ++batches;
    return fn_(batch);
  }
  std::string describe() const override { return "canned"; }
  int batches = 0;

 private:
  std::function<std::vector<br::ScoreResponse>(std::span<const br::ScoreRequest>)> fn_;
};

std::vector<br::ScoreRequest> numbered(std::size_t n) {
  std::vector<br::ScoreRequest> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"id" + std::to_string(i), "q", "r", "c"});
  return out;
}

TEST(BridgeProtocol, EncodedRequestsMatchGoldenBytes) {
  const auto requests = golden_requests();
  std::vector<std::string> lines;
  for (const auto& batch : golden_batches(kRequests)) lines.insert(lines.end(), batch.begin(), batch.end());
  ASSERT_EQ(requests.size(), lines.size());
  for (std::size_t i = 0; i < requests.size(); ++i) EXPECT_EQ(br::encode_request(requests[i]), lines[i]);
}

TEST(BridgeProtocol, ResponsesRoundTripGoldenBytes) {
  for (const auto& batch : golden_batches(kResponses)) {
    for (const auto& line : batch) EXPECT_EQ(br::encode_response(br::decode_response(line)), line);
  }
  EXPECT_EQ(br::encode_response({"x", 0.93, ""}), R"({"id":"x","score":0.93})");
  const auto err = br::decode_response(R"({"id":"x","error":"too long"})");
  EXPECT_FALSE(err.score.has_value());
  EXPECT_EQ(err.error, "too long");
  EXPECT_THROW(br::decode_response("{not json"), aequiv::BridgeError);
  EXPECT_THROW(br::decode_response(R"({"score":0.5})"), aequiv::BridgeError);
}

TEST(BridgeProtocol, GoldenConversationOverStdio) {
  br::StdioTransport transport(replay_command(), 10s);
  const auto requests = golden_requests();
  EXPECT_EQ(br::exchange(transport, requests, 3), golden_scores());
}

TEST(BridgeProtocol, StdioReplayDetectsDeviation) {
  br::StdioTransport transport(replay_command(), 10s);
  auto requests = golden_requests();
  requests[0].candidate += " ";
  EXPECT_THROW(br::exchange(transport, requests, 3), aequiv::BridgeError);
}

TEST(BridgeProtocol, GoldenConversationOverHttp) {
  const auto req_batches = golden_batches(kRequests);
  const auto resp_batches = golden_batches(kResponses);
  httplib::Server server;
  std::size_t served = 0;
  std::vector<std::string> mismatches;
  server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    auto join = [](const std::vector<std::string>& lines) {
      std::string s = "[";
      for (std::size_t i = 0; i < lines.size(); ++i) s += (i ? "," : "") + lines[i];
      return s + "]";
    };
    if (served >= req_batches.size() || req.body != join(req_batches[served])) {
      mismatches.push_back(req.body);
      res.status = 400;
      res.set_content(R"({"error":"unexpected request"})", "application/json");
      return;
    }
    res.set_content(join(resp_batches[served++]), "application/json");
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok","model":"golden"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  br::HttpTransport transport("http://127.0.0.1:" + std::to_string(port), 10s);
  EXPECT_EQ(transport.health(), "golden");
  EXPECT_EQ(br::exchange(transport, golden_requests(), 3), golden_scores());
  EXPECT_TRUE(mismatches.empty());
  EXPECT_EQ(served, req_batches.size());
  server.stop();
  thread.join();
}

TEST(BridgeClient, HttpUnreachableIsBridgeError) {
  br::HttpTransport transport("http://127.0.0.1:1", 1s);
  EXPECT_THROW(br::exchange(transport, numbered(1)), aequiv::BridgeError);
}

TEST(BridgeClient, ThousandPairsKeepIdBijection) {
  br::StdioTransport transport(shell_quote(AEQUIV_GOLDEN_BRIDGE) + " constant 0.25", 10s);
  const auto scores = br::exchange(transport, numbered(1000), 256);
  ASSERT_EQ(scores.size(), 1000u);
  for (double s : scores) EXPECT_EQ(s, 0.25);
}

TEST(BridgeClient, ExitedProcessIsBridgeError) {
  br::StdioTransport transport(shell_quote(AEQUIV_GOLDEN_BRIDGE) + " exit", 5s);
  EXPECT_THROW(br::exchange(transport, numbered(3)), aequiv::BridgeError);
}

TEST(BridgeClient, MissingCommandIsBridgeError) {
  br::StdioTransport transport("/nonexistent/bridge-binary", 5s);
  EXPECT_THROW(br::exchange(transport, numbered(2)), aequiv::BridgeError);
}

TEST(BridgeClient, ReordersResponsesIntoRequestOrder) {
  CannedTransport t([](std::span<const br::ScoreRequest> batch) {
    std::vector<br::ScoreResponse> out;
    for (auto it = batch.rbegin(); it != batch.rend(); ++it) {
      out.push_back({it->id, std::stod(it->id.substr(2)) / 100.0, ""});
    }
    return out;
  });
  const auto scores = br::exchange(t, numbered(10), 4);
  EXPECT_EQ(t.batches, 3);
  for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_DOUBLE_EQ(scores[i], i / 100.0);
}

TEST(BridgeClient, RejectsProtocolViolations) {
  auto respond = [](auto mutate) {
    return CannedTransport([mutate](std::span<const br::ScoreRequest> batch) {
      std::vector<br::ScoreResponse> out;
      for (const auto& r : batch) out.push_back({r.id, 0.5, ""});
      mutate(out);
      return out;
    });
  };
  auto drop = respond([](auto& v) { v.pop_back(); });
  EXPECT_THROW(br::exchange(drop, numbered(3)), aequiv::BridgeError);
  auto unknown = respond([](auto& v) { v[0].id = "nope"; });
  EXPECT_THROW(br::exchange(unknown, numbered(3)), aequiv::BridgeError);
  auto twice = respond([](auto& v) { v[1].id = v[0].id; });
  EXPECT_THROW(br::exchange(twice, numbered(3)), aequiv::BridgeError);
  auto range = respond([](auto& v) { v[2].score = 1.5; });
  EXPECT_THROW(br::exchange(range, numbered(3)), aequiv::BridgeError);
  auto error = respond([](auto& v) {
    v[0].score.reset();
    v[0].error = "model failure";
  });
  EXPECT_THROW(br::exchange(error, numbered(3)), aequiv::BridgeError);

  auto ok = respond([](auto&) {});
  auto dup = numbered(2);
  dup[1].id = dup[0].id;
  EXPECT_THROW(br::exchange(ok, dup), aequiv::BridgeError);
  EXPECT_THROW(br::exchange(ok, numbered(2), 0), aequiv::UsageError);
}

TEST(BridgeClient, MakeTransportPicksProtocol) {
  EXPECT_EQ(br::make_transport("http://localhost:9", 1s)->describe(), "http://localhost:9");
  EXPECT_EQ(br::make_transport("true", 1s)->describe(), "stdio:true");
  EXPECT_THROW(br::make_transport("", 1s), aequiv::UsageError);
}

TEST(RemoteBridgeScorer, ScoresThroughStdio) {
  aequiv::scoring::RemoteBridgeScorer scorer(
      br::make_transport(shell_quote(AEQUIV_GOLDEN_BRIDGE) + " constant 0.75", 10s), 2);
  std::vector<aequiv::scoring::ScoreQuery> q{{"a", "", "x", "y"}, {"b", "", "x", "z"}, {"c", "", "", ""}};
  EXPECT_EQ(scorer.score_batch(q), (std::vector<double>{0.75, 0.75, 0.75}));
}

}  // namespace
