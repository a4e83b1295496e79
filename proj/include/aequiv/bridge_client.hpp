#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aequiv::bridge {

struct ScoreRequest {
  std::string id;
  std::string question;
  std::string reference;
  std::string candidate;
};

struct ScoreResponse {
  std::string id;
  std::optional<double> score;
  std::string error;  // set when the server rejected the item
};

// {"id":"...","question":"...","reference":"...","candidate":"..."}
std::string encode_request(const ScoreRequest& request);
std::string encode_response(const ScoreResponse& response);
ScoreResponse decode_response(std::string_view line);

// Carries one batch to a scoring server and back. Implementations return the
// raw responses; ordering and id checks happen in `exchange`.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::vector<ScoreResponse> send(std::span<const ScoreRequest> batch) = 0;
  virtual std::string describe() const = 0;
};

// Runs `command` through /bin/sh and speaks line-delimited JSON over its
// standard streams; a blank line closes each batch. The child is started on
// construction and terminated on destruction.
class StdioTransport final : public Transport {
 public:
  StdioTransport(std::string command, std::chrono::milliseconds timeout);
  ~StdioTransport() override;
  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::vector<ScoreResponse> send(std::span<const ScoreRequest> batch) override;
  std::string describe() const override { return "stdio:" + command_; }

 private:
  void shutdown();

  std::string command_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// POST /score with a JSON array of requests; GET /health.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout);

  std::vector<ScoreResponse> send(std::span<const ScoreRequest> batch) override;
  std::string describe() const override { return base_url_; }

  // Model name reported by GET /health.
  std::string health();

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

// "http://..." and "https://..." endpoints use HTTP; anything else is a shell
// command for the stdio protocol.
std::unique_ptr<Transport> make_transport(const std::string& endpoint,
                                          std::chrono::milliseconds timeout);

// Sends `requests` in batches of at most `batch_size`, one batch in flight,
// and returns scores in request order. Throws BridgeError on a missing,
// duplicated or unknown id, on an error item, or on a score outside [0, 1].
std::vector<double> exchange(Transport& transport, std::span<const ScoreRequest> requests,
                             std::size_t batch_size = 256);

}  // namespace aequiv::bridge
