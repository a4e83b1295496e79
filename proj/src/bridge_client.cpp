#include "aequiv/bridge_client.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aequiv/error.hpp"

namespace aequiv::bridge {
namespace {

using ojson = nlohmann::ordered_json;

ScoreResponse response_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw BridgeError("bridge response is not a JSON object: " + j.dump());
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) {
    throw BridgeError("bridge response without a string id: " + j.dump());
  }
  ScoreResponse r;
  r.id = id->get<std::string>();
  if (auto err = j.find("error"); err != j.end() && !err->is_null()) {
    r.error = err->is_string() ? err->get<std::string>() : err->dump();
  }
  if (auto score = j.find("score"); score != j.end() && !score->is_null()) {
    if (!score->is_number()) throw BridgeError("bridge score is not a number: " + j.dump());
    r.score = score->get<double>();
  }
  return r;
}

int remaining_ms(std::chrono::steady_clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  return left.count() > 0 ? static_cast<int>(left.count()) : 0;
}

}  // namespace

std::string encode_request(const ScoreRequest& request) {
  ojson j;
  j["id"] = request.id;
  j["question"] = request.question;
  j["reference"] = request.reference;
  j["candidate"] = request.candidate;
  return j.dump();
}

std::string encode_response(const ScoreResponse& response) {
  ojson j;
  j["id"] = response.id;
  if (response.score) j["score"] = *response.score;
  if (!response.error.empty()) j["error"] = response.error;
  return j.dump();
}

ScoreResponse decode_response(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw BridgeError(std::string("malformed bridge response: ") + e.what());
  }
  return response_from_json(j);
}

StdioTransport::StdioTransport(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw BridgeError("pipe: " + std::string(std::strerror(errno)));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw BridgeError("pipe: " + std::string(std::strerror(errno)));
  }
  // A dead child must surface as EPIPE, not kill the client.
  signal(SIGPIPE, SIG_IGN);
  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw BridgeError("fork: " + std::string(std::strerror(errno)));
  }
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  fcntl(from_child_, F_SETFD, FD_CLOEXEC);
}

StdioTransport::~StdioTransport() { shutdown(); }

void StdioTransport::shutdown() {
  if (to_child_ >= 0) close(to_child_);
  to_child_ = -1;
  if (from_child_ >= 0) close(from_child_);
  from_child_ = -1;
  if (pid_ > 0) {
    // Give the server a moment to exit on EOF before forcing it.
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(10'000);
    }
    kill(pid_, SIGTERM);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

std::vector<ScoreResponse> StdioTransport::send(std::span<const ScoreRequest> batch) {
  if (to_child_ < 0) throw BridgeError("bridge process is not running");
  std::string payload;
  for (const auto& r : batch) {
    payload += encode_request(r);
    payload += '\n';
  }
  payload += '\n';

  // Writes and reads are interleaved so a server that answers line by line
  // cannot stall on a full output pipe while we are still writing.
  std::string_view pending = payload;
  std::vector<ScoreResponse> out;
  out.reserve(batch.size());
  auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (out.size() < batch.size()) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty()) out.push_back(decode_response(line));
      continue;
    }
    pollfd fds[2] = {{from_child_, POLLIN, 0}, {to_child_, POLLOUT, 0}};
    const nfds_t nfds = pending.empty() ? 1 : 2;
    const int ready = poll(fds, nfds, remaining_ms(deadline));
    if (ready == 0) throw BridgeError("bridge timed out (" + command_ + ")");
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("poll: " + std::string(std::strerror(errno)));
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP)) != 0) {
      const ssize_t n = write(to_child_, pending.data(), std::min<std::size_t>(pending.size(), 4096));
      if (n < 0 && errno != EINTR && errno != EAGAIN) {
        throw BridgeError("bridge process closed its input (" + command_ + ")");
      }
      if (n > 0) pending.remove_prefix(static_cast<std::size_t>(n));
    }
    if ((fds[0].revents & (POLLIN | POLLHUP | POLLERR)) != 0) {
      char chunk[4096];
      const ssize_t n = read(from_child_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeError("read: " + std::string(std::strerror(errno)));
      }
      if (n == 0) throw BridgeError("bridge process exited (" + command_ + ")");
      buffer_.append(chunk, static_cast<std::size_t>(n));
      // Progress resets the inactivity timeout.
      deadline = std::chrono::steady_clock::now() + timeout_;
    }
  }
  return out;
}

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

httplib::Client make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
  httplib::Client client(base_url);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  return client;
}

}  // namespace

std::vector<ScoreResponse> HttpTransport::send(std::span<const ScoreRequest> batch) {
  auto client = make_client(base_url_, timeout_);
  std::string body = "[";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i > 0) body += ',';
    body += encode_request(batch[i]);
  }
  body += ']';
  auto res = client.Post("/score", body, "application/json");
  if (!res) {
    throw BridgeError("bridge unreachable at " + base_url_ + ": " +
                      httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BridgeError("bridge returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw BridgeError(std::string("malformed bridge response: ") + e.what());
  }
  if (!arr.is_array()) throw BridgeError("bridge response is not a JSON array");
  std::vector<ScoreResponse> out;
  out.reserve(arr.size());
  for (const auto& item : arr) out.push_back(response_from_json(item));
  return out;
}

std::string HttpTransport::health() {
  auto client = make_client(base_url_, timeout_);
  auto res = client.Get("/health");
  if (!res) {
    throw BridgeError("bridge unreachable at " + base_url_ + ": " +
                      httplib::to_string(res.error()));
  }
  if (res->status != 200) throw BridgeError("bridge health check returned HTTP " +
                                            std::to_string(res->status));
  try {
    auto j = nlohmann::json::parse(res->body);
    if (j.value("status", "") != "ok") throw BridgeError("bridge reports status " + res->body);
    return j.value("model", "");
  } catch (const nlohmann::json::exception& e) {
    throw BridgeError(std::string("malformed health response: ") + e.what());
  }
}

std::unique_ptr<Transport> make_transport(const std::string& endpoint,
                                          std::chrono::milliseconds timeout) {
  if (endpoint.empty()) throw UsageError("empty bridge endpoint");
  if (endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
    return std::make_unique<HttpTransport>(endpoint, timeout);
  }
  return std::make_unique<StdioTransport>(endpoint, timeout);
}

std::vector<double> exchange(Transport& transport, std::span<const ScoreRequest> requests,
                             std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("bridge batch size must be positive");
  std::vector<double> scores(requests.size());
  for (std::size_t start = 0; start < requests.size(); start += batch_size) {
    const auto batch = requests.subspan(start, std::min(batch_size, requests.size() - start));
    std::unordered_map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!slot.emplace(batch[i].id, start + i).second) {
        throw BridgeError("duplicate request id '" + batch[i].id + "' in one batch");
      }
    }
    const auto responses = transport.send(batch);
    if (responses.size() != batch.size()) {
      throw BridgeError("bridge answered " + std::to_string(responses.size()) + " of " +
                        std::to_string(batch.size()) + " requests");
    }
    std::vector<bool> filled(batch.size(), false);
    for (const auto& r : responses) {
      auto it = slot.find(r.id);
      if (it == slot.end()) throw BridgeError("bridge returned unknown id '" + r.id + "'");
      const std::size_t local = it->second - start;
      if (filled[local]) throw BridgeError("bridge returned id '" + r.id + "' twice");
      filled[local] = true;
      if (!r.error.empty()) {
        throw BridgeError("bridge failed on '" + r.id + "': " + r.error);
      }
      if (!r.score || !std::isfinite(*r.score) || *r.score < 0.0 || *r.score > 1.0) {
        throw BridgeError("bridge score for '" + r.id + "' is outside [0, 1]");
      }
      scores[it->second] = *r.score;
    }
  }
  return scores;
}

}  // namespace aequiv::bridge
