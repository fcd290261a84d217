#pragma once

// Client side of the external model bridge: newline-delimited JSON over a
// child process's stdio or a local Unix socket.
//
//   -> {"op":"handshake","id":0}            <- {"id":0,"dim":768}
//   -> {"op":"embed","id":7,"text":"..."}   <- {"id":7,"vector":[...]}
//   -> {"op":"logits","id":8,"text":"..."}  <- {"id":8,"logits":[a,b]}
//   <- {"id":9,"error":"..."} on a per-request failure
//
// Responses may arrive in any order and are matched by id.

#include <csignal>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "cjpe/embedder.hpp"
#include "cjpe/error.hpp"

namespace cjpe {

class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  /// Next full line without the newline; nullopt on end of stream.
  virtual std::optional<std::string> read_line() = 0;
};

namespace detail {

class FdReader {
 public:
  std::optional<std::string> read_line(int fd) {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::read(fd, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  std::string buffer_;
};

inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::Bridge, "bridge connection closed while writing");
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace detail

/// Runs `/bin/sh -c command` with its stdin/stdout connected to the channel.
class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command) {
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw Error(ErrorCode::Bridge, "pipe() failed");
    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorCode::Bridge, "fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
  }

  ~ProcessChannel() override {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  void write_line(const std::string& line) override { detail::write_all(write_fd_, line + "\n"); }
  std::optional<std::string> read_line() override { return reader_.read_line(read_fd_); }

 private:
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  detail::FdReader reader_;
};

/// Connects to a server listening on a Unix-domain stream socket.
class UnixSocketChannel final : public LineChannel {
 public:
  explicit UnixSocketChannel(const std::string& path) {
    std::signal(SIGPIPE, SIG_IGN);
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(ErrorCode::Bridge, "socket() failed");
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof addr.sun_path) throw Error(ErrorCode::Bridge, "socket path too long");
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::Bridge, "cannot connect to " + path);
    }
  }
  ~UnixSocketChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }
  UnixSocketChannel(const UnixSocketChannel&) = delete;
  UnixSocketChannel& operator=(const UnixSocketChannel&) = delete;

  void write_line(const std::string& line) override { detail::write_all(fd_, line + "\n"); }
  std::optional<std::string> read_line() override { return reader_.read_line(fd_); }

 private:
  int fd_ = -1;
  detail::FdReader reader_;
};

/// Embedder backed by a bridge server. Calls are serialised on one mutex;
/// embed_many() pipelines a batch of requests before reading replies.
class BridgeEmbedder final : public Embedder {
 public:
  explicit BridgeEmbedder(std::unique_ptr<LineChannel> channel) : channel_(std::move(channel)) {
    const auto reply = call({{"op", "handshake"}});
    if (!reply.contains("dim") || !reply["dim"].is_number_unsigned() || reply["dim"].get<std::size_t>() == 0)
      throw Error(ErrorCode::Bridge, "handshake reply lacks a positive dim");
    dim_ = reply["dim"].get<std::size_t>();
  }

  /// "unix:<path>" connects to a socket; anything else is run as a command.
  static std::unique_ptr<BridgeEmbedder> connect(const std::string& endpoint) {
    if (endpoint.rfind("unix:", 0) == 0)
      return std::make_unique<BridgeEmbedder>(std::make_unique<UnixSocketChannel>(endpoint.substr(5)));
    return std::make_unique<BridgeEmbedder>(std::make_unique<ProcessChannel>(endpoint));
  }

  std::size_t dim() const override { return dim_; }

  Vector embed_chunk(std::string_view text) const override {
    return parse_vector(call({{"op", "embed"}, {"text", std::string(text)}}));
  }

  ChunkLogits logits_chunk(std::string_view text) const override {
    const auto reply = call({{"op", "logits"}, {"text", std::string(text)}});
    if (!reply.contains("logits") || !reply["logits"].is_array() || reply["logits"].size() != 2 ||
        !reply["logits"][0].is_number() || !reply["logits"][1].is_number())
      throw Error(ErrorCode::Bridge, "logits reply must carry two numbers");
    return {reply["logits"][0].get<double>(), reply["logits"][1].get<double>()};
  }

  /// Sends every request first, then collects replies in whatever order the
  /// server produces them.
  std::vector<Vector> embed_many(const std::vector<std::string>& texts) const {
    std::lock_guard lock(mutex_);
    std::map<std::uint64_t, std::size_t> slot;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto id = next_id_++;
      slot[id] = i;
      channel_->write_line(nlohmann::json{{"op", "embed"}, {"id", id}, {"text", texts[i]}}.dump());
    }
    // Read every reply before reporting a failure so the stream stays in step.
    std::vector<Vector> out(texts.size());
    std::optional<Error> failure;
    for (std::size_t received = 0; received < texts.size(); ++received) {
      const auto reply = read_reply(false);
      const auto it = slot.find(reply["id"].get<std::uint64_t>());
      if (it == slot.end()) throw Error(ErrorCode::Bridge, "reply with unknown id");
      try {
        check_error(reply);
        out[it->second] = parse_vector(reply);
      } catch (const Error& e) {
        if (!failure) failure = e;
      }
      slot.erase(it);
    }
    if (failure) throw *failure;
    return out;
  }

 private:
  static void check_error(const nlohmann::json& reply) {
    if (reply.contains("error") && !reply["error"].is_null())
      throw Error(ErrorCode::Bridge, "bridge error: " + reply["error"].dump());
  }

  nlohmann::json read_reply(bool throw_on_error = true) const {
    const auto line = channel_->read_line();
    if (!line) throw Error(ErrorCode::Bridge, "bridge closed the connection");
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(*line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Bridge, std::string("unparseable reply: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_unsigned())
      throw Error(ErrorCode::Bridge, "reply without a numeric id");
    if (throw_on_error) check_error(reply);
    return reply;
  }

  nlohmann::json call(nlohmann::json request) const {
    std::lock_guard lock(mutex_);
    const auto id = next_id_++;
    request["id"] = id;
    channel_->write_line(request.dump());
    auto reply = read_reply();
    if (reply["id"].get<std::uint64_t>() != id) throw Error(ErrorCode::Bridge, "reply id does not match request");
    return reply;
  }

  Vector parse_vector(const nlohmann::json& reply) const {
    if (!reply.contains("vector") || !reply["vector"].is_array())
      throw Error(ErrorCode::Bridge, "embed reply lacks a vector");
    const auto& v = reply["vector"];
    if (v.size() != dim_)
      throw Error(ErrorCode::Bridge, "vector has " + std::to_string(v.size()) + " entries, declared dim " +
                                         std::to_string(dim_));
    Vector out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      if (!v[i].is_number()) throw Error(ErrorCode::Bridge, "vector entry " + std::to_string(i) + " is not a number");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  std::unique_ptr<LineChannel> channel_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace cjpe
