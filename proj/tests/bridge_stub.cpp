// Minimal bridge server for tests: answers handshake/embed/logits with the
// hashing embedder, on stdio or on a Unix socket. Flags inject faults.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cjpe/bridge.hpp"
#include "cjpe/checkpoint.hpp"
#include "cjpe/embedder.hpp"

namespace {

struct Options {
  std::size_t dim = 16;
  std::uint64_t seed = 13;
  std::string checkpoint;
  std::size_t reverse = 1;  // answer in reverse order in batches of this size
  bool short_vector = false;
  std::string fail_on;
  std::size_t exit_after = 0;
  std::string socket_path;
};

class Server {
 public:
  explicit Server(const Options& opt) : opt_(opt), embedder_(opt.dim, opt.seed) {
    if (!opt.checkpoint.empty()) {
      std::ifstream in(opt.checkpoint);
      auto bundle = cjpe::load_checkpoint(in);
      embedder_ = bundle.make_embedder();
    }
  }

  // Returns false when the server should stop.
  bool handle(const std::string& line, std::vector<std::string>& out) {
    ++requests_;
    nlohmann::json reply;
    bool immediate = false;
    try {
      const auto req = nlohmann::json::parse(line);
      reply["id"] = req.at("id");
      const auto op = req.at("op").get<std::string>();
      if (op == "handshake") {
        reply["dim"] = embedder_.dim();
        immediate = true;
      } else if (op == "embed" || op == "logits") {
        const auto text = req.at("text").get<std::string>();
        if (!opt_.fail_on.empty() && text.find(opt_.fail_on) != std::string::npos) {
          reply["error"] = "refused";
        } else if (op == "embed") {
          auto v = embedder_.embed_chunk(text);
          if (opt_.short_vector) v.pop_back();
          reply["vector"] = v;
        } else if (embedder_.chunk_head()) {
          const auto l = embedder_.logits_chunk(text);
          reply["logits"] = {l[0], l[1]};
        } else {
          const auto v = embedder_.embed_chunk(text);
          reply["logits"] = {0.0, v[0]};
        }
      } else {
        reply["error"] = "unknown op " + op;
      }
    } catch (const std::exception& e) {
      if (!reply.contains("id")) reply["id"] = nullptr;
      reply["error"] = std::string("bad request: ") + e.what();
    }
    pending_.push_back(reply.dump());
    if (immediate || pending_.size() >= opt_.reverse) flush(out);
    return opt_.exit_after == 0 || requests_ < opt_.exit_after;
  }

  void flush(std::vector<std::string>& out) {
    for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) out.push_back(*it);
    pending_.clear();
  }

 private:
  Options opt_;
  cjpe::HashingEmbedder embedder_;
  std::vector<std::string> pending_;
  std::size_t requests_ = 0;
};

void serve(Server& server, cjpe::LineChannel& channel) {
  std::vector<std::string> out;
  while (auto line = channel.read_line()) {
    const bool more = server.handle(*line, out);
    for (const auto& l : out) channel.write_line(l);
    out.clear();
    if (!more) return;
  }
  server.flush(out);
  for (const auto& l : out) channel.write_line(l);
}

class FdChannel final : public cjpe::LineChannel {
 public:
  FdChannel(int in, int out) : in_(in), out_(out) {}
  void write_line(const std::string& line) override { cjpe::detail::write_all(out_, line + "\n"); }
  std::optional<std::string> read_line() override { return reader_.read_line(in_); }

 private:
  int in_, out_;
  cjpe::detail::FdReader reader_;
};

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app("bridge test server");
  app.add_option("--dim", opt.dim);
  app.add_option("--seed", opt.seed);
  app.add_option("--checkpoint", opt.checkpoint);
  app.add_option("--reverse", opt.reverse)->check(CLI::PositiveNumber);
  app.add_flag("--short-vector", opt.short_vector);
  app.add_option("--fail-on", opt.fail_on);
  app.add_option("--exit-after", opt.exit_after);
  app.add_option("--socket", opt.socket_path);
  CLI11_PARSE(app, argc, argv);

  try {
    Server server(opt);
    if (opt.socket_path.empty()) {
      FdChannel channel(STDIN_FILENO, STDOUT_FILENO);
      serve(server, channel);
      return 0;
    }
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::snprintf(addr.sun_path, sizeof addr.sun_path, "%s", opt.socket_path.c_str());
    ::unlink(opt.socket_path.c_str());
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 1) != 0) {
      std::perror("bind");
      return 1;
    }
    std::cout << "ready" << std::endl;
    const int conn = ::accept(fd, nullptr, nullptr);
    FdChannel channel(conn, conn);
    serve(server, channel);
    ::close(conn);
    ::close(fd);
    ::unlink(opt.socket_path.c_str());
  } catch (const std::exception& e) {
    std::cerr << "bridge_stub: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
