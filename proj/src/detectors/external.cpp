#include "mash/detectors/external.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <nlohmann/json.hpp>

#include "mash/corpus/text.hpp"

namespace mash::detectors {
namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

void write_all(int fd, const std::string& data, const std::string& who) {
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw OracleUnavailable(who + ": write failed: " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

// Reads until a newline, keeping anything after it in `buffer`.
std::string read_line(int fd, std::string& buffer, Millis timeout, const std::string& who) {
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    if (auto pos = buffer.find('\n'); pos != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      return line;
    }
    const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now());
    if (left.count() <= 0) {
      throw OracleUnavailable(who + ": timed out after " + std::to_string(timeout.count()) + " ms");
    }
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) {
        continue;
      }
      throw OracleUnavailable(who + ": poll failed: " + std::strerror(errno));
    }
    if (r == 0) {
      continue;
    }
    char chunk[4096];
    const auto n = ::read(fd, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) {
        continue;
      }
      throw OracleUnavailable(who + ": read failed: " + std::strerror(errno));
    }
    if (n == 0) {
      throw OracleUnavailable(who + ": peer closed the stream");
    }
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

ProcessChannel::ProcessChannel(std::string command, Millis timeout) : command_(std::move(command)), timeout_(timeout) {
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0) {
    throw OracleUnavailable("exec: pipe failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) {
    throw OracleUnavailable("exec: fork failed");
  }
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) {
    ::close(to_child_);
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
  }
  if (pid_ > 0) {
    // Closing stdin lets a well-behaved child exit; give it a moment.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        return;
      }
      ::usleep(2000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

std::string ProcessChannel::exchange(const std::string& line) {
  if (broken_) {
    throw OracleUnavailable(describe() + ": channel broken by an earlier failure");
  }
  try {
    write_all(to_child_, line + "\n", describe());
    return read_line(from_child_, buffer_, timeout_, describe());
  } catch (...) {
    broken_ = true;
    throw;
  }
}

TcpChannel::TcpChannel(std::string host, int port, Millis timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {
  ignore_sigpipe();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0) {
    throw OracleUnavailable(describe() + ": cannot resolve host");
  }
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd_ < 0) {
      continue;
    }
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) {
      break;
    }
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) {
    throw OracleUnavailable(describe() + ": connection failed");
  }
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

std::string TcpChannel::exchange(const std::string& line) {
  if (broken_) {
    throw OracleUnavailable(describe() + ": channel broken by an earlier failure");
  }
  try {
    write_all(fd_, line + "\n", describe());
    return read_line(fd_, buffer_, timeout_, describe());
  } catch (...) {
    broken_ = true;
    throw;
  }
}

std::unique_ptr<NdjsonChannel> open_channel(const std::string& endpoint, Millis timeout) {
  if (endpoint.starts_with("exec:")) {
    return std::make_unique<ProcessChannel>(endpoint.substr(5), timeout);
  }
  if (endpoint.starts_with("tcp:")) {
    const auto rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("tcp endpoint must be tcp:<host>:<port>");
    }
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("tcp endpoint has a bad port: " + endpoint);
    }
    return std::make_unique<TcpChannel>(rest.substr(0, colon), port, timeout);
  }
  throw ConfigError("external endpoint must start with exec: or tcp: (got '" + endpoint + "')");
}

ExternalDetector::ExternalDetector(std::unique_ptr<NdjsonChannel> channel) : channel_(std::move(channel)) {
  if (!channel_) {
    throw ConfigError("external detector: no channel");
  }
}

double ExternalDetector::evaluate(const TokenSeq& x) const {
  std::lock_guard lock(mu_);
  const auto id = std::to_string(next_id_++);
  const nlohmann::json req{{"id", id}, {"text", corpus::detokenize(x)}};
  const auto reply = channel_->exchange(req.dump());
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    throw OracleUnavailable("external detector: response is not JSON");
  }
  if (!resp.is_object() || !resp.contains("id") || !resp.contains("score") || !resp["score"].is_number()) {
    throw OracleUnavailable("external detector: response lacks id/score");
  }
  if (!resp["id"].is_string() || resp["id"].get<std::string>() != id) {
    throw OracleUnavailable("external detector: response id does not match request");
  }
  return resp["score"].get<double>();
}

nn::Checkpoint ExternalDetector::to_checkpoint() const {
  throw ConfigError("external detector has no checkpoint form");
}

}  // namespace mash::detectors
