#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "mash/detectors/oracle.hpp"

namespace mash::detectors {

/// One JSON object per line, one response line per request line.
class NdjsonChannel {
 public:
  virtual ~NdjsonChannel() = default;
  /// Sends `line` (without trailing newline) and returns the next response
  /// line. Throws OracleUnavailable on timeout, EOF or I/O failure; after a
  /// failure the channel stays broken.
  virtual std::string exchange(const std::string& line) = 0;
  [[nodiscard]] virtual std::string describe() const = 0;
};

using Millis = std::chrono::milliseconds;
inline constexpr Millis kDefaultExternalTimeout{10'000};

/// Child process spawned via /bin/sh -c, talking over its stdin/stdout.
class ProcessChannel : public NdjsonChannel {
 public:
  explicit ProcessChannel(std::string command, Millis timeout = kDefaultExternalTimeout);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  std::string exchange(const std::string& line) override;
  [[nodiscard]] std::string describe() const override { return "exec:" + command_; }

 private:
  std::string command_;
  Millis timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  bool broken_ = false;
};

class TcpChannel : public NdjsonChannel {
 public:
  TcpChannel(std::string host, int port, Millis timeout = kDefaultExternalTimeout);
  ~TcpChannel() override;
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  std::string exchange(const std::string& line) override;
  [[nodiscard]] std::string describe() const override { return "tcp:" + host_ + ":" + std::to_string(port_); }

 private:
  std::string host_;
  int port_;
  Millis timeout_;
  int fd_ = -1;
  std::string buffer_;
  bool broken_ = false;
};

/// "exec:<shell command>" or "tcp:<host>:<port>". ConfigError otherwise.
std::unique_ptr<NdjsonChannel> open_channel(const std::string& endpoint, Millis timeout = kDefaultExternalTimeout);

/// Detector behind an NDJSON channel:
///   request  {"id": "<n>", "text": "..."}
///   response {"id": "<n>", "score": s}
/// Calls are serialized on the channel, so it is safe to share.
class ExternalDetector : public Detector {
 public:
  explicit ExternalDetector(std::unique_ptr<NdjsonChannel> channel);

  [[nodiscard]] double evaluate(const TokenSeq& x) const override;
  [[nodiscard]] std::string backend() const override { return "external"; }
  /// Throws ConfigError: an external detector has no serialized form.
  [[nodiscard]] nn::Checkpoint to_checkpoint() const override;
  [[nodiscard]] std::string endpoint() const { return channel_->describe(); }

 private:
  std::unique_ptr<NdjsonChannel> channel_;
  mutable std::mutex mu_;
  mutable std::uint64_t next_id_ = 0;
};

}  // namespace mash::detectors
