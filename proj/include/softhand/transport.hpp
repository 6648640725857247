// Byte-stream links between finger nodes and the coordinator.
//
// A Transport is one connection. A Listener hands out the server side of new
// connections. Both never block: receive() and accept() return immediately
// with whatever is available.

#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace softhand {

class Transport {
 public:
  virtual ~Transport() = default;

  /// False when the link is down; the bytes are dropped.
  virtual bool send(std::span<const std::uint8_t> bytes) = 0;
  /// Appends the bytes that have arrived and returns their count.
  virtual std::size_t receive(std::vector<std::uint8_t>& out) = 0;
  virtual bool connected() const = 0;
  /// Tries to bring a dropped link back once. Server-side ends cannot.
  virtual bool reconnect() = 0;
  virtual void close() = 0;
  virtual std::string peer() const = 0;
};

class Listener {
 public:
  virtual ~Listener() = default;
  virtual std::shared_ptr<Transport> accept() = 0;
};

/// In-process rendezvous point. Clients dial() it; the owner accept()s the
/// matching server ends in dial order.
class InProcessHub final : public Listener, public std::enable_shared_from_this<InProcessHub> {
 public:
  static std::shared_ptr<InProcessHub> create();

  /// Null while the hub refuses connections.
  std::shared_ptr<Transport> dial(std::string name = "inproc");
  std::shared_ptr<Transport> accept() override;

  void set_accepting(bool accepting);
  bool accepting() const;

 private:
  InProcessHub() = default;

  mutable std::mutex mutex_;
  bool accepting_ = true;
  std::deque<std::shared_ptr<Transport>> pending_;
  int next_id_ = 0;
};

/// Two connected ends without a hub. Neither end can reconnect.
std::pair<std::shared_ptr<Transport>, std::shared_ptr<Transport>> make_pipe(std::string name = "pipe");

/// Client side of a TCP connection.
class TcpTransport final : public Transport {
 public:
  /// Connects immediately; connected() reports the outcome.
  TcpTransport(std::string host, std::uint16_t port);
  /// Adopts an accepted socket.
  explicit TcpTransport(int fd, std::string peer);
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  bool send(std::span<const std::uint8_t> bytes) override;
  std::size_t receive(std::vector<std::uint8_t>& out) override;
  bool connected() const override;
  bool reconnect() override;
  void close() override;
  std::string peer() const override { return peer_; }

 private:
  bool open_socket();

  std::string host_;
  std::uint16_t port_ = 0;
  bool can_reconnect_ = false;
  int fd_ = -1;
  std::string peer_;
  mutable std::mutex mutex_;
};

class TcpListener final : public Listener {
 public:
  /// Port 0 picks a free port; see port().
  TcpListener(const std::string& address, std::uint16_t port);
  ~TcpListener() override;

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::shared_ptr<Transport> accept() override;
  std::uint16_t port() const { return port_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// "host:port" or ":port" / "port" (all interfaces, or localhost for clients).
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text, const std::string& default_host);

}  // namespace softhand
