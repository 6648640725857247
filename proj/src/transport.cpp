#include "softhand/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <system_error>

namespace softhand {

namespace {

struct Pipe {
  std::mutex mutex;
  std::deque<std::uint8_t> queue[2];
  bool open = true;
};

class PipeEnd final : public Transport {
 public:
  PipeEnd(std::shared_ptr<Pipe> pipe, int side, std::string name)
      : pipe_(std::move(pipe)), side_(side), name_(std::move(name)) {}
  ~PipeEnd() override { close(); }

  bool send(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(pipe_->mutex);
    if (!pipe_->open) return false;
    auto& q = pipe_->queue[1 - side_];
    q.insert(q.end(), bytes.begin(), bytes.end());
    return true;
  }

  std::size_t receive(std::vector<std::uint8_t>& out) override {
    std::lock_guard lock(pipe_->mutex);
    auto& q = pipe_->queue[side_];
    const std::size_t n = q.size();
    out.insert(out.end(), q.begin(), q.end());
    q.clear();
    return n;
  }

  bool connected() const override {
    std::lock_guard lock(pipe_->mutex);
    return pipe_->open;
  }

  bool reconnect() override { return false; }

  void close() override {
    std::lock_guard lock(pipe_->mutex);
    pipe_->open = false;
  }

  std::string peer() const override { return name_; }

 private:
  std::shared_ptr<Pipe> pipe_;
  int side_;
  std::string name_;
};

// Client end that can dial its hub again after the link drops.
class DialedEnd final : public Transport {
 public:
  DialedEnd(std::weak_ptr<InProcessHub> hub, std::shared_ptr<Transport> link, std::string name)
      : hub_(std::move(hub)), link_(std::move(link)), name_(std::move(name)) {}
  ~DialedEnd() override { close(); }

  bool send(std::span<const std::uint8_t> bytes) override { return link_ && link_->send(bytes); }
  std::size_t receive(std::vector<std::uint8_t>& out) override { return link_ ? link_->receive(out) : 0; }
  bool connected() const override { return link_ && link_->connected(); }

  bool reconnect() override {
    close();
    auto hub = hub_.lock();
    if (!hub) return false;
    auto fresh = hub->dial(name_);
    if (!fresh) return false;
    // dial() wrapped the new pipe; take its inner link so the wrapper's
    // destructor has nothing left to close.
    link_ = std::move(std::static_pointer_cast<DialedEnd>(fresh)->link_);
    return true;
  }

  void close() override {
    if (link_) link_->close();
  }

  std::string peer() const override { return name_; }

 private:
  std::weak_ptr<InProcessHub> hub_;
  std::shared_ptr<Transport> link_;
  std::string name_;
};

[[noreturn]] void throw_errno(const std::string& what) { throw std::system_error(errno, std::generic_category(), what); }

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) throw_errno("fcntl");
}

}  // namespace

std::pair<std::shared_ptr<Transport>, std::shared_ptr<Transport>> make_pipe(std::string name) {
  auto pipe = std::make_shared<Pipe>();
  return {std::make_shared<PipeEnd>(pipe, 0, name), std::make_shared<PipeEnd>(pipe, 1, name)};
}

std::shared_ptr<InProcessHub> InProcessHub::create() { return std::shared_ptr<InProcessHub>(new InProcessHub()); }

std::shared_ptr<Transport> InProcessHub::dial(std::string name) {
  std::lock_guard lock(mutex_);
  if (!accepting_) return nullptr;
  auto [client, server] = make_pipe(name + "#" + std::to_string(next_id_++));
  pending_.push_back(server);
  return std::make_shared<DialedEnd>(weak_from_this(), client, std::move(name));
}

std::shared_ptr<Transport> InProcessHub::accept() {
  std::lock_guard lock(mutex_);
  if (pending_.empty()) return nullptr;
  auto t = pending_.front();
  pending_.pop_front();
  return t;
}

void InProcessHub::set_accepting(bool accepting) {
  std::lock_guard lock(mutex_);
  accepting_ = accepting;
}

bool InProcessHub::accepting() const {
  std::lock_guard lock(mutex_);
  return accepting_;
}

TcpTransport::TcpTransport(std::string host, std::uint16_t port)
    : host_(std::move(host)), port_(port), can_reconnect_(true), peer_(host_ + ":" + std::to_string(port_)) {
  open_socket();
}

TcpTransport::TcpTransport(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) { set_nonblocking(fd_); }

TcpTransport::~TcpTransport() { close(); }

bool TcpTransport::open_socket() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host_.c_str(), std::to_string(port_).c_str(), &hints, &res) != 0) return false;
  int fd = -1;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) return false;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  set_nonblocking(fd);
  fd_ = fd;
  return true;
}

bool TcpTransport::send(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mutex_);
  std::size_t sent = 0;
  while (fd_ >= 0 && sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
    } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd p{fd_, POLLOUT, 0};
      ::poll(&p, 1, 100);
    } else if (n < 0 && errno == EINTR) {
      continue;
    } else {
      ::close(fd_);
      fd_ = -1;
    }
  }
  return fd_ >= 0;
}

std::size_t TcpTransport::receive(std::vector<std::uint8_t>& out) {
  std::lock_guard lock(mutex_);
  std::size_t total = 0;
  std::uint8_t buf[4096];
  while (fd_ >= 0) {
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n > 0) {
      out.insert(out.end(), buf, buf + n);
      total += static_cast<std::size_t>(n);
    } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      break;
    } else if (n < 0 && errno == EINTR) {
      continue;
    } else {
      ::close(fd_);
      fd_ = -1;
    }
  }
  return total;
}

bool TcpTransport::connected() const {
  std::lock_guard lock(mutex_);
  return fd_ >= 0;
}

bool TcpTransport::reconnect() {
  std::lock_guard lock(mutex_);
  if (!can_reconnect_) return false;
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  return open_socket();
}

void TcpTransport::close() {
  std::lock_guard lock(mutex_);
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

TcpListener::TcpListener(const std::string& address, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_errno("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (address.empty() || address == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, address == "localhost" ? "127.0.0.1" : address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw std::invalid_argument("listen address must be an IPv4 literal: " + address);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
    const int err = errno;
    ::close(fd_);
    throw std::system_error(err, std::generic_category(), "bind/listen on port " + std::to_string(port));
  }
  set_nonblocking(fd_);
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::shared_ptr<Transport> TcpListener::accept() {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  const int fd = ::accept(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  if (fd < 0) return nullptr;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  char ip[INET_ADDRSTRLEN] = "?";
  ::inet_ntop(AF_INET, &addr.sin_addr, ip, sizeof ip);
  return std::make_shared<TcpTransport>(fd, std::string(ip) + ":" + std::to_string(ntohs(addr.sin_port)));
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text, const std::string& default_host) {
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? "" : text.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? text : text.substr(colon + 1);
  if (host.empty()) host = default_host;
  std::size_t used = 0;
  unsigned long port = 0;
  try {
    port = std::stoul(port_text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != port_text.size() || port > 65535)
    throw std::invalid_argument("bad endpoint '" + text + "': expected host:port");
  return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace softhand
