#pragma once

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "emo/service/wire.hpp"

namespace emo::service {

/// Splits "host:port"; throws DataError when malformed.
inline std::pair<std::string, std::string> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw DataError("device address must be host:port");
  }
  const std::string port = address.substr(colon + 1);
  for (char c : port) {
    if (c < '0' || c > '9') throw DataError("device port must be numeric");
  }
  if (port.size() > 5 || std::stoi(port) < 1 || std::stoi(port) > 65535) throw DataError("device port out of range");
  return {address.substr(0, colon), port};
}

/// Transport for device pushes. `deliver` sends one batch of command lines
/// over one connection and reports success.
class DeviceSink {
 public:
  virtual ~DeviceSink() = default;
  virtual bool deliver(const std::string& address, const std::string& payload) = 0;
};

/// Plain TCP: connect, write the lines, close.
class TcpDeviceSink : public DeviceSink {
 public:
  explicit TcpDeviceSink(std::chrono::milliseconds timeout = std::chrono::milliseconds(1000)) : timeout_(timeout) {}

  bool deliver(const std::string& address, const std::string& payload) override {
    const auto [host, port] = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return false;
    bool ok = false;
    for (addrinfo* ai = res; ai != nullptr && !ok; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      ok = connect_with_timeout(fd, ai->ai_addr, ai->ai_addrlen) && send_all(fd, payload);
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
    freeaddrinfo(res);
    return ok;
  }

 private:
  bool wait_for(int fd, short events) const {
    pollfd p{fd, events, 0};
    return ::poll(&p, 1, static_cast<int>(timeout_.count())) == 1 && (p.revents & (POLLERR | POLLHUP)) == 0;
  }

  bool connect_with_timeout(int fd, const sockaddr* addr, socklen_t len) const {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    if (::connect(fd, addr, len) != 0) {
      if (errno != EINPROGRESS || !wait_for(fd, POLLOUT)) return false;
      int err = 0;
      socklen_t err_len = sizeof err;
      if (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &err_len) != 0 || err != 0) return false;
    }
    return true;
  }

  bool send_all(int fd, const std::string& payload) const {
    std::size_t sent = 0;
    while (sent < payload.size()) {
      const ssize_t n = ::send(fd, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
      if (n > 0) {
        sent += static_cast<std::size_t>(n);
      } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        if (!wait_for(fd, POLLOUT)) return false;
      } else if (n < 0 && errno == EINTR) {
        continue;
      } else {
        return false;
      }
    }
    return true;
  }

  std::chrono::milliseconds timeout_;
};

/// Records every delivery in memory; optionally fails on demand.
class CaptureSink : public DeviceSink {
 public:
  struct Delivery {
    std::string address;
    std::string payload;
  };

  bool deliver(const std::string& address, const std::string& payload) override {
    std::lock_guard lock(mutex_);
    if (fail_) return false;
    deliveries_.push_back({address, payload});
    return true;
  }

  void set_failing(bool fail) {
    std::lock_guard lock(mutex_);
    fail_ = fail;
  }

  std::vector<Delivery> deliveries() const {
    std::lock_guard lock(mutex_);
    return deliveries_;
  }

  /// Concatenated payloads, in delivery order.
  std::string bytes() const {
    std::lock_guard lock(mutex_);
    std::string out;
    for (const auto& d : deliveries_) out += d.payload;
    return out;
  }

 private:
  mutable std::mutex mutex_;
  bool fail_ = false;
  std::vector<Delivery> deliveries_;
};

inline constexpr int kStaleAfterFailures = 3;

struct Device {
  std::string device_id;
  std::string address;
  std::int64_t next_seq = 1;
  int consecutive_failures = 0;
  bool stale = false;
  std::int64_t last_ack_ms = 0;
};

}  // namespace emo::service
