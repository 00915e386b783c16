#pragma once

// Frame layout:
//   u32 big-endian L | header (UTF-8 JSON, one line) | '\n' | payload
// L counts the header text, the newline and the payload. The header always
// carries "type" and "seq"; session-bound messages carry "session_id"; a
// non-empty payload is declared by "payload_bytes" (plus its image layout in
// height/width/channels/count where applicable).

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "cfsl/error.hpp"

namespace cfsl::wire {

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

namespace msg {
inline constexpr const char* kHello = "HELLO";
inline constexpr const char* kSession = "SESSION";
inline constexpr const char* kNextSupport = "NEXT_SUPPORT";
inline constexpr const char* kSupport = "SUPPORT";
inline constexpr const char* kStoreBytes = "STORE_BYTES";
inline constexpr const char* kAck = "ACK";
inline constexpr const char* kGetTarget = "GET_TARGET";
inline constexpr const char* kTarget = "TARGET";
inline constexpr const char* kPredict = "PREDICT";
inline constexpr const char* kScore = "SCORE";
inline constexpr const char* kError = "ERROR";
}  // namespace msg

struct Frame {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::uint8_t> payload;

  std::string type() const { return header.value("type", std::string()); }
};

inline Frame make_frame(const std::string& type, std::uint64_t seq) {
  Frame f;
  f.header["type"] = type;
  f.header["seq"] = seq;
  return f;
}

inline std::vector<std::uint8_t> encode(const Frame& frame) {
  nlohmann::json header = frame.header;
  if (!frame.payload.empty()) header["payload_bytes"] = frame.payload.size();
  const std::string text = header.dump();
  const std::uint64_t body = text.size() + 1 + frame.payload.size();
  if (body > kMaxFrameBytes) throw Error(ErrorCode::Protocol, "frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + body);
  for (int shift = 24; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>((body >> shift) & 0xFF));
  out.insert(out.end(), text.begin(), text.end());
  out.push_back('\n');
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

/// Parses a frame body (everything after the length prefix). Throws Protocol
/// on anything malformed.
inline Frame decode_body(std::span<const std::uint8_t> body) {
  const auto* nl = static_cast<const std::uint8_t*>(std::memchr(body.data(), '\n', body.size()));
  if (nl == nullptr) throw Error(ErrorCode::Protocol, "header not newline-terminated");
  const auto header_len = static_cast<std::size_t>(nl - body.data());
  Frame f;
  try {
    f.header = nlohmann::json::parse(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Protocol, std::string("bad header: ") + e.what());
  }
  if (!f.header.is_object() || !f.header.contains("type") || !f.header["type"].is_string())
    throw Error(ErrorCode::Protocol, "header lacks a string 'type'");
  if (!f.header.contains("seq") || !f.header["seq"].is_number_unsigned())
    throw Error(ErrorCode::Protocol, "header lacks an unsigned 'seq'");
  const std::size_t payload_len = body.size() - header_len - 1;
  std::uint64_t declared = 0;
  if (f.header.contains("payload_bytes")) {
    if (!f.header["payload_bytes"].is_number_unsigned())
      throw Error(ErrorCode::Protocol, "payload_bytes must be unsigned");
    declared = f.header["payload_bytes"].get<std::uint64_t>();
  }
  if (declared != payload_len)
    throw Error(ErrorCode::Protocol, "payload length " + std::to_string(payload_len) +
                                         " != declared " + std::to_string(declared));
  f.payload.assign(nl + 1, body.data() + body.size());
  return f;
}

inline Frame decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::Protocol, "short frame");
  const std::uint32_t len = (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
                            (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
  if (len != bytes.size() - 4) throw Error(ErrorCode::Protocol, "length prefix mismatch");
  return decode_body(bytes.subspan(4));
}

// -- blocking socket I/O ----------------------------------------------------------

/// Owns a file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// false on orderly EOF before the first byte; throws on error or mid-read EOF.
inline bool read_exact(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::Protocol, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Protocol, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Protocol, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(r);
  }
}

/// nullopt on orderly EOF between frames.
inline std::optional<Frame> read_frame(int fd) {
  std::uint8_t prefix[4];
  if (!read_exact(fd, prefix, 4)) return std::nullopt;
  const std::uint32_t len = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                            (std::uint32_t{prefix[2]} << 8) | std::uint32_t{prefix[3]};
  if (len > kMaxFrameBytes) throw Error(ErrorCode::Protocol, "frame exceeds size limit");
  std::vector<std::uint8_t> body(len);
  if (len > 0 && !read_exact(fd, body.data(), len))
    throw Error(ErrorCode::Protocol, "connection closed mid-frame");
  return decode_body(body);
}

inline void write_frame(int fd, const Frame& frame) { write_all(fd, encode(frame)); }

/// Splits "host:port"; the host may be empty (all interfaces).
inline std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::Config, "expected HOST:PORT, got " + address);
  const auto digits = address.substr(colon + 1);
  if (digits.empty() || digits.size() > 5 ||
      digits.find_first_not_of("0123456789") != std::string::npos)
    throw Error(ErrorCode::Config, "bad port in " + address);
  const auto port = std::stoul(digits);
  if (port > 65535) throw Error(ErrorCode::Config, "port out of range: " + address);
  return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

inline Socket connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.empty() ? "127.0.0.1" : host.c_str(), service.c_str(),
                                   &hints, &res);
      rc != 0)
    throw Error(ErrorCode::Protocol, std::string("resolve: ") + ::gai_strerror(rc));
  Socket sock;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      sock = std::move(s);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!sock.valid())
    throw Error(ErrorCode::Protocol, "cannot connect to " + host + ":" + std::to_string(port));
  const int one = 1;
  ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

/// Minimal synchronous client: one request, one response.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port) : sock_(connect_tcp(host, port)) {}

  Frame request(const Frame& frame) {
    write_frame(sock_.fd(), frame);
    auto reply = read_frame(sock_.fd());
    if (!reply) throw Error(ErrorCode::Protocol, "server closed the connection");
    return std::move(*reply);
  }

  void send_raw(std::span<const std::uint8_t> bytes) { write_all(sock_.fd(), bytes); }
  std::optional<Frame> receive() { return read_frame(sock_.fd()); }

 private:
  Socket sock_;
};

}  // namespace cfsl::wire
