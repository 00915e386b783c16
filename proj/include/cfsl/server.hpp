#pragma once

// Episode server. EpisodeService is the transport-free protocol engine
// (frame in, frame out); EpisodeServer puts it behind a TCP listener with one
// thread per connection.
//
// Requests and replies (all headers also carry "seq"; replies echo it):
//   HELLO {version, episode_index?}  -> SESSION {session_id, version, config,
//                                       height, width, channels, episode_index,
//                                       target_size}
//   NEXT_SUPPORT {session_id, index?} -> SUPPORT {index, count, height, width,
//                                       channels, labels} + pixels
//   STORE_BYTES {session_id, bytes, tag?, element_width?} -> ACK {total_bytes,
//                                       peak_bytes}
//   GET_TARGET {session_id}           -> TARGET {count, height, width, channels}
//                                       + pixels
//   PREDICT {session_id, labels}      -> SCORE {accuracy, correct, total, atm,
//                                       memory_bytes, episode_index}
// Any rejected request gets ERROR {code, message}; the session stays usable.
// A frame that cannot be parsed closes the connection.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "cfsl/config.hpp"
#include "cfsl/error.hpp"
#include "cfsl/pack.hpp"
#include "cfsl/sampler.hpp"
#include "cfsl/session.hpp"
#include "cfsl/wire.hpp"

namespace cfsl {

class EpisodeService {
 public:
  using Clock = std::chrono::steady_clock;

  EpisodeService(std::shared_ptr<const DatasetPack> pack, TaskConfig config,
                 std::chrono::milliseconds idle_timeout = std::chrono::seconds(300))
      : pack_(std::move(pack)), config_(config), idle_timeout_(idle_timeout) {
    check_feasible(*pack_, config_);
  }

  const TaskConfig& config() const { return config_; }

  wire::Frame handle(const wire::Frame& request, const std::string& peer = "",
                     Clock::time_point now = Clock::now()) {
    const auto type = request.type();
    const auto seq = request.header.value("seq", std::uint64_t{0});
    expire_idle(now);
    try {
      if (type == wire::msg::kHello) return hello(request, seq, peer, now);
      if (type != wire::msg::kNextSupport && type != wire::msg::kStoreBytes &&
          type != wire::msg::kGetTarget && type != wire::msg::kPredict)
        return error(seq, request, "unknown_type", "unknown message type '" + type + "'");
      return dispatch(type, request, seq, now);
    } catch (const nlohmann::json::exception& e) {
      return error(seq, request, "bad_request", e.what());
    }
  }

  /// Session-side accept/reject log, for protocol conformance checks.
  std::vector<TranscriptEntry> transcript(std::uint64_t session_id) const {
    std::lock_guard lock(mu_);
    auto it = slots_.find(session_id);
    if (it == slots_.end()) return {};
    std::lock_guard slot_lock(it->second->mu);
    return it->second->session.transcript();
  }

  std::size_t live_sessions() const {
    std::lock_guard lock(mu_);
    return slots_.size();
  }

 private:
  struct Slot {
    Slot(std::shared_ptr<const DatasetPack> pack, Episode ep, std::string peer_name)
        : session(std::move(pack), std::move(ep)), peer(std::move(peer_name)) {}

    std::mutex mu;
    EpisodeSession session;
    std::string peer;
    std::uint64_t last_seq = 0;
    bool any_seq = false;
    Clock::time_point deadline;
    std::uint64_t store_counter = 0;
  };

  static wire::Frame error(std::uint64_t seq, const wire::Frame& request, const std::string& code,
                           const std::string& message) {
    auto f = wire::make_frame(wire::msg::kError, seq);
    if (request.header.contains("session_id")) f.header["session_id"] = request.header["session_id"];
    f.header["code"] = code;
    f.header["message"] = message;
    return f;
  }

  void expire_idle(Clock::time_point now) {
    std::lock_guard lock(mu_);
    for (auto it = slots_.begin(); it != slots_.end();) {
      if (it->second->deadline <= now) {
        {
          std::lock_guard slot_lock(it->second->mu);
          it->second->session.close();
        }
        expired_.insert(it->first);
        it = slots_.erase(it);
      } else {
        ++it;
      }
    }
  }

  wire::Frame hello(const wire::Frame& req, std::uint64_t seq, const std::string& peer,
                    Clock::time_point now) {
    if (!req.header.contains("version") || !req.header["version"].is_number_unsigned() ||
        req.header["version"].get<std::uint64_t>() != wire::kProtocolVersion)
      return error(seq, req, "unsupported_version",
                   "server speaks version " + std::to_string(wire::kProtocolVersion));
    const std::uint64_t index = req.header.contains("episode_index")
                                    ? req.header["episode_index"].get<std::uint64_t>()
                                    : next_episode_.fetch_add(1);
    auto slot = std::make_shared<Slot>(pack_, sample_episode(*pack_, config_, index), peer);
    slot->deadline = now + idle_timeout_;
    slot->last_seq = seq;
    slot->any_seq = true;
    std::uint64_t id = 0;
    {
      std::lock_guard lock(mu_);
      id = next_session_id_++;
      slots_.emplace(id, slot);
    }
    auto f = wire::make_frame(wire::msg::kSession, seq);
    f.header["session_id"] = id;
    f.header["version"] = wire::kProtocolVersion;
    f.header["config"] = to_json(config_);
    f.header["height"] = pack_->height();
    f.header["width"] = pack_->width();
    f.header["channels"] = pack_->channels();
    f.header["episode_index"] = index;
    f.header["target_size"] = slot->session.target_size();
    return f;
  }

  wire::Frame dispatch(const std::string& type, const wire::Frame& req, std::uint64_t seq,
                       Clock::time_point now) {
    if (!req.header.contains("session_id"))
      return error(seq, req, "unknown_session", "missing session_id");
    const auto id = req.header["session_id"].get<std::uint64_t>();
    std::shared_ptr<Slot> slot;
    {
      std::lock_guard lock(mu_);
      auto it = slots_.find(id);
      if (it == slots_.end()) {
        if (expired_.count(id)) return error(seq, req, "session_expired", "session idled out");
        return error(seq, req, "unknown_session", "no session " + std::to_string(id));
      }
      slot = it->second;
    }
    std::lock_guard slot_lock(slot->mu);
    if (slot->any_seq && seq <= slot->last_seq)
      return error(seq, req, "bad_sequence",
                   "seq must exceed " + std::to_string(slot->last_seq));
    slot->last_seq = seq;
    slot->any_seq = true;
    slot->deadline = now + idle_timeout_;
    auto& session = slot->session;
    try {
      if (type == wire::msg::kNextSupport) {
        const auto s = req.header.contains("index")
                           ? session.support(req.header["index"].get<std::uint32_t>())
                           : session.next_support();
        auto f = wire::make_frame(wire::msg::kSupport, seq);
        f.header["session_id"] = id;
        f.header["index"] = s.position;
        f.header["count"] = s.size();
        f.header["height"] = s.geometry.height;
        f.header["width"] = s.geometry.width;
        f.header["channels"] = s.geometry.channels;
        f.header["labels"] = s.labels;
        f.payload = s.pixels;
        return f;
      }
      if (type == wire::msg::kStoreBytes) {
        const auto bytes = req.header.at("bytes").get<std::uint64_t>();
        const auto tag = req.header.contains("tag")
                             ? req.header["tag"].get<std::string>()
                             : "client/" + std::to_string(slot->store_counter++);
        session.store_accounted(tag, bytes, req.header.value("element_width", 4u));
        auto f = wire::make_frame(wire::msg::kAck, seq);
        f.header["session_id"] = id;
        f.header["total_bytes"] = session.memory().total_bytes();
        f.header["peak_bytes"] = session.memory().peak_bytes();
        return f;
      }
      if (type == wire::msg::kGetTarget) {
        auto t = session.request_target();
        auto f = wire::make_frame(wire::msg::kTarget, seq);
        f.header["session_id"] = id;
        f.header["count"] = t.count;
        f.header["height"] = t.geometry.height;
        f.header["width"] = t.geometry.width;
        f.header["channels"] = t.geometry.channels;
        f.payload = std::move(t.pixels);
        return f;
      }
      const auto labels = req.header.at("labels").get<std::vector<std::uint32_t>>();
      const auto score = session.submit_predictions(labels);
      auto f = wire::make_frame(wire::msg::kScore, seq);
      f.header["session_id"] = id;
      f.header["accuracy"] = score.accuracy;
      f.header["correct"] = score.correct;
      f.header["total"] = score.total;
      f.header["atm"] = score.atm.atm;
      f.header["memory_bytes"] = score.memory_bytes;
      f.header["episode_index"] = session.episode_index();
      return f;
    } catch (const Error& e) {
      return error(seq, req, std::string(error_code_name(e.code())), e.what());
    }
  }

  std::shared_ptr<const DatasetPack> pack_;
  TaskConfig config_;
  std::chrono::milliseconds idle_timeout_;
  std::atomic<std::uint64_t> next_episode_{0};

  mutable std::mutex mu_;
  std::uint64_t next_session_id_ = 1;
  std::map<std::uint64_t, std::shared_ptr<Slot>> slots_;
  std::set<std::uint64_t> expired_;
};

class EpisodeServer {
 public:
  explicit EpisodeServer(std::shared_ptr<EpisodeService> service) : service_(std::move(service)) {}
  ~EpisodeServer() { stop(); }

  EpisodeServer(const EpisodeServer&) = delete;
  EpisodeServer& operator=(const EpisodeServer&) = delete;

  /// Binds and listens; port 0 picks an ephemeral port (see port()).
  void bind(const std::string& host, std::uint16_t port) {
    listener_ = wire::Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_.valid()) throw Error(ErrorCode::Protocol, "socket() failed");
    const int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string h = host.empty() || host == "*" ? "0.0.0.0" : host == "localhost" ? "127.0.0.1" : host;
    if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1)
      throw Error(ErrorCode::Config, "bad IPv4 bind address '" + host + "'");
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw Error(ErrorCode::Protocol, "bind " + h + ":" + std::to_string(port) + ": " +
                                           std::strerror(errno));
    if (::listen(listener_.fd(), 64) != 0) throw Error(ErrorCode::Protocol, "listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  std::uint16_t port() const { return port_; }

  /// Accept loop; returns after stop().
  void serve() {
    while (!stopping_) {
      sockaddr_in peer{};
      socklen_t len = sizeof peer;
      const int fd = ::accept(listener_.fd(), reinterpret_cast<sockaddr*>(&peer), &len);
      if (fd < 0) {
        if (stopping_) break;
        if (errno == EINTR || errno == ECONNABORTED) continue;
        break;
      }
      char buf[INET_ADDRSTRLEN] = {};
      ::inet_ntop(AF_INET, &peer.sin_addr, buf, sizeof buf);
      const std::string name = std::string(buf) + ":" + std::to_string(ntohs(peer.sin_port));
      std::lock_guard lock(mu_);
      connections_.insert(fd);
      // TODO: reap finished workers; handles of closed connections are only joined in stop().
      workers_.emplace_back([this, fd, name] { connection(fd, name); });
    }
  }

  void start() {
    acceptor_ = std::thread([this] { serve(); });
  }

  /// Async-signal-safe: makes serve() return without joining anything.
  void interrupt() noexcept {
    stopping_ = true;
    if (listener_.valid()) ::shutdown(listener_.fd(), SHUT_RDWR);
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    interrupt();
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(mu_);
      for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
      workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    listener_.reset();
  }

 private:
  void connection(int fd, const std::string& peer) {
    wire::Socket sock(fd);
    try {
      while (auto request = wire::read_frame(fd)) {
        wire::write_frame(fd, service_->handle(*request, peer));
      }
    } catch (const Error&) {
      // malformed frame or broken pipe: drop the connection
    }
    std::lock_guard lock(mu_);
    connections_.erase(fd);
  }

  std::shared_ptr<EpisodeService> service_;
  wire::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::set<int> connections_;
  std::vector<std::thread> workers_;
};

}  // namespace cfsl
