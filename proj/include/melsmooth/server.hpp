#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "melsmooth/augment.hpp"
#include "melsmooth/featureset.hpp"

namespace melsmooth::server {

// Wire protocol, all little-endian.
// Request:  "AFRQ" | u16 version=1 | u64 seed | u64 step | u64 total_steps |
//           u16 id_len | id bytes
// Response: "AFRS" | u16 version=1 | u8 status | u32 n_frames | u32 n_dims |
//           u16 l_t | u16 l_f | float32 payload
inline constexpr char kRequestMagic[4] = {'A', 'F', 'R', 'Q'};
inline constexpr char kResponseMagic[4] = {'A', 'F', 'R', 'S'};
inline constexpr std::uint16_t kVersion = 1;

enum class Status : std::uint8_t { Ok = 0, Malformed = 1, UnknownId = 2 };

struct BatchRequest {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 1;
  std::string utterance_id;
};

struct BatchResponse {
  Status status = Status::Ok;
  std::uint32_t n_frames = 0;
  std::uint32_t n_dims = 0;
  std::uint16_t l_t = 1;
  std::uint16_t l_f = 1;
  std::vector<float> payload;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

inline bool read_exact(int fd, void* dst, std::size_t n) {
  auto* p = static_cast<char*>(dst);
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_all(int fd, const void* src, std::size_t n) {
  const auto* p = static_cast<const char*>(src);
  while (n > 0) {
    const ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace detail

inline std::string encode_request(const BatchRequest& req) {
  std::string buf;
  buf.append(kRequestMagic, 4);
  detail::put_le<std::uint16_t>(buf, kVersion);
  detail::put_le<std::uint64_t>(buf, req.seed);
  detail::put_le<std::uint64_t>(buf, req.step);
  detail::put_le<std::uint64_t>(buf, req.total_steps);
  detail::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(req.utterance_id.size()));
  buf += req.utterance_id;
  return buf;
}

inline std::string encode_response(const BatchResponse& resp) {
  std::string buf;
  buf.append(kResponseMagic, 4);
  detail::put_le<std::uint16_t>(buf, kVersion);
  buf.push_back(static_cast<char>(resp.status));
  detail::put_le<std::uint32_t>(buf, resp.n_frames);
  detail::put_le<std::uint32_t>(buf, resp.n_dims);
  detail::put_le<std::uint16_t>(buf, resp.l_t);
  detail::put_le<std::uint16_t>(buf, resp.l_f);
  for (float v : resp.payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_le<std::uint32_t>(buf, bits);
  }
  return buf;
}

// Stateless batch-streaming daemon: each request is answered with
// augment_step output seeded by (request.seed, step, utterance_id). One
// handler thread per connection; the corpus index is immutable after start.
class Server {
 public:
  Server(std::map<std::string, featureset::AcousticFeature> corpus,
         augment::SmoothingPolicy policy)
      : corpus_(std::move(corpus)), policy_(policy) {}

  ~Server() { stop(); }

  // Binds and starts accepting. port 0 picks an ephemeral port.
  void start(const std::string& bind_address = "127.0.0.1", std::uint16_t port = 0) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("server: socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1)
      throw std::runtime_error("server: bad bind address " + bind_address);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw std::runtime_error("server: bind to " + bind_address + ":" +
                               std::to_string(port) + " failed");
    if (::listen(listen_fd_, 64) != 0) throw std::runtime_error("server: listen() failed");
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : handlers_)
      if (t.joinable()) t.join();
    handlers_.clear();
  }

  std::uint16_t port() const { return port_; }

  // Pure request handler, shared by the socket path and tests.
  BatchResponse handle(const BatchRequest& req) const {
    BatchResponse resp;
    if (req.step >= req.total_steps) {
      resp.status = Status::Malformed;
      return resp;
    }
    const auto it = corpus_.find(req.utterance_id);
    if (it == corpus_.end()) {
      resp.status = Status::UnknownId;
      return resp;
    }
    augment::SmoothingPolicy policy = policy_;
    policy.base_seed = req.seed;
    const augment::AugmentResult r =
        augment::augment_step(it->second, policy, req.step, req.total_steps, req.utterance_id);
    resp.n_frames = r.feature.n_frames;
    resp.n_dims = r.feature.n_dims;
    resp.l_t = static_cast<std::uint16_t>(r.l_t);
    resp.l_f = static_cast<std::uint16_t>(r.l_f);
    resp.payload = r.feature.values;
    return resp;
  }

 private:
  void accept_loop() {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) break;
      handlers_.emplace_back([this, fd] { connection_loop(fd); });
    }
  }

  void connection_loop(int fd) {
    unsigned char header[32];
    while (running_) {
      if (!detail::read_exact(fd, header, 32)) break;
      BatchRequest req;
      const bool ok = std::memcmp(header, kRequestMagic, 4) == 0 &&
                      detail::get_le<std::uint16_t>(header + 4) == kVersion;
      if (ok) {
        req.seed = detail::get_le<std::uint64_t>(header + 6);
        req.step = detail::get_le<std::uint64_t>(header + 14);
        req.total_steps = detail::get_le<std::uint64_t>(header + 22);
        const auto id_len = detail::get_le<std::uint16_t>(header + 30);
        req.utterance_id.resize(id_len);
        if (id_len > 0 && !detail::read_exact(fd, req.utterance_id.data(), id_len)) break;
      }
      BatchResponse resp;
      if (ok) {
        resp = handle(req);
      } else {
        resp.status = Status::Malformed;
      }
      const std::string frame = encode_response(resp);
      if (!detail::write_all(fd, frame.data(), frame.size())) break;
      if (resp.status == Status::Malformed) break;  // close on malformed frames
    }
    ::close(fd);
  }

  std::map<std::string, featureset::AcousticFeature> corpus_;
  augment::SmoothingPolicy policy_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::vector<std::thread> handlers_;
};

// Reference client: one request per call over a fresh connection.
inline BatchResponse client_fetch(const std::string& address, std::uint16_t port,
                                  const BatchRequest& req, int timeout_seconds = 5) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("client: socket() failed");
  timeval tv{timeout_seconds, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::runtime_error("client: bad address " + address);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw std::runtime_error("client: cannot connect to " + address + ":" +
                             std::to_string(port));
  }
  const std::string frame = encode_request(req);
  if (!detail::write_all(fd, frame.data(), frame.size())) {
    ::close(fd);
    throw std::runtime_error("client: send failed");
  }
  unsigned char header[19];
  if (!detail::read_exact(fd, header, 19)) {
    ::close(fd);
    throw std::runtime_error("client: timeout or short read on response header");
  }
  if (std::memcmp(header, kResponseMagic, 4) != 0) {
    ::close(fd);
    throw std::runtime_error("client: bad response magic");
  }
  if (detail::get_le<std::uint16_t>(header + 4) != kVersion) {
    ::close(fd);
    throw std::runtime_error("client: protocol version mismatch");
  }
  BatchResponse resp;
  resp.status = static_cast<Status>(header[6]);
  resp.n_frames = detail::get_le<std::uint32_t>(header + 7);
  resp.n_dims = detail::get_le<std::uint32_t>(header + 11);
  resp.l_t = detail::get_le<std::uint16_t>(header + 15);
  resp.l_f = detail::get_le<std::uint16_t>(header + 17);
  const std::size_t n = static_cast<std::size_t>(resp.n_frames) * resp.n_dims;
  resp.payload.resize(n);
  if (n > 0) {
    std::vector<unsigned char> raw(n * 4);
    if (!detail::read_exact(fd, raw.data(), raw.size())) {
      ::close(fd);
      throw std::runtime_error("client: timeout or short read on payload");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = detail::get_le<std::uint32_t>(raw.data() + 4 * i);
      std::memcpy(&resp.payload[i], &bits, 4);
    }
  }
  ::close(fd);
  return resp;
}

}  // namespace melsmooth::server
