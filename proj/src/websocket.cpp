#include "cathnav/websocket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <random>

#include "cathnav/png.hpp"

namespace cathnav::ws {

using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

namespace {

constexpr const char* kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Waits for readability; false on timeout.
bool wait_readable(int fd, milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0 && errno == EINTR) continue;
    return r > 0;
  }
}

// Reads an HTTP header block; whatever follows the blank line is returned in rest.
std::optional<std::string> read_http_head(int fd, milliseconds timeout, std::string& rest) {
  const auto deadline = Clock::now() + timeout;
  std::string buf;
  char tmp[1024];
  while (buf.find("\r\n\r\n") == std::string::npos) {
    const auto left = std::chrono::duration_cast<milliseconds>(deadline - Clock::now());
    if (left.count() <= 0 || !wait_readable(fd, left)) return std::nullopt;
    const ssize_t n = ::recv(fd, tmp, sizeof(tmp), 0);
    if (n <= 0) return std::nullopt;
    buf.append(tmp, static_cast<std::size_t>(n));
    if (buf.size() > 16384) return std::nullopt;
  }
  const auto end = buf.find("\r\n\r\n") + 4;
  rest = buf.substr(end);
  return buf.substr(0, end);
}

std::optional<std::string> header_value(const std::string& head, const std::string& name) {
  std::string lower = head;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::string key = "\r\n" + name + ":";
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto pos = lower.find(key);
  if (pos == std::string::npos) return std::nullopt;
  auto start = pos + key.size();
  const auto stop = head.find("\r\n", start);
  while (start < stop && (head[start] == ' ' || head[start] == '\t')) ++start;
  auto last = stop;
  while (last > start && (head[last - 1] == ' ' || head[last - 1] == '\t')) --last;
  return head.substr(start, last - start);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<milliseconds>(Clock::now().time_since_epoch()).count();
}

}  // namespace

std::string encode_frame(Opcode op, const std::string& payload, std::optional<std::array<std::uint8_t, 4>> mask) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mbit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mbit | 127));
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> s) & 0xFF));
  }
  if (!mask) return out + payload;
  for (auto b : *mask) out.push_back(static_cast<char>(b));
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ (*mask)[i % 4]));
  return out;
}

std::optional<Frame> FrameDecoder::next() {
  const auto* p = reinterpret_cast<const std::uint8_t*>(buf_.data());
  const std::size_t have = buf_.size();
  if (have < 2) return std::nullopt;
  Frame f;
  f.fin = (p[0] & 0x80) != 0;
  if (p[0] & 0x70) throw WsError("reserved frame bits set");
  f.op = static_cast<Opcode>(p[0] & 0x0F);
  const bool masked = (p[1] & 0x80) != 0;
  if (require_mask_ && !masked) throw WsError("client frame is not masked");
  std::uint64_t len = p[1] & 0x7F;
  std::size_t off = 2;
  if (len == 126) {
    if (have < 4) return std::nullopt;
    len = (std::uint64_t{p[2]} << 8) | p[3];
    off = 4;
  } else if (len == 127) {
    if (have < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | p[2 + i];
    off = 10;
  }
  if (len > kMaxPayload) throw WsError("frame payload too large");
  std::array<std::uint8_t, 4> key{};
  if (masked) {
    if (have < off + 4) return std::nullopt;
    std::copy_n(p + off, 4, key.begin());
    off += 4;
  }
  if (have < off + len) return std::nullopt;
  f.payload = buf_.substr(off, static_cast<std::size_t>(len));
  if (masked)
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ key[i % 4]);
  buf_.erase(0, off + static_cast<std::size_t>(len));
  return f;
}

std::string accept_key(const std::string& client_key) {
  const std::string s = client_key + kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
  return base64_encode(std::string(reinterpret_cast<const char*>(digest), SHA_DIGEST_LENGTH));
}

std::string heartbeat_message() { return R"({"type":"heartbeat"})"; }

Connection::Connection(int fd, bool is_client, std::string leftover)
    : fd_(fd), is_client_(is_client), decoder_(!is_client) {
  if (!leftover.empty()) decoder_.feed(leftover.data(), leftover.size());
  mask_state_ ^= static_cast<std::uint32_t>(fd);
}

Connection::~Connection() {
  close();
  ::close(fd_);
}

bool Connection::send_frame(Opcode op, const std::string& payload) {
  std::lock_guard lock(send_mu_);
  if (!open_ && op != Opcode::Close) return false;
  std::optional<std::array<std::uint8_t, 4>> mask;
  if (is_client_) {
    // xorshift; masking only needs to be unpredictable to intermediaries
    mask_state_ ^= mask_state_ << 13;
    mask_state_ ^= mask_state_ >> 17;
    mask_state_ ^= mask_state_ << 5;
    mask = std::array<std::uint8_t, 4>{static_cast<std::uint8_t>(mask_state_), static_cast<std::uint8_t>(mask_state_ >> 8),
                                       static_cast<std::uint8_t>(mask_state_ >> 16),
                                       static_cast<std::uint8_t>(mask_state_ >> 24)};
  }
  return write_all(fd_, encode_frame(op, payload, mask));
}

bool Connection::send_text(const std::string& text) {
  if (!open_) return false;
  if (!send_frame(Opcode::Text, text)) {
    open_ = false;
    return false;
  }
  return true;
}

void Connection::close() {
  if (open_.exchange(false)) {
    send_frame(Opcode::Close, std::string("\x03\xe8", 2));
    ::shutdown(fd_, SHUT_RDWR);
  }
}

std::optional<std::string> Connection::recv_text(milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  char tmp[4096];
  while (open_) {
    std::optional<Frame> f;
    try {
      f = decoder_.next();
    } catch (const WsError&) {
      close();
      return std::nullopt;
    }
    if (f) {
      switch (f->op) {
        case Opcode::Ping:
          send_frame(Opcode::Pong, f->payload);
          continue;
        case Opcode::Pong:
          continue;
        case Opcode::Close:
          close();
          return std::nullopt;
        case Opcode::Text:
        case Opcode::Continuation:
          partial_ += f->payload;
          if (!f->fin) continue;
          return std::exchange(partial_, {});
        default:
          continue;  // binary frames are not part of the protocol
      }
    }
    const auto left = std::chrono::duration_cast<milliseconds>(deadline - Clock::now());
    if (left.count() <= 0 || !wait_readable(fd_, left)) return std::nullopt;
    const ssize_t n = ::recv(fd_, tmp, sizeof(tmp), 0);
    if (n <= 0) {
      open_ = false;
      return std::nullopt;
    }
    decoder_.feed(tmp, static_cast<std::size_t>(n));
  }
  return std::nullopt;
}

struct Server::Client {
  int id = 0;
  std::unique_ptr<Connection> conn;
  std::atomic<std::int64_t> last_seen_ms{0};
};

Server::Server(ServerOptions opts) : opts_(opts) {}

Server::~Server() { stop(); }

void Server::start(MessageFn on_message, ConnectFn on_connect, ConnectFn on_disconnect) {
  if (running_) throw WsError("server already running");
  on_message_ = std::move(on_message);
  on_connect_ = std::move(on_connect);
  on_disconnect_ = std::move(on_disconnect);

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw WsError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(opts_.port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 8) < 0) {
    const std::string err = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw WsError("cannot listen on port " + std::to_string(opts_.port) + ": " + err);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  hb_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& [id, c] : clients_) c->conn->close();
  }
  // client threads notice running_ == false within one poll interval
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    threads = std::move(client_threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
  std::lock_guard lock(mu_);
  clients_.clear();
  ::close(listen_fd_);
  listen_fd_ = -1;
}

std::size_t Server::client_count() const {
  std::lock_guard lock(mu_);
  return clients_.size();
}

bool Server::send(int client, const std::string& text) {
  std::shared_ptr<Client> c;
  {
    std::lock_guard lock(mu_);
    auto it = clients_.find(client);
    if (it == clients_.end()) return false;
    c = it->second;
  }
  return c->conn->send_text(text);
}

void Server::broadcast(const std::string& text) {
  std::vector<std::shared_ptr<Client>> all;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, c] : clients_) all.push_back(c);
  }
  for (auto& c : all) c->conn->send_text(text);
}

void Server::accept_loop() {
  while (running_) {
    if (!wait_readable(listen_fd_, milliseconds{100})) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::string rest;
    const auto head = read_http_head(fd, milliseconds{2000}, rest);
    const auto key = head ? header_value(*head, "Sec-WebSocket-Key") : std::nullopt;
    if (!head || head->rfind("GET ", 0) != 0 || !key) {
      write_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      ::close(fd);
      continue;
    }
    write_all(fd, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                  "Sec-WebSocket-Accept: " + accept_key(*key) + "\r\n\r\n");
    auto c = std::make_shared<Client>();
    c->conn = std::make_unique<Connection>(fd, false, rest);
    c->last_seen_ms = now_ms();
    {
      std::lock_guard lock(mu_);
      c->id = next_id_++;
      clients_[c->id] = c;
      client_threads_.emplace_back([this, c] { client_loop(c); });
    }
    if (on_connect_) on_connect_(c->id);
  }
}

void Server::client_loop(std::shared_ptr<Client> c) {
  while (running_ && c->conn->open()) {
    auto msg = c->conn->recv_text(milliseconds{100});
    if (!msg) continue;
    c->last_seen_ms = now_ms();
    if (on_message_) on_message_(c->id, *msg);
  }
  {
    std::lock_guard lock(mu_);
    clients_.erase(c->id);
  }
  if (on_disconnect_) on_disconnect_(c->id);
}

void Server::heartbeat_loop() {
  std::unique_lock lock(hb_mu_);
  while (running_) {
    hb_cv_.wait_for(lock, opts_.heartbeat, [this] { return !running_; });
    if (!running_) break;
    broadcast(heartbeat_message());
    const std::int64_t limit = opts_.heartbeat.count() * opts_.missed_heartbeats;
    std::lock_guard clock(mu_);
    for (auto& [id, c] : clients_)
      if (now_ms() - c->last_seen_ms > limit) c->conn->close();
  }
}

std::unique_ptr<Connection> Client::connect(int port, const std::string& path, milliseconds timeout) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw WsError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw WsError("cannot connect to port " + std::to_string(port) + ": " + err);
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  std::random_device rd;
  std::string nonce(16, '\0');
  for (auto& ch : nonce) ch = static_cast<char>(rd() & 0xFF);
  const std::string key = base64_encode(nonce);
  write_all(fd, "GET " + path + " HTTP/1.1\r\nHost: 127.0.0.1:" + std::to_string(port) +
                    "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                    "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  std::string rest;
  const auto head = read_http_head(fd, timeout, rest);
  const auto accept = head ? header_value(*head, "Sec-WebSocket-Accept") : std::nullopt;
  if (!head || head->find(" 101 ") == std::string::npos || !accept || *accept != accept_key(key)) {
    ::close(fd);
    throw WsError("websocket handshake failed");
  }
  return std::make_unique<Connection>(fd, true, rest);
}

}  // namespace cathnav::ws
