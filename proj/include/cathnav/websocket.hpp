#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

// Minimal RFC 6455 endpoints over loopback TCP: text, close, ping and pong
// frames, no extensions, no fragmentation on send.
namespace cathnav::ws {

class WsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

struct Frame {
  bool fin = true;
  Opcode op = Opcode::Text;
  std::string payload;
};

constexpr std::size_t kMaxPayload = 16u << 20;

std::string encode_frame(Opcode op, const std::string& payload,
                         std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt);

// Incremental parser; unmasks payloads. Server side requires masked frames.
class FrameDecoder {
 public:
  explicit FrameDecoder(bool require_mask) : require_mask_(require_mask) {}
  void feed(const char* data, std::size_t n) { buf_.append(data, n); }
  std::optional<Frame> next();

 private:
  bool require_mask_;
  std::string buf_;
};

// Sec-WebSocket-Accept for a client key.
std::string accept_key(const std::string& client_key);

// One established connection. send() may be called from any thread; recv()
// from one thread at a time.
class Connection {
 public:
  Connection(int fd, bool is_client, std::string leftover = {});
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  bool send_text(const std::string& text);
  // Next text message; answers pings, returns nullopt on close, timeout or error.
  std::optional<std::string> recv_text(std::chrono::milliseconds timeout);
  void close();
  bool open() const { return open_; }

 private:
  bool send_frame(Opcode op, const std::string& payload);

  int fd_;
  bool is_client_;
  std::atomic<bool> open_{true};
  FrameDecoder decoder_;
  std::mutex send_mu_;
  std::string partial_;  // reassembly of fragmented text
  std::uint32_t mask_state_ = 0x9E3779B9u;
};

struct ServerOptions {
  int port = 0;  // 0 picks a free port
  std::chrono::milliseconds heartbeat{5000};
  int missed_heartbeats = 3;  // silent clients are dropped after this many intervals
};

class Server {
 public:
  using MessageFn = std::function<void(int client, const std::string& text)>;
  using ConnectFn = std::function<void(int client)>;

  explicit Server(ServerOptions opts = {});
  ~Server();

  void start(MessageFn on_message, ConnectFn on_connect = {}, ConnectFn on_disconnect = {});
  void stop();
  int port() const { return port_; }
  std::size_t client_count() const;
  bool send(int client, const std::string& text);
  void broadcast(const std::string& text);

 private:
  struct Client;
  void accept_loop();
  void client_loop(std::shared_ptr<Client> c);
  void heartbeat_loop();

  ServerOptions opts_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  MessageFn on_message_;
  ConnectFn on_connect_, on_disconnect_;
  mutable std::mutex mu_;
  std::map<int, std::shared_ptr<Client>> clients_;
  int next_id_ = 1;
  std::vector<std::thread> client_threads_;
  std::thread accept_thread_, heartbeat_thread_;
  std::mutex hb_mu_;
  std::condition_variable_any hb_cv_;
};

class Client {
 public:
  // Connects to 127.0.0.1:port and completes the handshake; throws WsError.
  static std::unique_ptr<Connection> connect(int port, const std::string& path = "/",
                                             std::chrono::milliseconds timeout = std::chrono::milliseconds{2000});
};

std::string heartbeat_message();

}  // namespace cathnav::ws
