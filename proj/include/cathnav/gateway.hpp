#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>

#include "cathnav/expert.hpp"
#include "cathnav/websocket.hpp"

namespace cathnav {

struct GatewayConfig {
  enum class Kind { Oracle, Human };
  Kind kind = Kind::Oracle;
  int port = 8765;
  int deadline_ms = 10000;
  int heartbeat_ms = 5000;
};

GatewayConfig::Kind parse_gateway_kind(const std::string& s);
std::string to_string(GatewayConfig::Kind k);

// Wire messages. Each is one JSON object per WebSocket text frame.
std::string bifurcation_event_message(const CatheterEnv& env, const BifurcationEvent& ev, int episode, int deadline_ms);
std::string ack_message(bool accepted, const std::string& reason = {});
std::string pose_message(const expert::TargetPose& p);

// Parses a client pose message; throws expert::ExpertError naming the bad field.
expert::TargetPose parse_pose_message(const std::string& text);

// Publishes bifurcation events to connected UI clients and waits up to the
// deadline for a pose. An invalid pose is rejected and the event re-sent once;
// a second failure, a timeout or no client at all yields the oracle pose.
class HumanGateway : public expert::Gateway {
 public:
  HumanGateway(GatewayConfig cfg, expert::ExpertConfig expert_cfg = {});
  ~HumanGateway() override;

  expert::TargetPose request_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, int episode) override;

  int port() const { return server_.port(); }
  std::size_t clients() const { return server_.client_count(); }

  struct Stats {
    int requests = 0;
    int accepted = 0;
    int rejected = 0;
    int fallbacks = 0;
  };
  Stats stats() const;

 private:
  struct Inbound {
    int client;
    std::string text;
  };
  std::optional<Inbound> wait_message(std::chrono::steady_clock::time_point deadline);

  GatewayConfig cfg_;
  expert::ExpertConfig expert_cfg_;
  ws::Server server_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Inbound> inbox_;
  Stats stats_;
};

std::unique_ptr<expert::Gateway> make_gateway(const GatewayConfig& cfg, const expert::ExpertConfig& expert_cfg);

}  // namespace cathnav
