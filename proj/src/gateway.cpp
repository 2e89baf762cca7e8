#include "cathnav/gateway.hpp"

#include <cmath>

#include <json.hpp>

#include "cathnav/png.hpp"

namespace cathnav {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

GatewayConfig::Kind parse_gateway_kind(const std::string& s) {
  if (s == "oracle") return GatewayConfig::Kind::Oracle;
  if (s == "human") return GatewayConfig::Kind::Human;
  throw std::invalid_argument("unknown gateway kind '" + s + "' (expected oracle or human)");
}

std::string to_string(GatewayConfig::Kind k) { return k == GatewayConfig::Kind::Human ? "human" : "oracle"; }

std::string bifurcation_event_message(const CatheterEnv& env, const BifurcationEvent& ev, int episode,
                                      int deadline_ms) {
  const auto& map = env.map();
  json daughters = json::array();
  for (int id : map.bifurcations.at(ev.bifurcation).daughters) {
    const auto& pl = map.edges[id].polyline;
    const Vec2 t = tangent_at(pl, 0.0);
    json pts = json::array();
    for (const auto& p : pl) pts.push_back({p.x, p.y});
    daughters.push_back({{"id", id}, {"tangent_deg", rad2deg(std::atan2(t.y, t.x))}, {"centerline_px", pts}});
  }
  json j = {{"type", "bifurcation"},
            {"episode", episode},
            {"frame_png_base64", base64_encode(encode_png(env.render_mask()))},
            {"bifurcation_id", ev.bifurcation},
            {"daughters", daughters},
            {"deadline_ms", deadline_ms}};
  return j.dump();
}

std::string ack_message(bool accepted, const std::string& reason) {
  json j = {{"type", "ack"}, {"accepted", accepted}};
  if (!reason.empty()) j["reason"] = reason;
  return j.dump();
}

std::string pose_message(const expert::TargetPose& p) {
  json j = {{"type", "pose"},
            {"bifurcation_id", p.bifurcation},
            {"P_target", {p.p_target.x, p.p_target.y}},
            {"D_target", p.d_target_px},
            {"branch_id", p.branch_id}};
  return j.dump();
}

expert::TargetPose parse_pose_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw expert::ExpertError(std::string("malformed pose message: ") + e.what());
  }
  auto field = [&](const char* name) -> const json& {
    if (!j.is_object() || !j.contains(name)) throw expert::ExpertError(std::string("pose message lacks ") + name);
    return j.at(name);
  };
  expert::TargetPose p;
  p.source = expert::Source::Human;
  try {
    if (field("type").get<std::string>() != "pose") throw expert::ExpertError("not a pose message");
    p.bifurcation = field("bifurcation_id").get<int>();
    const auto pt = field("P_target").get<std::vector<double>>();
    if (pt.size() != 2) throw expert::ExpertError("P_target must hold two numbers");
    p.p_target = {pt[0], pt[1]};
    p.d_target_px = field("D_target").get<double>();
    p.branch_id = field("branch_id").get<int>();
  } catch (const json::exception& e) {
    throw expert::ExpertError(std::string("malformed pose message: ") + e.what());
  }
  return p;
}

HumanGateway::HumanGateway(GatewayConfig cfg, expert::ExpertConfig expert_cfg)
    : cfg_(cfg),
      expert_cfg_(expert_cfg),
      server_(ws::ServerOptions{cfg.port, std::chrono::milliseconds{cfg.heartbeat_ms}, 3}) {
  server_.start([this](int client, const std::string& text) {
    {
      std::lock_guard lock(mu_);
      inbox_.push_back({client, text});
    }
    cv_.notify_all();
  });
}

HumanGateway::~HumanGateway() { server_.stop(); }

HumanGateway::Stats HumanGateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::optional<HumanGateway::Inbound> HumanGateway::wait_message(Clock::time_point deadline) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_until(lock, deadline, [this] { return !inbox_.empty(); })) return std::nullopt;
  Inbound m = std::move(inbox_.front());
  inbox_.pop_front();
  return m;
}

expert::TargetPose HumanGateway::request_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, int episode) {
  const expert::TargetPose oracle = expert::oracle_target_pose(env, ev, expert_cfg_);
  {
    std::lock_guard lock(mu_);
    ++stats_.requests;
    inbox_.clear();  // anything queued belongs to an earlier event
  }
  auto fallback = [&] {
    std::lock_guard lock(mu_);
    ++stats_.fallbacks;
    return oracle;
  };
  if (server_.client_count() == 0) return fallback();

  const auto deadline = Clock::now() + std::chrono::milliseconds{cfg_.deadline_ms};
  auto publish = [&] {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    server_.broadcast(bifurcation_event_message(env, ev, episode, static_cast<int>(std::max<long>(left, 0))));
  };
  publish();
  int failures = 0;
  while (auto msg = wait_message(deadline)) {
    json j = json::parse(msg->text, nullptr, false);
    if (j.is_object() && j.value("type", "") == "heartbeat") continue;
    std::string reason;
    try {
      expert::TargetPose p = parse_pose_message(msg->text);
      p.advance_direction = oracle.advance_direction;
      if (auto bad = expert::check_target_pose(env, ev, p)) {
        reason = *bad;
      } else {
        server_.send(msg->client, ack_message(true));
        std::lock_guard lock(mu_);
        ++stats_.accepted;
        return p;
      }
    } catch (const expert::ExpertError& e) {
      reason = e.what();
    }
    server_.send(msg->client, ack_message(false, reason));
    {
      std::lock_guard lock(mu_);
      ++stats_.rejected;
    }
    if (++failures >= 2) break;
    publish();
  }
  return fallback();
}

std::unique_ptr<expert::Gateway> make_gateway(const GatewayConfig& cfg, const expert::ExpertConfig& expert_cfg) {
  if (cfg.kind == GatewayConfig::Kind::Human) return std::make_unique<HumanGateway>(cfg, expert_cfg);
  return std::make_unique<expert::OracleGateway>(expert_cfg);
}

}  // namespace cathnav
