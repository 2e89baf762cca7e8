#include <doctest.h>

#include <zlib.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <thread>

#include <json.hpp>

#include "cathnav/gateway.hpp"
#include "cathnav/png.hpp"
#include "cathnav/trainer.hpp"

using namespace cathnav;
using json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

std::uint32_t be32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

void wait_for_clients(const HumanGateway& gw, std::size_t n) {
  for (int i = 0; i < 200 && gw.clients() < n; ++i) std::this_thread::sleep_for(10ms);
  REQUIRE(gw.clients() == n);
}

// Reads messages until one of the given type arrives.
std::optional<json> next_of_type(ws::Connection& c, const std::string& type) {
  for (int i = 0; i < 50; ++i) {
    auto m = c.recv_text(3000ms);
    if (!m) return std::nullopt;
    auto j = json::parse(*m);
    if (j.value("type", "") == type) return j;
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("frame encode and decode round trip") {
  for (std::size_t n : {0u, 5u, 125u, 126u, 65535u, 65536u, 200000u}) {
    std::string payload(n, '\0');
    for (std::size_t i = 0; i < n; ++i) payload[i] = static_cast<char>(i * 31 + 7);
    for (bool masked : {false, true}) {
      const auto bytes = masked ? ws::encode_frame(ws::Opcode::Text, payload, std::array<std::uint8_t, 4>{1, 2, 3, 4})
                                : ws::encode_frame(ws::Opcode::Text, payload);
      ws::FrameDecoder dec(masked);
      // feed in two pieces
      dec.feed(bytes.data(), bytes.size() / 2);
      if (bytes.size() / 2 < 2) CHECK_FALSE(dec.next().has_value());
      dec.feed(bytes.data() + bytes.size() / 2, bytes.size() - bytes.size() / 2);
      const auto f = dec.next();
      REQUIRE(f.has_value());
      CHECK(f->payload == payload);
      CHECK(f->op == ws::Opcode::Text);
      CHECK(f->fin);
    }
  }
  ws::FrameDecoder strict(true);
  const auto unmasked = ws::encode_frame(ws::Opcode::Text, "hi");
  strict.feed(unmasked.data(), unmasked.size());
  CHECK_THROWS_AS(strict.next(), ws::WsError);
}

TEST_CASE("handshake accept key") {
  CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("base64 round trip") {
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_encode("fo") == "Zm8=");
  std::string bin;
  for (int i = 0; i < 256; ++i) bin.push_back(static_cast<char>(i));
  CHECK(base64_decode(base64_encode(bin)) == bin);
  CHECK_THROWS_AS(base64_decode("@@@"), std::invalid_argument);
}

TEST_CASE("PNG chunks, CRCs and pixels") {
  imaging::BinaryImage img(37, 21);
  for (int r = 0; r < 21; ++r)
    for (int c = 0; c < 37; ++c) img.set(c, r, (r * c) % 3 == 0);
  const std::string png = encode_png(img);
  CHECK(png.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  std::size_t at = 8;
  std::string idat;
  std::vector<std::string> order;
  while (at < png.size()) {
    const std::uint32_t len = be32(png, at);
    const std::string type = png.substr(at + 4, 4);
    const std::string data = png.substr(at + 8, len);
    const std::uint32_t crc = be32(png, at + 8 + len);
    uLong want = crc32(0L, Z_NULL, 0);
    want = crc32(want, reinterpret_cast<const Bytef*>(png.data() + at + 4), len + 4);
    CHECK(crc == want);
    order.push_back(type);
    if (type == "IHDR") {
      CHECK(be32(data, 0) == 37);
      CHECK(be32(data, 4) == 21);
      CHECK(static_cast<int>(data[8]) == 8);  // bit depth
      CHECK(static_cast<int>(data[9]) == 0);  // grayscale
    }
    if (type == "IDAT") idat += data;
    at += 12 + len;
  }
  CHECK(order.front() == "IHDR");
  CHECK(order.back() == "IEND");
  std::string raw(21 * 38, '\0');
  uLongf raw_len = raw.size();
  REQUIRE(uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                     idat.size()) == Z_OK);
  REQUIRE(raw_len == raw.size());
  for (int r = 0; r < 21; ++r) {
    CHECK(raw[r * 38] == 0);
    for (int c = 0; c < 37; ++c)
      CHECK(static_cast<unsigned char>(raw[r * 38 + 1 + c]) == (img.at(c, r) ? 255 : 0));
  }
}

TEST_CASE("pose message parsing") {
  expert::TargetPose p;
  p.bifurcation = 0;
  p.p_target = {560.125, 150.0625};
  p.d_target_px = 12.5;
  p.branch_id = 2;
  const auto back = parse_pose_message(pose_message(p));
  CHECK(back.p_target.x == p.p_target.x);
  CHECK(back.d_target_px == p.d_target_px);
  CHECK(back.source == expert::Source::Human);
  CHECK_THROWS_AS(parse_pose_message(R"({"type":"pose","bifurcation_id":0})"), expert::ExpertError);
  CHECK_THROWS_AS(parse_pose_message("not json"), expert::ExpertError);
  CHECK_THROWS_AS(parse_pose_message(R"({"type":"ack"})"), expert::ExpertError);
  const auto ack = json::parse(ack_message(false, "outside"));
  CHECK(ack["type"] == "ack");
  CHECK(ack["accepted"] == false);
  CHECK(ack["reason"] == "outside");
  CHECK(json::parse(ws::heartbeat_message())["type"] == "heartbeat");
}

TEST_CASE("human gateway without a client falls back to the oracle") {
  GatewayConfig cfg;
  cfg.kind = GatewayConfig::Kind::Human;
  cfg.port = 0;
  HumanGateway gw(cfg);
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  const BifurcationEvent ev{0, 1, 0.0, {1, 2}};
  const auto p = gw.request_target_pose(env, ev, 0);
  CHECK(p.source == expert::Source::Oracle);
  CHECK(gw.stats().fallbacks == 1);
}

TEST_CASE("scripted UI client drives an EIL episode") {
  GatewayConfig cfg;
  cfg.kind = GatewayConfig::Kind::Human;
  cfg.port = 0;
  cfg.deadline_ms = 5000;
  HumanGateway gw(cfg);
  const double px = 560.25, py = 170.5, d = 21.125;

  std::atomic<bool> saw_event{false}, acked{false};
  std::thread ui([&] {
    auto conn = ws::Client::connect(gw.port());
    const auto ev = next_of_type(*conn, "bifurcation");
    if (!ev) return;
    saw_event = (*ev)["daughters"].size() == 2 && !(*ev)["frame_png_base64"].get<std::string>().empty();
    json pose = {{"type", "pose"}, {"bifurcation_id", (*ev)["bifurcation_id"]}, {"P_target", {px, py}},
                 {"D_target", d}, {"branch_id", 2}};
    conn->send_text(pose.dump());
    const auto ack = next_of_type(*conn, "ack");
    acked = ack && (*ack)["accepted"] == true;
    conn->close();
  });
  wait_for_clients(gw, 1);

  train::TrainerConfig tc;
  tc.hidden = 16;
  tc.batch = 16;
  tc.schedule.warmup = 0;
  train::Trainer tr(tc, train::Mode::SacEil, 3);
  CatheterEnv env(make_fixture("y_bifurcation"));
  // near-deterministic full push so the episode reaches the bifurcation
  auto& w = tr.actor.params;
  w.assign(w.size(), 0.0);
  const std::size_t n = w.size();
  w[n - 4] = 5.0;
  w[n - 2] = -10.0;
  w[n - 1] = -10.0;
  const auto log = train::run_episode(tr, env, gw, 0);
  ui.join();
  CHECK(saw_event);
  CHECK(acked);
  REQUIRE_FALSE(log.segments.empty());
  const auto& s = log.segments.front();
  CHECK(s.source == expert::Source::Human);
  CHECK(s.p_target.x == px);
  CHECK(s.p_target.y == py);
  CHECK(s.d_target_px == d);
  CHECK(gw.stats().accepted == 1);
}

TEST_CASE("malformed poses are rejected, re-prompted once, then the oracle takes over") {
  GatewayConfig cfg;
  cfg.kind = GatewayConfig::Kind::Human;
  cfg.port = 0;
  cfg.deadline_ms = 5000;
  HumanGateway gw(cfg);
  std::atomic<int> events{0}, rejections{0};
  std::thread ui([&] {
    auto conn = ws::Client::connect(gw.port());
    for (int k = 0; k < 2; ++k) {
      const auto ev = next_of_type(*conn, "bifurcation");
      if (!ev) return;
      ++events;
      // P_target far outside every lumen
      json pose = {{"type", "pose"}, {"bifurcation_id", (*ev)["bifurcation_id"]}, {"P_target", {5.0, 700.0}},
                   {"D_target", 1.0}, {"branch_id", 2}};
      conn->send_text(k == 0 ? pose.dump() : std::string("{\"type\":\"pose\""));
      const auto ack = next_of_type(*conn, "ack");
      if (ack && (*ack)["accepted"] == false && ack->contains("reason")) ++rejections;
    }
    conn->close();
  });
  wait_for_clients(gw, 1);
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  const BifurcationEvent ev{0, 1, 0.0, {1, 2}};
  const auto p = gw.request_target_pose(env, ev, 0);
  ui.join();
  CHECK(p.source == expert::Source::Oracle);
  CHECK(events == 2);
  CHECK(rejections == 2);
  CHECK(gw.stats().rejected == 2);
  CHECK(gw.stats().fallbacks == 1);
}

TEST_CASE("server heartbeats and drops silent clients") {
  ws::ServerOptions opts;
  opts.heartbeat = 50ms;
  opts.missed_heartbeats = 3;
  ws::Server server(opts);
  server.start([](int, const std::string&) {});
  auto conn = ws::Client::connect(server.port());
  const auto hb = conn->recv_text(1000ms);
  REQUIRE(hb.has_value());
  CHECK(json::parse(*hb)["type"] == "heartbeat");
  // a client that never answers is dropped after three intervals
  for (int i = 0; i < 100 && server.client_count() > 0; ++i) std::this_thread::sleep_for(10ms);
  CHECK(server.client_count() == 0);

  auto live = ws::Client::connect(server.port());
  for (int i = 0; i < 8; ++i) {
    live->send_text(ws::heartbeat_message());
    std::this_thread::sleep_for(40ms);
  }
  CHECK(server.client_count() == 1);
  server.stop();
}
